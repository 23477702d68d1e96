#include "unlearn/methods.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace unlearn {

namespace {

constexpr double kRatioGuard = 1e-12;
constexpr double kLossFloor = 1e-8;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Checkpoint make_checkpoint(ParamVector params, const ModelConfig& model, const UnlearnConfig& cfg,
                           double wall_seconds) {
    Checkpoint ckpt;
    ckpt.params = std::move(params);
    ckpt.model = model;
    ckpt.provenance.role = "unlearned";
    ckpt.provenance.method = to_string(cfg.method);
    ckpt.provenance.seeds = {cfg.seed};
    ckpt.provenance.wall_seconds = wall_seconds;
    ckpt.provenance.extra["unlearn_config"] = cfg;
    return ckpt;
}

void require_finite(std::span<const double> theta, const char* what, std::size_t iteration) {
    if (!vec::all_finite(theta)) {
        throw std::runtime_error(std::string(what) + ": non-finite parameters at iteration " +
                                 std::to_string(iteration));
    }
}

GradientVector mean_gradient(std::span<const double> theta, const ModelConfig& model,
                             const Dataset& data, std::span<const std::size_t> rows,
                             std::span<const double> weights = {}, double* loss = nullptr) {
    const auto lg = loss_and_gradient(theta, model, data.gather_features(rows),
                                      data.gather_labels(rows), weights);
    if (loss) *loss = lg.loss;
    return lg.gradient;
}

TrainConfig seeded(TrainConfig t, std::uint64_t seed) {
    t.seed += seed;
    return t;
}

bool baseline_is_identity(const UnlearnConfig& cfg) {
    return cfg.baseline.lr == 0.0 || cfg.baseline.epochs == 0;
}

struct Relabeled {
    std::vector<std::size_t> rows;
    std::vector<int> labels;
};

Relabeled relabeled_union(const Dataset& data, const ForgetSplit& split, std::uint64_t seed) {
    if (data.class_count < 2) throw std::invalid_argument("relabeling needs at least 2 classes");
    Relabeled r;
    const auto forget_labels = data.gather_labels(split.forget);
    r.labels = random_relabel(forget_labels, data.class_count, seed);
    r.rows.assign(split.forget.begin(), split.forget.end());
    r.rows.insert(r.rows.end(), split.remain.begin(), split.remain.end());
    for (std::size_t i : split.remain) r.labels.push_back(data.labels[i]);
    return r;
}

Checkpoint relabel_finetune(const ParamVector& theta0, const ModelConfig& model,
                            const Dataset& data, const ForgetSplit& split,
                            const UnlearnConfig& cfg, std::span<const double> grad_mask,
                            const BatchObserver& on_batch) {
    const auto start = Clock::now();
    const Relabeled r = relabeled_union(data, split, cfg.seed);
    if (baseline_is_identity(cfg)) return make_checkpoint(theta0, model, cfg, seconds_since(start));
    SgdOptions opt;
    opt.labels = r.labels;
    opt.grad_mask = grad_mask;
    opt.on_batch = on_batch;
    SgdResult res = run_sgd(theta0, model, seeded(cfg.baseline, cfg.seed), data, r.rows, opt);
    return make_checkpoint(std::move(res.params), model, cfg, seconds_since(start));
}

} // namespace

std::string to_string(Method m) {
    switch (m) {
    case Method::sfr_on: return "sfr_on";
    case Method::ft: return "ft";
    case Method::ga: return "ga";
    case Method::rl: return "rl";
    case Method::salun: return "salun";
    case Method::joint: return "joint";
    }
    return "unknown";
}

Method method_from_string(const std::string& s) {
    for (Method m : {Method::sfr_on, Method::ft, Method::ga, Method::rl, Method::salun,
                     Method::joint}) {
        if (to_string(m) == s) return m;
    }
    throw std::invalid_argument("unknown method '" + s +
                                "' (expected sfr_on, ft, ga, rl, salun or joint)");
}

std::string to_string(FisherMode m) {
    return m == FisherMode::per_sample_mean ? "per_sample_mean" : "batch_square";
}

FisherMode fisher_mode_from_string(const std::string& s) {
    if (s == "per_sample_mean") return FisherMode::per_sample_mean;
    if (s == "batch_square") return FisherMode::batch_square;
    throw std::invalid_argument("unknown fisher_mode '" + s + "'");
}

void UnlearnConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("UnlearnConfig: " + msg); };
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must be in [0,1]");
    if (!(beta_f >= 0.0) || !(beta_r >= 0.0)) fail("beta_f and beta_r must be >= 0");
    if (t_out < 1) fail("t_out must be >= 1");
    if (!(lambda_temp >= 0.0)) fail("lambda_temp must be >= 0");
    if (!(gamma >= 0.0)) fail("gamma must be >= 0");
    if (batch_f < 1 || batch_r < 1) fail("batch sizes must be >= 1");
    if (!(baseline.lr >= 0.0)) fail("baseline lr must be >= 0");
    if (baseline.batch_size < 1) fail("baseline batch_size must be >= 1");
    if (!(baseline.momentum >= 0.0 && baseline.momentum < 1.0)) fail("momentum must be in [0,1)");
    if (!(salun_top_percent > 0.0 && salun_top_percent <= 100.0)) {
        fail("salun_top_percent must be in (0,100]");
    }
    if (!(joint_remain_weight >= 0.0)) fail("joint_remain_weight must be >= 0");
}

void to_json(nlohmann::json& j, const UnlearnConfig& cfg) {
    j = nlohmann::json{{"method", to_string(cfg.method)},
                       {"alpha", cfg.alpha},
                       {"beta_f", cfg.beta_f},
                       {"beta_r", cfg.beta_r},
                       {"t_in", cfg.t_in},
                       {"t_out", cfg.t_out},
                       {"lambda_temp", cfg.lambda_temp},
                       {"gamma", cfg.gamma},
                       {"batch_f", cfg.batch_f},
                       {"batch_r", cfg.batch_r},
                       {"seed", cfg.seed},
                       {"fisher_mode", to_string(cfg.fisher_mode)},
                       {"fisher_sample_cap", cfg.fisher_sample_cap},
                       {"baseline", cfg.baseline},
                       {"salun_top_percent", cfg.salun_top_percent},
                       {"joint_remain_weight", cfg.joint_remain_weight}};
}

void from_json(const nlohmann::json& j, UnlearnConfig& cfg) {
    const UnlearnConfig d;
    cfg.method = method_from_string(j.value("method", to_string(d.method)));
    cfg.alpha = j.value("alpha", d.alpha);
    cfg.beta_f = j.value("beta_f", d.beta_f);
    cfg.beta_r = j.value("beta_r", d.beta_r);
    cfg.t_in = j.value("t_in", d.t_in);
    cfg.t_out = j.value("t_out", d.t_out);
    cfg.lambda_temp = j.value("lambda_temp", d.lambda_temp);
    cfg.gamma = j.value("gamma", d.gamma);
    cfg.batch_f = j.value("batch_f", d.batch_f);
    cfg.batch_r = j.value("batch_r", d.batch_r);
    cfg.seed = j.value("seed", d.seed);
    cfg.fisher_mode = fisher_mode_from_string(j.value("fisher_mode", to_string(d.fisher_mode)));
    cfg.fisher_sample_cap = j.value("fisher_sample_cap", d.fisher_sample_cap);
    cfg.baseline = d.baseline;
    if (j.contains("baseline")) {
        // Missing fields keep the unlearning defaults, not the pretraining ones.
        nlohmann::json merged = d.baseline;
        merged.update(j.at("baseline"));
        cfg.baseline = merged.get<TrainConfig>();
    }
    cfg.salun_top_percent = j.value("salun_top_percent", d.salun_top_percent);
    cfg.joint_remain_weight = j.value("joint_remain_weight", d.joint_remain_weight);
}

std::size_t SaliencyMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1.0));
}

void FisherAccumulator::add(std::span<const double> g) {
    if (g.size() != sum_.size()) throw std::invalid_argument("FisherAccumulator: length mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) {
        sum_[i] += g[i];
        sum_sq_[i] += g[i] * g[i];
    }
    ++n_;
}

std::vector<double> FisherAccumulator::result(FisherMode mode) const {
    if (n_ == 0) throw std::invalid_argument("fisher diagonal of an empty set");
    const double inv = 1.0 / static_cast<double>(n_);
    std::vector<double> out(sum_.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mode == FisherMode::per_sample_mean) {
            out[i] = sum_sq_[i] * inv;
        } else {
            const double m = sum_[i] * inv;
            out[i] = m * m;
        }
    }
    return out;
}

FisherDiagonals fisher_diagonals(std::span<const double> theta, const ModelConfig& model,
                                 const Dataset& data, const ForgetSplit& split, FisherMode mode,
                                 std::size_t sample_cap, std::uint64_t seed) {
    if (split.forget.empty() || split.remain.empty()) {
        throw std::invalid_argument("fisher_diagonals: empty forget or remain set");
    }
    auto diagonal = [&](std::span<const std::size_t> rows) {
        FisherAccumulator acc(theta.size());
        for_each_sample_gradient(theta, model, data.gather_features(rows), data.gather_labels(rows),
                                 [&](std::size_t, const GradientVector& g) { acc.add(g.span()); });
        return acc.result(mode);
    };
    std::vector<std::size_t> remain = split.remain;
    if (sample_cap > 0 && sample_cap < remain.size()) {
        std::vector<std::size_t> picked;
        std::mt19937_64 rng(seed);
        std::sample(remain.begin(), remain.end(), std::back_inserter(picked), sample_cap, rng);
        remain = std::move(picked);
    }
    return FisherDiagonals{diagonal(split.forget), diagonal(remain)};
}

SaliencyMask saliency_mask(const FisherDiagonals& fd, double gamma) {
    if (!(gamma >= 0.0)) throw std::invalid_argument("saliency_mask: gamma must be >= 0");
    if (fd.forget.size() != fd.remain.size()) {
        throw std::invalid_argument("saliency_mask: diagonal length mismatch");
    }
    SaliencyMask m;
    m.bits.resize(fd.forget.size());
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        m.bits[i] = fd.forget[i] / (fd.remain[i] + kRatioGuard) >= gamma ? 1.0 : 0.0;
    }
    return m;
}

CoefficientVector adaptive_coefficients(std::span<const double> losses, std::size_t t,
                                        std::size_t total, double lambda) {
    if (total == 0 || t > total) throw std::invalid_argument("adaptive_coefficients: need 0 <= t <= T");
    if (!(lambda >= 0.0)) throw std::invalid_argument("adaptive_coefficients: lambda must be >= 0");
    CoefficientVector c;
    if (losses.empty()) return c;
    // Work in log space: ℓ^-λ overflows for tiny losses and large λ.
    std::vector<double> logw(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        if (!(losses[i] >= 0.0)) throw std::invalid_argument("adaptive_coefficients: negative loss");
        logw[i] = -lambda * std::log(std::max(losses[i], kLossFloor));
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double sum = 0.0;
    c.values.resize(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        c.values[i] = std::exp(logw[i] - top);
        sum += c.values[i];
    }
    const double scale = (1.0 - static_cast<double>(t) / static_cast<double>(total)) *
                         static_cast<double>(losses.size()) / sum;
    for (double& v : c.values) v *= scale;
    return c;
}

std::vector<std::size_t> sample_batch(std::span<const std::size_t> pool, std::size_t batch,
                                      std::mt19937_64& rng) {
    if (pool.empty()) throw std::invalid_argument("sample_batch: empty pool");
    std::vector<std::size_t> out;
    out.reserve(batch);
    if (pool.size() < batch) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t i = 0; i < batch; ++i) out.push_back(pool[pick(rng)]);
    } else {
        std::sample(pool.begin(), pool.end(), std::back_inserter(out), batch, rng);
    }
    return out;
}

std::vector<int> random_relabel(std::span<const int> labels, int class_count, std::uint64_t seed) {
    if (class_count < 2) throw std::invalid_argument("random_relabel: class_count must be >= 2");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> shift(0, class_count - 2);
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out[i] = (labels[i] + 1 + shift(rng)) % class_count;
    }
    return out;
}

SaliencyMask top_magnitude_mask(std::span<const double> g, double percent) {
    if (!(percent > 0.0 && percent <= 100.0)) {
        throw std::invalid_argument("top_magnitude_mask: percent must be in (0,100]");
    }
    const std::size_t n = g.size();
    const auto keep = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(percent / 100.0 * static_cast<double>(n))), 1, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(g[a]) > std::abs(g[b]);
    });
    SaliencyMask m;
    m.bits.assign(n, 0.0);
    for (std::size_t i = 0; i < keep; ++i) m.bits[order[i]] = 1.0;
    return m;
}

ParamVector joint_step(std::span<const double> theta, const ModelConfig& model,
                       const Dataset& data, std::span<const std::size_t> forget_rows,
                       std::span<const std::size_t> remain_rows, double lr, double remain_weight) {
    ParamVector next(std::vector<double>(theta.begin(), theta.end()));
    const GradientVector gf = mean_gradient(theta, model, data, forget_rows);
    GradientVector gr(theta.size());
    if (remain_weight != 0.0) gr = mean_gradient(theta, model, data, remain_rows);
    for (std::size_t i = 0; i < next.size(); ++i) {
        next[i] -= lr * (-gf[i] + remain_weight * gr[i]);
    }
    return next;
}

Checkpoint sfr_on(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                  const ForgetSplit& split, const UnlearnConfig& cfg,
                  const BatchObserver& on_batch) {
    cfg.validate();
    split.validate();
    const auto start = Clock::now();
    const FisherDiagonals fd = fisher_diagonals(theta0.span(), model, data, split, cfg.fisher_mode,
                                                cfg.fisher_sample_cap, cfg.seed);
    const SaliencyMask mask = saliency_mask(fd, cfg.gamma);

    std::mt19937_64 rng(cfg.seed);
    ParamVector theta = theta0;
    std::vector<double> forget_losses;
    forget_losses.reserve(cfg.t_out);
    for (std::size_t t = 1; t <= cfg.t_out; ++t) {
        const auto fb = sample_batch(split.forget, cfg.batch_f, rng);
        if (on_batch) on_batch(fb);
        const Tensor xf = data.gather_features(fb);
        const auto yf = data.gather_labels(fb);
        const auto losses = per_sample_losses(theta.span(), model, xf, yf);
        forget_losses.push_back(std::accumulate(losses.begin(), losses.end(), 0.0) /
                                static_cast<double>(losses.size()));
        const auto coeff = adaptive_coefficients(losses, t - 1, cfg.t_out, cfg.lambda_temp);
        const auto gf = loss_and_gradient(theta.span(), model, xf, yf, coeff.values).gradient;

        // Fast step: masked ascent on the weighted forgetting loss.
        ParamVector fast = theta;
        for (std::size_t i = 0; i < fast.size(); ++i) fast[i] += cfg.beta_f * (mask.bits[i] * gf[i]);

        // Remaining repair.
        for (std::size_t k = 0; k < cfg.t_in; ++k) {
            const auto rb =
                sample_batch(split.remain, std::min(cfg.batch_r, split.remain.size()), rng);
            if (on_batch) on_batch(rb);
            const GradientVector gr = mean_gradient(fast.span(), model, data, rb);
            vec::axpy(-cfg.beta_r, gr.span(), fast.span());
        }

        // Slow step toward the repaired fast weights.
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.alpha * (theta[i] - fast[i]);
        require_finite(theta.span(), "sfr_on", t);
    }
    Checkpoint ckpt = make_checkpoint(std::move(theta), model, cfg, seconds_since(start));
    ckpt.provenance.extra["forget_batch_losses"] = forget_losses;
    ckpt.provenance.extra["mask_count"] = mask.count();
    return ckpt;
}

Checkpoint ft_unlearn(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                      const ForgetSplit& split, const UnlearnConfig& cfg,
                      const BatchObserver& on_batch) {
    cfg.validate();
    split.validate();
    const auto start = Clock::now();
    if (baseline_is_identity(cfg)) return make_checkpoint(theta0, model, cfg, 0.0);
    SgdOptions opt;
    opt.on_batch = on_batch;
    SgdResult r = run_sgd(theta0, model, seeded(cfg.baseline, cfg.seed), data, split.remain, opt);
    return make_checkpoint(std::move(r.params), model, cfg, seconds_since(start));
}

Checkpoint ga_unlearn(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                      const ForgetSplit& split, const UnlearnConfig& cfg,
                      const BatchObserver& on_batch) {
    cfg.validate();
    split.validate();
    const auto start = Clock::now();
    if (baseline_is_identity(cfg)) return make_checkpoint(theta0, model, cfg, 0.0);
    SgdOptions opt;
    opt.direction = -1.0;
    opt.on_batch = on_batch;
    SgdResult r = run_sgd(theta0, model, seeded(cfg.baseline, cfg.seed), data, split.forget, opt);
    return make_checkpoint(std::move(r.params), model, cfg, seconds_since(start));
}

Checkpoint rl_unlearn(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                      const ForgetSplit& split, const UnlearnConfig& cfg,
                      const BatchObserver& on_batch) {
    cfg.validate();
    split.validate();
    return relabel_finetune(theta0, model, data, split, cfg, {}, on_batch);
}

Checkpoint salun_unlearn(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                         const ForgetSplit& split, const UnlearnConfig& cfg,
                         const BatchObserver& on_batch) {
    cfg.validate();
    split.validate();
    const auto start = Clock::now();
    const GradientVector gf = mean_gradient(theta0.span(), model, data, split.forget);
    const SaliencyMask mask = top_magnitude_mask(gf.span(), cfg.salun_top_percent);
    Checkpoint ckpt = relabel_finetune(theta0, model, data, split, cfg, mask.bits, on_batch);
    ckpt.provenance.wall_seconds = seconds_since(start);
    ckpt.provenance.extra["mask_count"] = mask.count();
    return ckpt;
}

Checkpoint joint_unlearn(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                         const ForgetSplit& split, const UnlearnConfig& cfg,
                         const BatchObserver& on_batch) {
    cfg.validate();
    split.validate();
    const auto start = Clock::now();
    std::mt19937_64 rng(cfg.seed);
    ParamVector theta = theta0;
    for (std::size_t t = 1; t <= cfg.t_out; ++t) {
        const auto fb = sample_batch(split.forget, cfg.batch_f, rng);
        const auto rb = sample_batch(split.remain, std::min(cfg.batch_r, split.remain.size()), rng);
        if (on_batch) {
            on_batch(fb);
            on_batch(rb);
        }
        theta = joint_step(theta.span(), model, data, fb, rb, cfg.baseline.lr,
                           cfg.joint_remain_weight);
        require_finite(theta.span(), "joint", t);
    }
    return make_checkpoint(std::move(theta), model, cfg, seconds_since(start));
}

Checkpoint run_unlearning(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                          const ForgetSplit& split, const UnlearnConfig& cfg,
                          const BatchObserver& on_batch) {
    switch (cfg.method) {
    case Method::sfr_on: return sfr_on(theta0, model, data, split, cfg, on_batch);
    case Method::ft: return ft_unlearn(theta0, model, data, split, cfg, on_batch);
    case Method::ga: return ga_unlearn(theta0, model, data, split, cfg, on_batch);
    case Method::rl: return rl_unlearn(theta0, model, data, split, cfg, on_batch);
    case Method::salun: return salun_unlearn(theta0, model, data, split, cfg, on_batch);
    case Method::joint: return joint_unlearn(theta0, model, data, split, cfg, on_batch);
    }
    throw std::invalid_argument("run_unlearning: unknown method");
}

} // namespace unlearn
