#include "unlearn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "unlearn/autodiff.hpp"
#include "unlearn/methods.hpp"
#include "unlearn/param_vector.hpp"

namespace unlearn::verify {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kNormTol = 1e-9;

Eigen::MatrixXd random_spd(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd m(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) m(i, j) = n(rng);
    }
    return m * m.transpose() / dim + 0.5 * Eigen::MatrixXd::Identity(dim, dim);
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = n(rng);
    return v;
}

Eigen::LDLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& m, const char* name) {
    Eigen::LDLT<Eigen::MatrixXd> f(m);
    if (f.info() != Eigen::Success || !f.isPositive() ||
        (f.vectorD().array().abs() < 1e-14).any()) {
        throw std::invalid_argument(std::string("singular or indefinite matrix ") + name);
    }
    return f;
}

double cosine(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return vec::cosine({x.data(), static_cast<std::size_t>(x.size())},
                       {y.data(), static_cast<std::size_t>(y.size())});
}

DirectionCheckResult compare(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
    DirectionCheckResult r;
    r.cosine = cosine(got, want);
    r.residual = (got - want).norm();
    const double scale = want.norm();
    r.rel_norm_err = scale > 0.0 ? r.residual / scale : r.residual;
    return r;
}

double kl_unclamped(std::span<const double> p, std::span<const double> q) {
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

void require_distribution(std::span<const double> p, const char* name) {
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw std::invalid_argument(std::string(name) + " has a negative entry");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) {
        throw std::invalid_argument(std::string(name) + " is not normalized (sum " +
                                    std::to_string(s) + ")");
    }
}

std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> p(n);
    for (double& v : p) v = u(rng);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= s;
    return p;
}

nlohmann::json entry(const std::string& name, bool pass, nlohmann::json residuals) {
    return {{"check_name", name}, {"pass", pass}, {"residuals", std::move(residuals)}};
}

} // namespace

void QuadraticTestbed::validate() const {
    const auto n = a.size();
    if (n < 1 || A.rows() != n || A.cols() != n || B.rows() != n || B.cols() != n ||
        b.size() != n) {
        throw std::invalid_argument("QuadraticTestbed: inconsistent dimensions");
    }
    if (!(p_f > 0.0 && p_f < 1.0)) throw std::invalid_argument("QuadraticTestbed: p_f must be in (0,1)");
    if (!A.isApprox(A.transpose()) || !B.isApprox(B.transpose())) {
        throw std::invalid_argument("QuadraticTestbed: A and B must be symmetric");
    }
    factor_spd(A, "A");
    factor_spd(B, "B");
}

Eigen::VectorXd QuadraticTestbed::weighted_optimum() const {
    const Eigen::MatrixXd m = B + eps * A;
    return factor_spd(m, "B + eps A").solve(B * b + eps * A * a);
}

QuadraticTestbed random_testbed(std::uint64_t seed, int dim) {
    std::mt19937_64 rng(seed);
    QuadraticTestbed tb;
    tb.A = random_spd(rng, dim);
    tb.B = random_spd(rng, dim);
    tb.a = random_vector(rng, dim);
    tb.b = random_vector(rng, dim);
    tb.eps = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
    tb.p_f = std::uniform_real_distribution<double>(0.05, 0.5)(rng);
    return tb;
}

QuadraticTestbed diagonal_testbed() {
    QuadraticTestbed tb;
    tb.A = Eigen::Vector2d(2.0, 1.0).asDiagonal();
    tb.B = Eigen::Vector2d(1.0, 3.0).asDiagonal();
    tb.a = Eigen::Vector2d(1.0, 0.0);
    tb.b = Eigen::Vector2d(0.0, 1.0);
    tb.eps = 1.0;
    tb.p_f = 0.4;
    return tb;
}

double check_kl_mixture(const DistributionPair& forget, const DistributionPair& remain,
                        double p_f) {
    if (!(p_f > 0.0 && p_f < 1.0)) throw std::invalid_argument("check_kl_mixture: p_f must be in (0,1)");
    if (forget.p.size() != forget.q.size() || remain.p.size() != remain.q.size()) {
        throw std::invalid_argument("check_kl_mixture: pair length mismatch");
    }
    require_distribution(forget.p, "forget p");
    require_distribution(forget.q, "forget q");
    require_distribution(remain.p, "remain p");
    require_distribution(remain.q, "remain q");
    const double p_r = 1.0 - p_f;
    std::vector<double> m;
    std::vector<double> m2;
    for (std::size_t i = 0; i < forget.p.size(); ++i) {
        m.push_back(p_f * forget.p[i]);
        m2.push_back(p_f * forget.q[i]);
    }
    for (std::size_t i = 0; i < remain.p.size(); ++i) {
        m.push_back(p_r * remain.p[i]);
        m2.push_back(p_r * remain.q[i]);
    }
    const double whole = kl_unclamped(m, m2);
    const double parts = p_f * kl_unclamped(forget.p, forget.q) + p_r * kl_unclamped(remain.p, remain.q);
    return std::abs(whole - parts);
}

DirectionCheckResult check_prop1_quadratic(const QuadraticTestbed& tb) {
    tb.validate();
    const double p_r = 1.0 - tb.p_f;
    const auto B_inv = factor_spd(tb.B, "B");
    const Eigen::VectorXd theta = tb.weighted_optimum();
    const Eigen::VectorXd neg_grad_f = -tb.eps * tb.A * (theta - tb.a);
    const Eigen::VectorXd grad_r = tb.B * (theta - tb.b);
    const Eigen::VectorXd d = -(tb.p_f * (tb.A * B_inv.solve(neg_grad_f)) + p_r * grad_r);
    // Exact gradient of p_f·½(θ-b)ᵀA(θ-b) + p_r·½(θ-b)ᵀB(θ-b).
    const Eigen::VectorXd g = (tb.p_f * tb.A + p_r * tb.B) * (theta - tb.b);
    return compare(d, -g);
}

double scaled_step(double alpha, double p_f) { return alpha * p_f / (alpha * (1.0 - p_f) + 1.0); }

DirectionCheckResult check_prop2_quadratic(const QuadraticTestbed& tb, double alpha) {
    tb.validate();
    if (!(alpha > 0.0)) throw std::invalid_argument("check_prop2_quadratic: alpha must be > 0");
    const double p_r = 1.0 - tb.p_f;
    const auto B_inv = factor_spd(tb.B, "B");
    const Eigen::VectorXd theta = tb.weighted_optimum();
    const Eigen::VectorXd neg_grad_f = -tb.eps * tb.A * (theta - tb.a);
    const Eigen::VectorXd forget_part = tb.A * B_inv.solve(neg_grad_f);
    const Eigen::VectorXd d = -scaled_step(alpha, tb.p_f) * B_inv.solve(forget_part);

    // Oracle: minimize p_f·(A(θ-b))ᵀΔ + ½(p_r + 1/α)ΔᵀBΔ directly.
    const Eigen::MatrixXd lhs = (p_r + 1.0 / alpha) * tb.B;
    const Eigen::VectorXd oracle = factor_spd(lhs, "metric").solve(-tb.p_f * tb.A * (theta - tb.b));
    DirectionCheckResult r = compare(d, oracle);

    // d = B^-1 f / (α p_r + 1), f the forgetting component scaled by -α p_f.
    const Eigen::VectorXd f = -alpha * tb.p_f * forget_part;
    const Eigen::VectorXd via_identity = B_inv.solve(f) / (alpha * p_r + 1.0);
    r.residual = std::max(r.residual, (d - via_identity).norm());
    return r;
}

DirectionCheckResult check_fast_slow_direction(std::span<const double> theta,
                                               const ModelConfig& model, const Dataset& data,
                                               std::span<const std::size_t> forget_rows,
                                               std::span<const std::size_t> remain_rows,
                                               double beta_f, double beta_r,
                                               std::span<const double> mask,
                                               std::span<const double> coefficients) {
    const std::size_t n = theta.size();
    if (mask.size() != n) throw std::invalid_argument("check_fast_slow_direction: mask length");
    const Tensor xf = data.gather_features(forget_rows);
    const auto yf = data.gather_labels(forget_rows);
    const Tensor xr = data.gather_features(remain_rows);
    const auto yr = data.gather_labels(remain_rows);
    auto remain_grad = [&](std::span<const double> t) {
        return loss_and_gradient(t, model, xr, yr).gradient;
    };

    const GradientVector gf = loss_and_gradient(theta, model, xf, yf, coefficients).gradient;
    std::vector<double> step_f(n);
    std::vector<double> g_u(n);
    for (std::size_t i = 0; i < n; ++i) {
        step_f[i] = beta_f * (mask[i] * gf[i]);
        g_u[i] = -(mask[i] * gf[i]);
    }
    std::vector<double> fast(theta.begin(), theta.end());
    vec::axpy(1.0, step_f, fast);
    const GradientVector gr_fast = remain_grad(fast);

    // Realized θ - θ^r = -(step_f - β_r ∇L^r(θ^f)), kept in displacement form.
    Eigen::VectorXd u(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) u(i) = -(step_f[i] + (-beta_r * gr_fast[i]));

    const GradientVector gr = remain_grad(theta);
    const ParamVector hv = hessian_vector_product(remain_grad, theta, g_u, kFdStep);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        v(i) = beta_f * (g_u[i] - beta_r * hv[i]) + beta_r * gr[i];
    }
    if (!u.allFinite() || !v.allFinite()) {
        throw std::runtime_error("check_fast_slow_direction: non-finite intermediate");
    }
    return compare(u, v);
}

double check_gradients(const ModelConfig& model, std::span<const std::uint64_t> seeds) {
    double worst = 0.0;
    for (std::uint64_t seed : seeds) {
        ModelConfig cfg = model;
        cfg.seed = seed;
        // Zero init biases put a hidden unit exactly on the relu kink whenever
        // every unit feeding it is dead; small random biases move it off.
        ParamVector theta = init_params(cfg);
        std::mt19937_64 rng(seed + 2000);
        std::normal_distribution<double> jitter(0.0, 0.1);
        for (const auto& layer : layer_layout(cfg)) {
            for (std::size_t i = 0; i < layer.out; ++i) theta[layer.bias_offset + i] = jitter(rng);
        }
        const int classes = static_cast<int>(cfg.class_count());
        const Dataset data = generate_blobs(seed + 1000, 4, classes, cfg.input_dim(), 1.0);
        std::vector<std::size_t> rows(data.size());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        const Tensor x = data.gather_features(rows);
        const auto y = data.gather_labels(rows);
        const GradientVector g = loss_and_gradient(theta.span(), cfg, x, y).gradient;
        const GradientVector fd = finite_diff_gradient(
            [&](std::span<const double> t) {
                const ComputationRecord rec = weighted_loss(t, cfg, x, y);
                return rec.value(rec.root()).item();
            },
            theta.span(), kFdStep);
        const double scale = std::max({vec::norm(g.span()), vec::norm(fd.span()), kNormTol});
        worst = std::max(worst, vec::distance(g.span(), fd.span()) / scale);
    }
    return worst;
}

FastSlowFixture make_fast_slow_fixture(std::uint64_t seed) {
    FastSlowFixture fx;
    fx.model = ModelConfig{{4, 8, 8, 3}, 1.0, seed};
    fx.data = generate_blobs(seed, 20, 3, 4, 0.8);
    const ForgetSplit split = make_random_subset_split(fx.data, 0.25, 0.0, seed);
    fx.forget = split.forget;
    fx.remain = split.remain;
    fx.theta = init_params(fx.model).values;
    const FisherDiagonals fd =
        fisher_diagonals(fx.theta, fx.model, fx.data, split, FisherMode::per_sample_mean);
    fx.mask = saliency_mask(fd, 1.0).bits;
    const auto losses =
        per_sample_losses(fx.theta, fx.model, fx.data.gather_features(fx.forget),
                          fx.data.gather_labels(fx.forget));
    fx.coefficients = adaptive_coefficients(losses, 0, 10, 1.0).values;
    return fx;
}

BetaScaling fast_slow_beta_scaling(const FastSlowFixture& fx, std::span<const double> betas) {
    BetaScaling s;
    s.betas.assign(betas.begin(), betas.end());
    for (double beta : betas) {
        s.rel_errors.push_back(check_fast_slow_direction(fx.theta, fx.model, fx.data, fx.forget,
                                                         fx.remain, beta, beta, fx.mask,
                                                         fx.coefficients)
                                   .rel_norm_err);
        s.abs_errors_r.push_back(check_fast_slow_direction(fx.theta, fx.model, fx.data, fx.forget,
                                                           fx.remain, betas.front(), beta, fx.mask,
                                                           fx.coefficients)
                                     .residual);
    }
    for (std::size_t i = 1; i < betas.size(); ++i) {
        s.joint_ratios.push_back(s.rel_errors[i] / s.rel_errors[i - 1]);
        s.remain_only_ratios.push_back(s.abs_errors_r[i] / s.abs_errors_r[i - 1]);
    }
    return s;
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"grad", "prop1", "prop2", "fastslow", "klmix",
                                                "all"};
    return names;
}

nlohmann::json run_suite(const std::string& suite) {
    const auto& names = suite_names();
    if (std::find(names.begin(), names.end(), suite) == names.end()) {
        throw std::invalid_argument("unknown suite '" + suite + "'");
    }
    const bool all = suite == "all";
    nlohmann::json out = nlohmann::json::array();

    if (all || suite == "grad") {
        std::vector<std::uint64_t> seeds(20);
        std::iota(seeds.begin(), seeds.end(), std::uint64_t{1});
        const double mlp = check_gradients(ModelConfig{{8, 16, 16, 4}, 1.0, 0}, seeds);
        out.push_back(entry("grad_mlp_20_seeds", mlp <= 1e-6, {{"max_rel_err", mlp}}));
        const double lin = check_gradients(ModelConfig{{8, 4}, 1.0, 0}, seeds);
        out.push_back(entry("grad_linear_20_seeds", lin <= 1e-10, {{"max_rel_err", lin}}));
    }
    if (all || suite == "prop1") {
        const double diag = check_prop1_quadratic(diagonal_testbed()).residual;
        out.push_back(entry("prop1_diagonal", diag <= 1e-10, {{"residual", diag}}));
        double worst = 0.0;
        for (int i = 0; i < 10; ++i) {
            worst = std::max(worst, check_prop1_quadratic(random_testbed(100 + i, 2 + i % 7)).residual);
        }
        out.push_back(entry("prop1_random_spd", worst <= 1e-9, {{"max_residual", worst}}));
    }
    if (all || suite == "prop2") {
        const double diag = check_prop2_quadratic(diagonal_testbed(), 0.5).residual;
        out.push_back(entry("prop2_diagonal", diag <= 1e-10, {{"residual", diag}}));
        double worst = 0.0;
        for (int i = 0; i < 10; ++i) {
            worst = std::max(worst,
                             check_prop2_quadratic(random_testbed(100 + i, 2 + i % 7), 0.5).residual);
        }
        out.push_back(entry("prop2_random_spd", worst <= 1e-10, {{"max_residual", worst}}));
    }
    if (all || suite == "klmix") {
        std::mt19937_64 rng(7);
        double worst = 0.0;
        for (int i = 0; i < 50; ++i) {
            const double p_f = i == 0 ? 0.01 : i == 1 ? 0.99 : std::uniform_real_distribution<double>(0.01, 0.99)(rng);
            const DistributionPair f{random_distribution(rng, 5), random_distribution(rng, 5)};
            const DistributionPair r{random_distribution(rng, 5), random_distribution(rng, 5)};
            worst = std::max(worst, check_kl_mixture(f, r, p_f));
        }
        out.push_back(entry("kl_mixture_50", worst <= 1e-12, {{"max_residual", worst}}));
    }
    if (all || suite == "fastslow") {
        const FastSlowFixture fx = make_fast_slow_fixture(3);
        const auto r = check_fast_slow_direction(fx.theta, fx.model, fx.data, fx.forget, fx.remain,
                                                 1e-4, 1e-4, fx.mask, fx.coefficients);
        out.push_back(entry("fast_slow_direction", r.cosine >= 0.999 && r.rel_norm_err <= 0.01,
                            {{"cosine", r.cosine}, {"rel_norm_err", r.rel_norm_err},
                             {"residual", r.residual}}));
        const std::vector<double> betas{1e-4, 2e-4, 4e-4};
        const BetaScaling s = fast_slow_beta_scaling(fx, betas);
        bool ok = true;
        for (double q : s.joint_ratios) ok = ok && q >= 3.0 && q <= 5.0;
        out.push_back(entry("fast_slow_remainder_scaling", ok,
                            {{"rel_errors", s.rel_errors},
                             {"ratios", s.joint_ratios},
                             {"remain_only_ratios", s.remain_only_ratios}}));
    }
    return out;
}

bool suite_passed(const nlohmann::json& report) {
    return std::all_of(report.begin(), report.end(),
                       [](const nlohmann::json& e) { return e.at("pass").get<bool>(); });
}

} // namespace unlearn::verify
