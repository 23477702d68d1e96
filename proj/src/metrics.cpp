#include "unlearn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace unlearn {

namespace {

constexpr int kAttackSteps = 500;
constexpr double kAttackLr = 0.1;

double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double clamp_prob(double p) { return std::max(p, kProbabilityFloor); }

} // namespace

double accuracy(std::span<const double> theta, const ModelConfig& model, const Dataset& data,
                std::span<const std::size_t> rows) {
    if (rows.empty()) throw std::invalid_argument("accuracy: empty index set");
    const auto pred = predict_labels(theta, model, data.gather_features(rows));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) hits += pred[i] == data.labels[rows[i]];
    return static_cast<double>(hits) / static_cast<double>(rows.size());
}

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) h -= p * std::log(clamp_prob(p));
    return h;
}

std::vector<double> prediction_entropy(std::span<const double> theta, const ModelConfig& model,
                                       const Tensor& x) {
    const Tensor p = softmax_rows(forward_logits(theta, model, x));
    std::vector<double> h(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) h[i] = entropy(p.row(i));
    return h;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
    double kl = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        const double pc = clamp_prob(p[c]);
        kl += pc * (std::log(pc) - std::log(clamp_prob(q[c])));
    }
    return kl;
}

MiaResult mia_from_entropies(std::span<const double> remain, std::span<const double> test,
                             std::span<const double> forget) {
    if (remain.empty() || test.empty() || forget.empty()) {
        throw std::invalid_argument("mia: remain, test and forget must be nonempty");
    }
    const std::size_t n = remain.size() + test.size();
    double mean = 0.0;
    for (double e : remain) mean += e;
    for (double e : test) mean += e;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double e : remain) var += (e - mean) * (e - mean);
    for (double e : test) var += (e - mean) * (e - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));

    MiaResult r;
    // Rounding in the mean leaves a tiny spread for constant inputs.
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        r.degenerate = true;
        r.rate = remain.size() > test.size() ? 1.0 : 0.0;
        return r;
    }
    auto z = [&](double e) { return (e - mean) / sd; };
    double w = 0.0;
    double b = 0.0;
    for (int step = 0; step < kAttackSteps; ++step) {
        double gw = 0.0;
        double gb = 0.0;
        for (double e : remain) {
            const double err = sigmoid(w * z(e) + b) - 1.0;
            gw += err * z(e);
            gb += err;
        }
        for (double e : test) {
            const double err = sigmoid(w * z(e) + b);
            gw += err * z(e);
            gb += err;
        }
        w -= kAttackLr * gw / static_cast<double>(n);
        b -= kAttackLr * gb / static_cast<double>(n);
    }
    std::size_t hits = 0;
    for (double e : forget) hits += sigmoid(w * z(e) + b) >= 0.5;
    r.rate = static_cast<double>(hits) / static_cast<double>(forget.size());
    r.weight = w;
    r.bias = b;
    return r;
}

MiaResult mia_success_rate(std::span<const double> theta, const ModelConfig& model,
                           const ForgetSplit& split, const Dataset& data) {
    auto ent = [&](const std::vector<std::size_t>& rows) {
        return prediction_entropy(theta, model, data.gather_features(rows));
    };
    return mia_from_entropies(ent(split.remain), ent(split.test), ent(split.forget));
}

double empirical_kl(const Checkpoint& unlearned, const Checkpoint& reference, const Dataset& data,
                    const ForgetSplit& split) {
    // Init seeds may differ (RT vs RT'); the architecture may not.
    if (unlearned.model.layer_sizes != reference.model.layer_sizes) {
        throw std::invalid_argument("empirical_kl: model configs differ");
    }
    std::vector<std::size_t> rows = split.remain;
    rows.insert(rows.end(), split.forget.begin(), split.forget.end());
    if (rows.empty()) throw std::invalid_argument("empirical_kl: no rows");
    const Tensor x = data.gather_features(rows);
    const Tensor pu = softmax_rows(forward_logits(unlearned.params.span(), unlearned.model, x));
    const Tensor pr = softmax_rows(forward_logits(reference.params.span(), reference.model, x));
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) total += kl_divergence(pr.row(i), pu.row(i));
    return total / static_cast<double>(rows.size());
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = nlohmann::json{{"fa", r.fa},
                       {"ra", r.ra},
                       {"ta", r.ta},
                       {"mia", r.mia},
                       {"kl_to_ref", r.kl_to_ref},
                       {"avg_d", r.avg_d},
                       {"rte_seconds", r.rte_seconds},
                       {"gaps", {{"fa", r.gaps.fa}, {"ra", r.gaps.ra}, {"ta", r.gaps.ta},
                                 {"mia", r.gaps.mia}}},
                       {"provenance", r.provenance}};
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
    r.fa = j.at("fa").get<double>();
    r.ra = j.at("ra").get<double>();
    r.ta = j.at("ta").get<double>();
    r.mia = j.at("mia").get<double>();
    r.kl_to_ref = j.at("kl_to_ref").get<double>();
    r.avg_d = j.at("avg_d").get<double>();
    r.rte_seconds = j.value("rte_seconds", 0.0);
    const auto& g = j.at("gaps");
    r.gaps = {g.at("fa").get<double>(), g.at("ra").get<double>(), g.at("ta").get<double>(),
              g.at("mia").get<double>()};
    r.provenance = j.value("provenance", nlohmann::json::object());
}

double avg_disparity(const std::array<double, 4>& gaps_pp) {
    double s = 0.0;
    for (double g : gaps_pp) s += std::abs(g);
    return s / 4.0;
}

double avg_disparity(const MetricsReport& a, const MetricsReport& b) {
    return avg_disparity({100.0 * (a.fa - b.fa), 100.0 * (a.ra - b.ra), 100.0 * (a.ta - b.ta),
                          100.0 * (a.mia - b.mia)});
}

MetricsReport accuracy_metrics(std::span<const double> theta, const ModelConfig& model,
                               const Dataset& data, const ForgetSplit& split) {
    MetricsReport r;
    r.fa = accuracy(theta, model, data, split.forget);
    r.ra = accuracy(theta, model, data, split.remain);
    r.ta = accuracy(theta, model, data, split.test);
    const MiaResult mia = mia_success_rate(theta, model, split, data);
    r.mia = mia.rate;
    r.provenance["mia_degenerate"] = mia.degenerate;
    return r;
}

MetricsReport full_report(const Checkpoint& unlearned, const Checkpoint& reference,
                          const Dataset& data, const ForgetSplit& split, double rte_seconds) {
    MetricsReport u = accuracy_metrics(unlearned.params.span(), unlearned.model, data, split);
    const MetricsReport ref =
        accuracy_metrics(reference.params.span(), reference.model, data, split);
    u.kl_to_ref = empirical_kl(unlearned, reference, data, split);
    u.gaps = {100.0 * std::abs(u.fa - ref.fa), 100.0 * std::abs(u.ra - ref.ra),
              100.0 * std::abs(u.ta - ref.ta), 100.0 * std::abs(u.mia - ref.mia)};
    u.avg_d = avg_disparity(u, ref);
    u.rte_seconds = rte_seconds;
    u.provenance["method"] = unlearned.provenance.method;
    u.provenance["reference_method"] = reference.provenance.method;
    u.provenance["reference_mia_degenerate"] = ref.provenance.value("mia_degenerate", false);
    return u;
}

std::string markdown_header() {
    return "| Method | FA | RA | TA | MIA | Avg.D | D_KL | RTE (s) |\n"
           "|---|---|---|---|---|---|---|---|\n";
}

std::string markdown_row(const std::string& name, const MetricsReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "| %s | %.2f (%.2f) | %.2f (%.2f) | %.2f (%.2f) | %.2f (%.2f) | %.2f | %.4f | "
                  "%.3f |",
                  name.c_str(), 100.0 * r.fa, r.gaps.fa, 100.0 * r.ra, r.gaps.ra, 100.0 * r.ta,
                  r.gaps.ta, 100.0 * r.mia, r.gaps.mia, r.avg_d, r.kl_to_ref, r.rte_seconds);
    return buf;
}

} // namespace unlearn
