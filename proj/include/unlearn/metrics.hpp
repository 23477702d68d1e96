#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/data.hpp"
#include "unlearn/model.hpp"
#include "unlearn/trainer.hpp"

namespace unlearn {

double accuracy(std::span<const double> theta, const ModelConfig& model, const Dataset& data,
                std::span<const std::size_t> rows);

/// H = -sum_c p_c ln p_c with p clamped at 1e-12.
double entropy(std::span<const double> probs);
std::vector<double> prediction_entropy(std::span<const double> theta, const ModelConfig& model,
                                       const Tensor& x);

/// KL(p || q) in nats, both sides clamped at 1e-12.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct MiaResult {
    double rate = 0.0;
    bool degenerate = false;  // zero-variance feature, majority label used
    double weight = 0.0;
    double bias = 0.0;
};

/// Entropy-feature logistic attacker: members (remain) labelled 1, non-members
/// (test) labelled 0; feature standardized over both; 500 full-batch gradient
/// steps at lr 0.1 from zero. Rate = fraction of forget rows scored >= 0.5.
MiaResult mia_from_entropies(std::span<const double> remain, std::span<const double> test,
                             std::span<const double> forget);
MiaResult mia_success_rate(std::span<const double> theta, const ModelConfig& model,
                           const ForgetSplit& split, const Dataset& data);

/// Mean over remain and forget rows of KL(p_ref || p_u). Throws if the model
/// configs differ.
double empirical_kl(const Checkpoint& unlearned, const Checkpoint& reference, const Dataset& data,
                    const ForgetSplit& split);

struct MetricGaps {
    double fa = 0.0;
    double ra = 0.0;
    double ta = 0.0;
    double mia = 0.0;
};

struct MetricsReport {
    double fa = 0.0;
    double ra = 0.0;
    double ta = 0.0;
    double mia = 0.0;
    double kl_to_ref = 0.0;
    double avg_d = 0.0;  // percentage points
    double rte_seconds = 0.0;
    MetricGaps gaps;     // |unlearned - reference|, percentage points
    nlohmann::json provenance = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

/// Mean of the four accuracy-type gaps, given in percentage points.
double avg_disparity(const std::array<double, 4>& gaps_pp);
/// Same, from two reports whose fractions are compared.
double avg_disparity(const MetricsReport& a, const MetricsReport& b);

/// FA, RA, TA and MIA only.
MetricsReport accuracy_metrics(std::span<const double> theta, const ModelConfig& model,
                               const Dataset& data, const ForgetSplit& split);

MetricsReport full_report(const Checkpoint& unlearned, const Checkpoint& reference,
                          const Dataset& data, const ForgetSplit& split, double rte_seconds);

std::string markdown_header();
/// "| name | FA (gap) | RA (gap) | TA (gap) | MIA (gap) | Avg.D | D_KL | RTE |", values in %.
std::string markdown_row(const std::string& name, const MetricsReport& r);

} // namespace unlearn
