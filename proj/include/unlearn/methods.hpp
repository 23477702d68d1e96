#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/data.hpp"
#include "unlearn/model.hpp"
#include "unlearn/param_vector.hpp"
#include "unlearn/trainer.hpp"

namespace unlearn {

enum class Method { sfr_on, ft, ga, rl, salun, joint };
enum class FisherMode { per_sample_mean, batch_square };

std::string to_string(Method m);
/// Throws std::invalid_argument naming the accepted ids.
Method method_from_string(const std::string& s);
std::string to_string(FisherMode m);
FisherMode fisher_mode_from_string(const std::string& s);

struct UnlearnConfig {
    Method method = Method::sfr_on;

    // Fast-slow update.
    double alpha = 0.5;   // slow step, in [0, 1]
    double beta_f = 0.01; // fast (forgetting ascent) step
    double beta_r = 0.01; // remaining repair step
    std::size_t t_in = 1;
    std::size_t t_out = 10;
    double lambda_temp = 1.0;
    double gamma = 1.0;
    std::size_t batch_f = 32;
    std::size_t batch_r = 64;
    std::uint64_t seed = 0;
    FisherMode fisher_mode = FisherMode::per_sample_mean;
    std::size_t fisher_sample_cap = 0;  // 0 keeps every remain row

    // Baselines (ft, ga, rl, salun use the optimizer; joint uses lr only).
    TrainConfig baseline{0.01, 5, 64, Schedule::constant, 0.0, 0};
    double salun_top_percent = 50.0;
    double joint_remain_weight = 1.0;

    void validate() const;
};

void to_json(nlohmann::json& j, const UnlearnConfig& cfg);
void from_json(const nlohmann::json& j, UnlearnConfig& cfg);

struct FisherDiagonals {
    std::vector<double> forget;
    std::vector<double> remain;
};

struct SaliencyMask {
    std::vector<double> bits;  // 0.0 or 1.0 per parameter

    std::size_t count() const;
};

struct CoefficientVector {
    std::vector<double> values;
};

/// Streams per-sample gradients into a squared-gradient diagonal.
class FisherAccumulator {
public:
    explicit FisherAccumulator(std::size_t dim) : sum_(dim, 0.0), sum_sq_(dim, 0.0) {}
    void add(std::span<const double> g);
    /// per_sample_mean: mean of g_i^2. batch_square: (mean of g_i)^2.
    std::vector<double> result(FisherMode mode) const;
    std::size_t samples() const noexcept { return n_; }

private:
    std::vector<double> sum_;
    std::vector<double> sum_sq_;
    std::size_t n_ = 0;
};

/// Diagonals at θ over the forget set and the (optionally capped, seeded) remain set.
FisherDiagonals fisher_diagonals(std::span<const double> theta, const ModelConfig& model,
                                 const Dataset& data, const ForgetSplit& split, FisherMode mode,
                                 std::size_t sample_cap = 0, std::uint64_t seed = 0);

/// bit_i = forget_i / (remain_i + 1e-12) >= gamma.
SaliencyMask saliency_mask(const FisherDiagonals& fd, double gamma);

/// c_i = (1 - t/T) * B * w_i / sum_j w_j with w_i = max(loss_i, 1e-8)^-lambda.
CoefficientVector adaptive_coefficients(std::span<const double> losses, std::size_t t,
                                        std::size_t total, double lambda);

/// Rows for one forgetting batch: with replacement when the pool is smaller
/// than `batch`, otherwise a distinct subset.
std::vector<std::size_t> sample_batch(std::span<const std::size_t> pool, std::size_t batch,
                                      std::mt19937_64& rng);

/// New label = (old + 1 + U[0, C-2]) mod C, so it always differs from the old one.
std::vector<int> random_relabel(std::span<const int> labels, int class_count, std::uint64_t seed);

/// Top `percent`% of |g| as a 0/1 mask; ties go to the lower index.
SaliencyMask top_magnitude_mask(std::span<const double> g, double percent);

/// One joint step: θ - lr * (-∇L^f(θ) + w_r ∇L^r(θ)).
ParamVector joint_step(std::span<const double> theta, const ModelConfig& model,
                       const Dataset& data, std::span<const std::size_t> forget_rows,
                       std::span<const std::size_t> remain_rows, double lr, double remain_weight);

Checkpoint sfr_on(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                  const ForgetSplit& split, const UnlearnConfig& cfg,
                  const BatchObserver& on_batch = {});
Checkpoint ft_unlearn(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                      const ForgetSplit& split, const UnlearnConfig& cfg,
                      const BatchObserver& on_batch = {});
Checkpoint ga_unlearn(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                      const ForgetSplit& split, const UnlearnConfig& cfg,
                      const BatchObserver& on_batch = {});
Checkpoint rl_unlearn(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                      const ForgetSplit& split, const UnlearnConfig& cfg,
                      const BatchObserver& on_batch = {});
Checkpoint salun_unlearn(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                         const ForgetSplit& split, const UnlearnConfig& cfg,
                         const BatchObserver& on_batch = {});
Checkpoint joint_unlearn(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                         const ForgetSplit& split, const UnlearnConfig& cfg,
                         const BatchObserver& on_batch = {});

/// Dispatches on cfg.method.
Checkpoint run_unlearning(const ParamVector& theta0, const ModelConfig& model, const Dataset& data,
                          const ForgetSplit& split, const UnlearnConfig& cfg,
                          const BatchObserver& on_batch = {});

} // namespace unlearn
