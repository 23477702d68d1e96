#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "unlearn/autodiff.hpp"
#include "unlearn/param_vector.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

/// MLP classifier: affine layers with relu between them, linear last layer.
struct ModelConfig {
    std::vector<std::size_t> layer_sizes;  // input, hidden..., classes
    double init_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t param_count() const;
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t class_count() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return layer_sizes.size() - 1; }

    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

/// Offsets of one layer inside the flat parameter vector.
struct LayerSlice {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
};

std::vector<LayerSlice> layer_layout(const ModelConfig& cfg);

/// Weights ~ Uniform(-s, s), s = init_scale / sqrt(fan_in); biases 0.
ParamVector init_params(const ModelConfig& cfg);

Tensor forward_logits(std::span<const double> theta, const ModelConfig& cfg, const Tensor& x,
                      kernels::Backend backend = kernels::default_backend());

/// Record whose root is mean_i w_i * CE(θ; x_i, y_i). Empty weights mean all
/// ones; weights are constants.
ComputationRecord weighted_loss(std::span<const double> theta, const ModelConfig& cfg,
                                const Tensor& x, std::span<const int> labels,
                                std::span<const double> weights = {},
                                kernels::Backend backend = kernels::default_backend());

struct LossAndGradient {
    double loss = 0.0;
    GradientVector gradient;
};

LossAndGradient loss_and_gradient(std::span<const double> theta, const ModelConfig& cfg,
                                  const Tensor& x, std::span<const int> labels,
                                  std::span<const double> weights = {},
                                  kernels::Backend backend = kernels::default_backend());

/// Row-wise softmax with the same max-subtraction as the loss.
Tensor softmax_rows(const Tensor& logits);

/// Per-sample CE losses (probability clamped at 1e-12), no tape.
std::vector<double> per_sample_losses(std::span<const double> theta, const ModelConfig& cfg,
                                      const Tensor& x, std::span<const int> labels);

/// Argmax per row; ties go to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);
std::vector<int> predict_labels(std::span<const double> theta, const ModelConfig& cfg,
                                const Tensor& x);

/// Calls `visit(i, gradient_i)` with each sample's own gradient, in ascending
/// sample order regardless of backend. Samples are differentiated in parallel
/// in blocks; the visitor always runs on the calling thread.
void for_each_sample_gradient(std::span<const double> theta, const ModelConfig& cfg,
                              const Tensor& x, std::span<const int> labels,
                              const std::function<void(std::size_t, const GradientVector&)>& visit,
                              kernels::Backend backend = kernels::default_backend());

} // namespace unlearn
