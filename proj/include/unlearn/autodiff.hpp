#pragma once

// Minimal reverse-mode engine. A ComputationRecord is an append-only list of
// primitive applications; the last node appended is the root that backward()
// differentiates. Parameters are leaves registered with parameter(); their
// gradients come back concatenated in registration order, which model code
// arranges to match the ParamVector layout.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "unlearn/kernels.hpp"
#include "unlearn/param_vector.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

struct NodeId {
    std::size_t index = 0;
};

/// Probabilities are clamped below at this value before every log.
inline constexpr double kProbabilityFloor = 1e-12;

class ComputationRecord {
public:
    explicit ComputationRecord(kernels::Backend backend = kernels::default_backend());

    NodeId parameter(Tensor value);
    NodeId constant(Tensor value);

    /// y[r,c] = sum_k x[r,k] * w[k,c] + b[c]
    NodeId affine(NodeId x, NodeId w, NodeId b);
    /// max(0, x); the subgradient at exactly 0 is 0.
    NodeId relu(NodeId x);
    NodeId square(NodeId x);
    NodeId sum(NodeId x);
    /// Mean over the batch of w_i * -log softmax(logits_i)[label_i]. Empty
    /// weights mean all ones. Weights are constants: no gradient flows to them.
    NodeId softmax_cross_entropy(NodeId logits, std::span<const int> labels,
                                 std::span<const double> weights = {});

    const Tensor& value(NodeId id) const { return nodes_.at(id.index).value; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    /// Total number of scalar parameters across all leaves.
    std::size_t parameter_count() const noexcept { return parameter_count_; }
    /// The root: the most recently appended node.
    NodeId root() const;
    kernels::Backend backend() const noexcept { return backend_; }

private:
    enum class Op { parameter, constant, affine, relu, square, sum, softmax_ce };

    struct Node {
        Op op;
        Tensor value;
        std::vector<std::size_t> inputs;
        std::vector<int> labels;      // softmax_ce only
        std::vector<double> weights;  // softmax_ce only
        Tensor probabilities;         // softmax_ce only
    };

    NodeId push(Node node);
    const Node& node(NodeId id) const;

    std::vector<Node> nodes_;
    std::size_t parameter_count_ = 0;
    kernels::Backend backend_;

    friend GradientVector backward(const ComputationRecord& record);
};

/// Exact gradient of the root with respect to all parameter leaves.
/// Throws if the root is not a scalar.
GradientVector backward(const ComputationRecord& record);

using ScalarFunction = std::function<double(std::span<const double>)>;
using GradientFunction = std::function<GradientVector(std::span<const double>)>;

/// Central differences (f(θ+h e_i) - f(θ-h e_i)) / 2h per coordinate.
GradientVector finite_diff_gradient(const ScalarFunction& f, std::span<const double> theta,
                                    double h);

/// H·v by central differences of the gradient along v. The step is scaled so
/// the perturbation θ ± ε·v has Euclidean length h (ε = h / ||v||).
ParamVector hessian_vector_product(const GradientFunction& grad_fn, std::span<const double> theta,
                                   std::span<const double> v, double h);

} // namespace unlearn
