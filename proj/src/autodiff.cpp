#include "unlearn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace unlearn {

namespace {

const double kLogFloor = std::log(kProbabilityFloor);

} // namespace

ComputationRecord::ComputationRecord(kernels::Backend backend) : backend_(backend) {}

NodeId ComputationRecord::push(Node node) {
    nodes_.push_back(std::move(node));
    return NodeId{nodes_.size() - 1};
}

const ComputationRecord::Node& ComputationRecord::node(NodeId id) const {
    if (id.index >= nodes_.size()) {
        throw std::out_of_range("node " + std::to_string(id.index) + " not in record of " +
                                std::to_string(nodes_.size()) + " nodes");
    }
    return nodes_[id.index];
}

NodeId ComputationRecord::root() const {
    if (nodes_.empty()) throw std::logic_error("empty computation record has no root");
    return NodeId{nodes_.size() - 1};
}

NodeId ComputationRecord::parameter(Tensor value) {
    parameter_count_ += value.size();
    return push(Node{Op::parameter, std::move(value), {}, {}, {}, {}});
}

NodeId ComputationRecord::constant(Tensor value) {
    return push(Node{Op::constant, std::move(value), {}, {}, {}, {}});
}

NodeId ComputationRecord::affine(NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = node(x).value;
    const Tensor& wv = node(w).value;
    const Tensor& bv = node(b).value;
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.cols() != wv.rows() ||
        bv.size() != wv.cols()) {
        throw std::invalid_argument("affine: shape mismatch x" + shape_string(xv.shape()) + " W" +
                                    shape_string(wv.shape()) + " b" + shape_string(bv.shape()) +
                                    " (expected x[B,I], W[I,O], b[O])");
    }
    const std::size_t batch = xv.rows();
    const std::size_t in = wv.rows();
    const std::size_t out = wv.cols();
    Tensor y({batch, out});
    kernels::affine_forward(backend_, xv.data(), wv.data(), bv.data(), y.data(), batch, in, out);
    return push(Node{Op::affine, std::move(y), {x.index, w.index, b.index}, {}, {}, {}});
}

NodeId ComputationRecord::relu(NodeId x) {
    Tensor y = node(x).value;
    for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
    return push(Node{Op::relu, std::move(y), {x.index}, {}, {}, {}});
}

NodeId ComputationRecord::square(NodeId x) {
    Tensor y = node(x).value;
    for (double& v : y.data()) v = v * v;
    return push(Node{Op::square, std::move(y), {x.index}, {}, {}, {}});
}

NodeId ComputationRecord::sum(NodeId x) {
    double acc = 0.0;
    for (double v : node(x).value.data()) acc += v;
    return push(Node{Op::sum, Tensor::scalar(acc), {x.index}, {}, {}, {}});
}

NodeId ComputationRecord::softmax_cross_entropy(NodeId logits, std::span<const int> labels,
                                                std::span<const double> weights) {
    const Tensor& z = node(logits).value;
    if (z.rank() != 2) {
        throw std::invalid_argument("softmax_cross_entropy: logits must be [B,C], got " +
                                    shape_string(z.shape()));
    }
    const std::size_t batch = z.rows();
    const std::size_t classes = z.cols();
    if (labels.size() != batch) {
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(batch));
    }
    if (!weights.empty() && weights.size() != batch) {
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(weights.size()) +
                                    " weights for batch of " + std::to_string(batch));
    }
    for (std::size_t i = 0; i < batch; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw std::invalid_argument("softmax_cross_entropy: label " +
                                        std::to_string(labels[i]) + " at row " +
                                        std::to_string(i) + " outside [0," +
                                        std::to_string(classes) + ")");
        }
        if (!weights.empty() && !std::isfinite(weights[i])) {
            throw std::invalid_argument("softmax_cross_entropy: non-finite weight at row " +
                                        std::to_string(i));
        }
    }

    Tensor probs({batch, classes});
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const auto zr = z.row(i);
        const double m = *std::max_element(zr.begin(), zr.end());
        double s = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            const double e = std::exp(zr[c] - m);
            probs.at(i, c) = e;
            s += e;
        }
        for (std::size_t c = 0; c < classes; ++c) probs.at(i, c) /= s;
        const double log_p = zr[labels[i]] - m - std::log(s);
        const double w = weights.empty() ? 1.0 : weights[i];
        total += w * -std::max(log_p, kLogFloor);
    }
    const double loss = batch == 0 ? 0.0 : total / static_cast<double>(batch);

    return push(Node{Op::softmax_ce, Tensor::scalar(loss), {logits.index},
                     std::vector<int>(labels.begin(), labels.end()),
                     std::vector<double>(weights.begin(), weights.end()), std::move(probs)});
}

GradientVector backward(const ComputationRecord& record) {
    const NodeId root = record.root();
    const auto& nodes = record.nodes_;
    if (nodes[root.index].value.size() != 1) {
        throw std::invalid_argument("backward: root must be scalar, got shape " +
                                    shape_string(nodes[root.index].value.shape()));
    }

    std::vector<Tensor> grads;
    grads.reserve(nodes.size());
    for (const auto& n : nodes) grads.emplace_back(n.value.shape());
    grads[root.index][0] = 1.0;

    using Op = ComputationRecord::Op;
    for (std::size_t idx = root.index + 1; idx-- > 0;) {
        const auto& n = nodes[idx];
        const Tensor& g = grads[idx];
        switch (n.op) {
        case Op::parameter:
        case Op::constant:
            break;
        case Op::affine: {
            const Tensor& x = nodes[n.inputs[0]].value;
            const Tensor& w = nodes[n.inputs[1]].value;
            const std::size_t batch = x.rows();
            const std::size_t in = w.rows();
            const std::size_t out = w.cols();
            if (nodes[n.inputs[0]].op != Op::constant) {
                kernels::affine_backward_input(record.backend_, g.data(), w.data(),
                                               grads[n.inputs[0]].data(), batch, in, out);
            }
            kernels::affine_backward_params(record.backend_, x.data(), g.data(),
                                            grads[n.inputs[1]].data(), grads[n.inputs[2]].data(),
                                            batch, in, out);
            break;
        }
        case Op::relu: {
            const Tensor& x = nodes[n.inputs[0]].value;
            Tensor& gx = grads[n.inputs[0]];
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (x[i] > 0.0) gx[i] += g[i];
            }
            break;
        }
        case Op::square: {
            const Tensor& x = nodes[n.inputs[0]].value;
            Tensor& gx = grads[n.inputs[0]];
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] += 2.0 * x[i] * g[i];
            break;
        }
        case Op::sum: {
            Tensor& gx = grads[n.inputs[0]];
            const double up = g[0];
            for (double& v : gx.data()) v += up;
            break;
        }
        case Op::softmax_ce: {
            const Tensor& p = n.probabilities;
            Tensor& gz = grads[n.inputs[0]];
            const std::size_t batch = p.rows();
            const std::size_t classes = p.cols();
            const double up = g[0] / static_cast<double>(batch);
            for (std::size_t i = 0; i < batch; ++i) {
                const std::size_t y = static_cast<std::size_t>(n.labels[i]);
                // Below the probability floor the clamped loss is flat.
                if (p.at(i, y) < kProbabilityFloor) continue;
                const double w = (n.weights.empty() ? 1.0 : n.weights[i]) * up;
                for (std::size_t c = 0; c < classes; ++c) {
                    gz.at(i, c) += w * (p.at(i, c) - (c == y ? 1.0 : 0.0));
                }
            }
            break;
        }
        }
    }

    GradientVector out(record.parameter_count());
    std::size_t offset = 0;
    for (std::size_t idx = 0; idx < nodes.size(); ++idx) {
        if (nodes[idx].op != Op::parameter) continue;
        const auto src = grads[idx].data();
        std::copy(src.begin(), src.end(), out.values.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += src.size();
    }
    return out;
}

GradientVector finite_diff_gradient(const ScalarFunction& f, std::span<const double> theta,
                                    double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: h must be > 0");
    std::vector<double> probe(theta.begin(), theta.end());
    GradientVector g(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw std::domain_error("finite_diff_gradient: non-finite evaluation at coordinate " +
                                    std::to_string(i));
        }
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

ParamVector hessian_vector_product(const GradientFunction& grad_fn, std::span<const double> theta,
                                   std::span<const double> v, double h) {
    if (v.size() != theta.size()) {
        throw std::invalid_argument("hessian_vector_product: |v| = " + std::to_string(v.size()) +
                                    " but |theta| = " + std::to_string(theta.size()));
    }
    if (!(h > 0.0)) throw std::invalid_argument("hessian_vector_product: h must be > 0");
    const double vn = vec::norm(v);
    ParamVector hv(theta.size());
    if (vn == 0.0) return hv;

    const double eps = h / vn;
    std::vector<double> plus(theta.begin(), theta.end());
    std::vector<double> minus(theta.begin(), theta.end());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        plus[i] += eps * v[i];
        minus[i] -= eps * v[i];
    }
    const GradientVector gp = grad_fn(plus);
    const GradientVector gm = grad_fn(minus);
    if (gp.size() != theta.size() || gm.size() != theta.size()) {
        throw std::invalid_argument("hessian_vector_product: gradient length mismatch");
    }
    if (!vec::all_finite(gp.span()) || !vec::all_finite(gm.span())) {
        throw std::domain_error("hessian_vector_product: non-finite gradient");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) hv[i] = (gp[i] - gm[i]) / (2.0 * eps);
    return hv;
}

} // namespace unlearn
