#include "unlearn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace unlearn {

void ModelConfig::validate() const {
    if (layer_sizes.size() < 2) {
        throw std::invalid_argument("ModelConfig: need at least 2 layer sizes, got " +
                                    std::to_string(layer_sizes.size()));
    }
    for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
        if (layer_sizes[i] < 1) {
            throw std::invalid_argument("ModelConfig: layer " + std::to_string(i) + " has size 0");
        }
    }
    if (!(init_scale > 0.0)) throw std::invalid_argument("ModelConfig: init_scale must be > 0");
}

std::size_t ModelConfig::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    }
    return n;
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
    j = nlohmann::json{{"layer_sizes", cfg.layer_sizes},
                       {"activation", "relu"},
                       {"init_scale", cfg.init_scale},
                       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
    j.at("layer_sizes").get_to(cfg.layer_sizes);
    cfg.init_scale = j.value("init_scale", 1.0);
    cfg.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("activation") && j.at("activation") != "relu") {
        throw std::invalid_argument("ModelConfig: only relu activation is supported");
    }
}

std::vector<LayerSlice> layer_layout(const ModelConfig& cfg) {
    std::vector<LayerSlice> layout;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < cfg.layer_sizes.size(); ++l) {
        LayerSlice s;
        s.in = cfg.layer_sizes[l];
        s.out = cfg.layer_sizes[l + 1];
        s.weight_offset = offset;
        s.bias_offset = offset + s.in * s.out;
        offset = s.bias_offset + s.out;
        layout.push_back(s);
    }
    return layout;
}

ParamVector init_params(const ModelConfig& cfg) {
    cfg.validate();
    ParamVector theta(cfg.param_count());
    std::mt19937_64 rng(cfg.seed);
    for (const auto& layer : layer_layout(cfg)) {
        const double s = cfg.init_scale / std::sqrt(static_cast<double>(layer.in));
        std::uniform_real_distribution<double> dist(-s, s);
        for (std::size_t i = 0; i < layer.in * layer.out; ++i) {
            theta[layer.weight_offset + i] = dist(rng);
        }
    }
    return theta;
}

namespace {

void check_input(std::span<const double> theta, const ModelConfig& cfg, const Tensor& x) {
    if (theta.size() != cfg.param_count()) {
        throw std::invalid_argument("parameter vector has " + std::to_string(theta.size()) +
                                    " values, model expects " +
                                    std::to_string(cfg.param_count()));
    }
    if (x.rank() != 2 || x.cols() != cfg.input_dim()) {
        throw std::invalid_argument("input shape " + shape_string(x.shape()) +
                                    " does not match model input width " +
                                    std::to_string(cfg.input_dim()));
    }
}

Tensor slice_tensor(std::span<const double> theta, std::size_t offset,
                    std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return Tensor(std::move(shape),
                  std::vector<double>(theta.begin() + static_cast<std::ptrdiff_t>(offset),
                                      theta.begin() + static_cast<std::ptrdiff_t>(offset + n)));
}

} // namespace

Tensor forward_logits(std::span<const double> theta, const ModelConfig& cfg, const Tensor& x,
                      kernels::Backend backend) {
    check_input(theta, cfg, x);
    const auto layout = layer_layout(cfg);
    const std::size_t batch = x.rows();
    Tensor h = x;
    for (std::size_t l = 0; l < layout.size(); ++l) {
        const auto& s = layout[l];
        Tensor y({batch, s.out});
        kernels::affine_forward(backend, h.data(), theta.subspan(s.weight_offset, s.in * s.out),
                                theta.subspan(s.bias_offset, s.out), y.data(), batch, s.in, s.out);
        if (l + 1 < layout.size()) {
            for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
        }
        h = std::move(y);
    }
    return h;
}

ComputationRecord weighted_loss(std::span<const double> theta, const ModelConfig& cfg,
                                const Tensor& x, std::span<const int> labels,
                                std::span<const double> weights, kernels::Backend backend) {
    check_input(theta, cfg, x);
    const auto layout = layer_layout(cfg);
    ComputationRecord rec(backend);
    // Register every parameter leaf first, in ParamVector order.
    std::vector<std::pair<NodeId, NodeId>> params;
    for (const auto& s : layout) {
        const NodeId w = rec.parameter(slice_tensor(theta, s.weight_offset, {s.in, s.out}));
        const NodeId b = rec.parameter(slice_tensor(theta, s.bias_offset, {s.out}));
        params.emplace_back(w, b);
    }
    NodeId h = rec.constant(x);
    for (std::size_t l = 0; l < layout.size(); ++l) {
        h = rec.affine(h, params[l].first, params[l].second);
        if (l + 1 < layout.size()) h = rec.relu(h);
    }
    rec.softmax_cross_entropy(h, labels, weights);
    return rec;
}

LossAndGradient loss_and_gradient(std::span<const double> theta, const ModelConfig& cfg,
                                  const Tensor& x, std::span<const int> labels,
                                  std::span<const double> weights, kernels::Backend backend) {
    const ComputationRecord rec = weighted_loss(theta, cfg, x, labels, weights, backend);
    return LossAndGradient{rec.value(rec.root()).item(), backward(rec)};
}

Tensor softmax_rows(const Tensor& logits) {
    Tensor p = logits;
    const std::size_t classes = logits.cols();
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto zr = logits.row(i);
        const double m = *std::max_element(zr.begin(), zr.end());
        double s = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            p.at(i, c) = std::exp(zr[c] - m);
            s += p.at(i, c);
        }
        for (std::size_t c = 0; c < classes; ++c) p.at(i, c) /= s;
    }
    return p;
}

std::vector<double> per_sample_losses(std::span<const double> theta, const ModelConfig& cfg,
                                      const Tensor& x, std::span<const int> labels) {
    const Tensor z = forward_logits(theta, cfg, x);
    if (labels.size() != z.rows()) {
        throw std::invalid_argument("per_sample_losses: label count mismatch");
    }
    const double log_floor = std::log(kProbabilityFloor);
    std::vector<double> losses(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= z.cols()) {
            throw std::invalid_argument("per_sample_losses: label " + std::to_string(labels[i]) +
                                        " out of range at row " + std::to_string(i));
        }
        const auto zr = z.row(i);
        const double m = *std::max_element(zr.begin(), zr.end());
        double s = 0.0;
        for (double v : zr) s += std::exp(v - m);
        losses[i] = -std::max(zr[labels[i]] - m - std::log(s), log_floor);
    }
    return losses;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto zr = logits.row(i);
        // max_element returns the first maximum, i.e. the lowest index on ties.
        out[i] = static_cast<int>(std::max_element(zr.begin(), zr.end()) - zr.begin());
    }
    return out;
}

std::vector<int> predict_labels(std::span<const double> theta, const ModelConfig& cfg,
                                const Tensor& x) {
    return argmax_rows(forward_logits(theta, cfg, x));
}

void for_each_sample_gradient(std::span<const double> theta, const ModelConfig& cfg,
                              const Tensor& x, std::span<const int> labels,
                              const std::function<void(std::size_t, const GradientVector&)>& visit,
                              kernels::Backend backend) {
    check_input(theta, cfg, x);
    if (labels.size() != x.rows()) {
        throw std::invalid_argument("for_each_sample_gradient: label count mismatch");
    }
    constexpr std::size_t kBlock = 128;
    const std::size_t n = x.rows();
    const std::size_t dim = x.cols();
    std::vector<GradientVector> block(std::min(kBlock, n));
    for (std::size_t start = 0; start < n; start += kBlock) {
        const std::size_t count = std::min(kBlock, n - start);
        kernels::for_each_index(backend, count, [&](std::size_t j) {
            const std::size_t i = start + j;
            const auto row = x.row(i);
            Tensor xi({1, dim}, std::vector<double>(row.begin(), row.end()));
            // The tape inside a sample is always serial; parallelism is across samples.
            block[j] = loss_and_gradient(theta, cfg, xi, labels.subspan(i, 1), {},
                                         kernels::Backend::serial)
                           .gradient;
        });
        for (std::size_t j = 0; j < count; ++j) visit(start + j, block[j]);
    }
}

} // namespace unlearn
