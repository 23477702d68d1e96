#include "unlearn/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace unlearn {

std::string to_string(Schedule s) { return s == Schedule::constant ? "constant" : "cosine"; }

Schedule schedule_from_string(const std::string& s) {
    if (s == "constant") return Schedule::constant;
    if (s == "cosine") return Schedule::cosine;
    throw std::invalid_argument("unknown schedule '" + s + "'");
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
    }
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
    j = nlohmann::json{{"lr", cfg.lr},
                       {"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"schedule", to_string(cfg.schedule)},
                       {"momentum", cfg.momentum},
                       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
    TrainConfig d;
    cfg.lr = j.value("lr", d.lr);
    cfg.epochs = j.value("epochs", d.epochs);
    cfg.batch_size = j.value("batch_size", d.batch_size);
    cfg.schedule = schedule_from_string(j.value("schedule", to_string(d.schedule)));
    cfg.momentum = j.value("momentum", d.momentum);
    cfg.seed = j.value("seed", d.seed);
}

double scheduled_lr(double lr, Schedule schedule, std::size_t step, std::size_t total) {
    if (schedule == Schedule::constant || total == 0) return lr;
    const double frac = static_cast<double>(step) / static_cast<double>(total);
    return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void to_json(nlohmann::json& j, const Provenance& p) {
    j = nlohmann::json{{"role", p.role},
                       {"method", p.method},
                       {"seeds", p.seeds},
                       {"wall_seconds", p.wall_seconds},
                       {"extra", p.extra}};
}

void from_json(const nlohmann::json& j, Provenance& p) {
    p.role = j.value("role", std::string{});
    p.method = j.value("method", std::string{});
    p.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    p.wall_seconds = j.value("wall_seconds", 0.0);
    p.extra = j.value("extra", nlohmann::json::object());
}

SgdResult run_sgd(ParamVector init, const ModelConfig& model, const TrainConfig& cfg,
                  const Dataset& data, std::span<const std::size_t> rows,
                  const SgdOptions& options) {
    cfg.validate();
    if (rows.empty()) throw std::invalid_argument("run_sgd: no training rows");
    if (!options.labels.empty() && options.labels.size() != rows.size()) {
        throw std::invalid_argument("run_sgd: label override must align with rows");
    }
    if (!options.grad_mask.empty() && options.grad_mask.size() != init.size()) {
        throw std::invalid_argument("run_sgd: gradient mask length mismatch");
    }

    const auto start = std::chrono::steady_clock::now();
    SgdResult result;
    result.params = std::move(init);
    if (cfg.epochs == 0) return result;

    const std::size_t n = rows.size();
    const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total = per_epoch * cfg.epochs;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(n);  // positions into `rows`
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> velocity(result.params.size(), 0.0);
    std::vector<std::size_t> batch_rows;
    std::vector<int> batch_labels;

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(n, lo + cfg.batch_size);
            batch_rows.clear();
            batch_labels.clear();
            for (std::size_t p = lo; p < hi; ++p) {
                batch_rows.push_back(rows[order[p]]);
                batch_labels.push_back(options.labels.empty() ? data.labels.at(rows[order[p]])
                                                              : options.labels[order[p]]);
            }
            if (options.on_batch) options.on_batch(batch_rows);

            const Tensor x = data.gather_features(batch_rows);
            auto lg = loss_and_gradient(result.params.span(), model, x, batch_labels);
            if (!std::isfinite(lg.loss)) {
                throw std::runtime_error("non-finite loss at step " + std::to_string(step));
            }
            epoch_loss += lg.loss;
            if (!options.grad_mask.empty()) {
                for (std::size_t i = 0; i < lg.gradient.size(); ++i) {
                    lg.gradient[i] *= options.grad_mask[i];
                }
            }
            const double lr = scheduled_lr(cfg.lr, cfg.schedule, step, total);
            for (std::size_t i = 0; i < velocity.size(); ++i) {
                velocity[i] = cfg.momentum * velocity[i] + lg.gradient[i];
                result.params[i] -= options.direction * lr * velocity[i];
            }
            if (!vec::all_finite(result.params.span())) {
                throw std::runtime_error("non-finite parameters at step " + std::to_string(step));
            }
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(per_epoch));
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

Checkpoint sgd_train(const ParamVector& init, const ModelConfig& model, const TrainConfig& cfg,
                     const Dataset& data, std::span<const std::size_t> indices,
                     const BatchObserver& on_batch) {
    SgdOptions options;
    options.on_batch = on_batch;
    SgdResult r = run_sgd(init, model, cfg, data, indices, options);
    Checkpoint ckpt;
    ckpt.params = std::move(r.params);
    ckpt.model = model;
    ckpt.provenance.role = "pretrain";
    ckpt.provenance.method = "sgd";
    ckpt.provenance.seeds = {model.seed, cfg.seed};
    ckpt.provenance.wall_seconds = r.wall_seconds;
    ckpt.provenance.extra["epoch_losses"] = r.epoch_losses;
    return ckpt;
}

Checkpoint retrain_oracle(const ModelConfig& model, const TrainConfig& cfg, const Dataset& data,
                          const ForgetSplit& split, const BatchObserver& on_batch) {
    split.validate();
    const std::unordered_set<std::size_t> forget(split.forget.begin(), split.forget.end());
    const BatchObserver guard = [&](std::span<const std::size_t> batch) {
        for (std::size_t r : batch) {
            if (forget.contains(r)) {
                throw std::logic_error("retrain touched forget row " + std::to_string(r));
            }
        }
        if (on_batch) on_batch(batch);
    };
    Checkpoint ckpt = sgd_train(init_params(model), model, cfg, data, split.remain, guard);
    ckpt.provenance.role = "retrain";
    ckpt.provenance.method = "rt";
    return ckpt;
}

namespace {

void to_little_endian(std::span<const double> values, std::string& bytes) {
    bytes.resize(values.size() * sizeof(double));
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (std::size_t b = 0; b < 8; ++b) {
            bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
        }
    }
}

std::vector<double> from_little_endian(const std::string& bytes) {
    std::vector<double> values(bytes.size() / 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        for (std::size_t b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b]))
                    << (8 * b);
        }
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
    if (ckpt.params.size() != ckpt.model.param_count()) {
        throw std::invalid_argument("checkpoint params do not match model config");
    }
    std::filesystem::create_directories(dir);
    nlohmann::json manifest{{"schema_version", kCheckpointSchemaVersion},
                            {"model_config", ckpt.model},
                            {"provenance", ckpt.provenance},
                            {"param_count", ckpt.params.size()},
                            {"dtype", "f64"},
                            {"blob", "params.bin"}};
    std::string blob;
    to_little_endian(ckpt.params.span(), blob);
    write_text_file(dir / "params.bin", blob);
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    const int version = manifest.value("schema_version", -1);
    if (version != kCheckpointSchemaVersion) {
        throw std::runtime_error(dir.string() + ": unknown checkpoint schema_version " +
                                 std::to_string(version));
    }
    if (manifest.value("dtype", std::string{}) != "f64") {
        throw std::runtime_error(dir.string() + ": unsupported dtype");
    }
    Checkpoint ckpt;
    ckpt.model = manifest.at("model_config").get<ModelConfig>();
    ckpt.model.validate();
    ckpt.provenance = manifest.value("provenance", nlohmann::json::object()).get<Provenance>();
    const auto count = manifest.at("param_count").get<std::size_t>();
    const std::string blob =
        read_text_file(dir / manifest.value("blob", std::string{"params.bin"}));
    if (blob.size() != count * sizeof(double)) {
        throw std::runtime_error(dir.string() + ": param_count " + std::to_string(count) +
                                 " needs " + std::to_string(count * sizeof(double)) +
                                 " bytes, blob has " + std::to_string(blob.size()));
    }
    if (count != ckpt.model.param_count()) {
        throw std::runtime_error(dir.string() + ": param_count " + std::to_string(count) +
                                 " does not match model (" +
                                 std::to_string(ckpt.model.param_count()) + ")");
    }
    ckpt.params = ParamVector(from_little_endian(blob));
    return ckpt;
}

} // namespace unlearn
