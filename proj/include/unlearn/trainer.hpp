#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/data.hpp"
#include "unlearn/model.hpp"
#include "unlearn/param_vector.hpp"

namespace unlearn {

enum class Schedule { constant, cosine };

std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& s);

struct TrainConfig {
    double lr = 0.1;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    Schedule schedule = Schedule::cosine;
    double momentum = 0.9;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

/// Learning rate at `step` of `total`: lr, or lr * (1 + cos(pi * step / total)) / 2.
double scheduled_lr(double lr, Schedule schedule, std::size_t step, std::size_t total);

struct Provenance {
    std::string role;  // pretrain | retrain | unlearned
    std::string method;
    std::vector<std::uint64_t> seeds;
    double wall_seconds = 0.0;
    nlohmann::json extra = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const Provenance& p);
void from_json(const nlohmann::json& j, Provenance& p);

struct Checkpoint {
    ParamVector params;
    ModelConfig model;
    Provenance provenance;
};

/// Observes every minibatch (dataset row indices) before its gradient is taken.
using BatchObserver = std::function<void(std::span<const std::size_t>)>;

struct SgdOptions {
    /// +1 for descent, -1 for ascent.
    double direction = 1.0;
    /// Optional per-row label override, aligned with `rows`.
    std::span<const int> labels = {};
    /// Optional elementwise gradient multiplier (a 0/1 mask).
    std::span<const double> grad_mask = {};
    BatchObserver on_batch;
};

struct SgdResult {
    ParamVector params;
    double wall_seconds = 0.0;
    std::vector<double> epoch_losses;  // mean minibatch loss per epoch
};

/// Minibatch SGD with momentum (v <- mu v + g; θ <- θ - direction * lr_t * v)
/// over seeded per-epoch shuffles of `rows`. Throws on a non-finite loss,
/// naming the step.
SgdResult run_sgd(ParamVector init, const ModelConfig& model, const TrainConfig& cfg,
                  const Dataset& data, std::span<const std::size_t> rows,
                  const SgdOptions& options = {});

Checkpoint sgd_train(const ParamVector& init, const ModelConfig& model, const TrainConfig& cfg,
                     const Dataset& data, std::span<const std::size_t> indices,
                     const BatchObserver& on_batch = {});

/// Fresh init from model.seed, then SGD on the remain set only. Every batch is
/// checked against the forget set; touching a forget row is a logic error.
Checkpoint retrain_oracle(const ModelConfig& model, const TrainConfig& cfg, const Dataset& data,
                          const ForgetSplit& split, const BatchObserver& on_batch = {});

inline constexpr int kCheckpointSchemaVersion = 1;

/// Writes manifest.json and params.bin (raw little-endian f64) into `dir`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace unlearn
