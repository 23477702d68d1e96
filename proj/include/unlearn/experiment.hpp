#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/data.hpp"
#include "unlearn/methods.hpp"
#include "unlearn/metrics.hpp"
#include "unlearn/model.hpp"
#include "unlearn/trainer.hpp"

namespace unlearn {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr int kExperimentSchemaVersion = 1;

struct DatasetSpec {
    std::string csv;  // empty selects the blobs generator
    std::size_t n_per_class = 625;
    int class_count = 4;
    std::size_t dim = 8;
    double spread = 1.0;
    std::uint64_t seed = 0;
};

struct SplitSpec {
    SplitMode mode = SplitMode::random_subset;
    double fraction = 0.1;
    int class_id = 0;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// Everything needed to rerun a pipeline. Seed s is added to every component seed.
struct ExperimentConfig {
    DatasetSpec dataset;
    SplitSpec split;
    ModelConfig model{{8, 32, 32, 4}, 1.0, 0};
    TrainConfig train;
    /// Added to the init and shuffle seeds of the second retrain run (RT').
    std::uint64_t retrain_alt_offset = 7919;
    std::map<std::string, UnlearnConfig> unlearn;  // keyed by method id
    std::string output_dir = "runs/default";
    std::vector<std::uint64_t> seeds{0};

    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Component configs with seed offset `s` applied.
struct SeededConfig {
    DatasetSpec dataset;
    SplitSpec split;
    ModelConfig model;
    TrainConfig train;
    std::map<std::string, UnlearnConfig> unlearn;
};

SeededConfig apply_seed(const ExperimentConfig& cfg, std::uint64_t s);

Dataset build_dataset(const DatasetSpec& spec);
ForgetSplit build_split(const Dataset& data, const SplitSpec& spec);
/// Trains a fresh init on forget ∪ remain (the test rows are never seen).
Checkpoint pretrain(const Dataset& data, const ForgetSplit& split, const ModelConfig& model,
                    const TrainConfig& train);
/// RT' init and shuffle seeds are shifted by `offset`.
Checkpoint retrain_alternate(const Dataset& data, const ForgetSplit& split,
                             const ModelConfig& model, const TrainConfig& train,
                             std::uint64_t offset);

struct SeedRun {
    std::uint64_t seed = 0;
    Dataset data;
    ForgetSplit split;
    Checkpoint pretrained;
    Checkpoint retrained;
    Checkpoint retrained_alt;
    double noise_floor = 0.0;  // empirical KL between RT and RT'
    std::map<std::string, Checkpoint> unlearned;
    std::map<std::string, MetricsReport> reports;  // includes "pretrain" and "rt_alt"
};

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t s);

struct MetricSummary {
    double mean = 0.0;
    double stdev = 0.0;  // population
};

/// Per method: mean and population stdev of each report field across seeds.
nlohmann::json aggregate_reports(const std::vector<SeedRun>& runs);
std::string aggregate_markdown(const nlohmann::json& aggregate);
MetricSummary summarize(const std::vector<double>& xs);

/// Writes provenance.json describing how `dir` was produced.
void write_provenance(const std::filesystem::path& dir, const std::string& command,
                      const nlohmann::json& config, const std::vector<std::uint64_t>& seeds,
                      const nlohmann::json& extra = nlohmann::json::object());

/// Commands behind the CLI verbs. Each returns the directory or file written.
std::filesystem::path cmd_pretrain(const std::filesystem::path& config_path, std::uint64_t seed);
std::filesystem::path cmd_retrain(const std::filesystem::path& config_path,
                                  const std::filesystem::path& split_path, std::uint64_t seed);
std::filesystem::path cmd_unlearn(const std::filesystem::path& config_path, const std::string& method,
                                  const std::filesystem::path& pretrained_dir,
                                  const std::filesystem::path& split_path, std::uint64_t seed);
MetricsReport cmd_eval(const std::filesystem::path& model_dir,
                       const std::filesystem::path& reference_dir,
                       const std::filesystem::path& split_path,
                       const std::filesystem::path& data_path,
                       const std::filesystem::path& out_path);
/// Runs every seed and every configured method; writes report.json and report.md.
nlohmann::json cmd_report(const std::filesystem::path& config_path);

/// Seed directory for offset s: <output_dir>/seed_<s>.
std::filesystem::path seed_dir(const ExperimentConfig& cfg, std::uint64_t s);

} // namespace unlearn
