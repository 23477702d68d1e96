#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "unlearn/tensor.hpp"

namespace unlearn {

struct Dataset {
    Tensor features;  // [N, I]
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const { return features.cols(); }
    void validate() const;

    /// Copies the selected rows into a contiguous [n, I] tensor.
    Tensor gather_features(std::span<const std::size_t> rows) const;
    std::vector<int> gather_labels(std::span<const std::size_t> rows) const;

    bool operator==(const Dataset&) const = default;
};

enum class SplitMode { random_subset, classwise };

struct ForgetSplit {
    std::vector<std::size_t> forget;
    std::vector<std::size_t> remain;
    std::vector<std::size_t> test;
    SplitMode mode = SplitMode::random_subset;
    double fraction = 0.0;  // random_subset
    int class_id = -1;      // classwise

    double p_forget() const;
    double p_remain() const;
    /// Throws if sets overlap or forget/remain is empty.
    void validate() const;

    bool operator==(const ForgetSplit&) const = default;
};

/// Gaussian clusters. Class means are seeded points on the sphere of radius 2;
/// each class has isotropic standard deviation `spread`. Rows are class-major.
Dataset generate_blobs(std::uint64_t seed, std::size_t n_per_class, int class_count,
                       std::size_t dim, double spread);

/// Test rows are drawn first; |forget| = round(fraction * pool).
ForgetSplit make_random_subset_split(const Dataset& data, double fraction, double test_fraction,
                                     std::uint64_t seed);

/// Forget = every training row of `class_id`. Test rows come only from other
/// classes, so the test set never contains the forgotten class.
ForgetSplit make_classwise_split(const Dataset& data, int class_id, double test_fraction,
                                 std::uint64_t seed);

/// CSV with header "label,f0,f1,...", values written with 17 significant digits.
Dataset load_csv_dataset(const std::filesystem::path& path);
void save_csv_dataset(const Dataset& data, const std::filesystem::path& path);

nlohmann::json split_to_json(const ForgetSplit& split);
ForgetSplit split_from_json(const nlohmann::json& j);
void save_split(const ForgetSplit& split, const std::filesystem::path& path);
ForgetSplit load_split(const std::filesystem::path& path);

std::string to_string(SplitMode mode);
SplitMode split_mode_from_string(const std::string& s);

/// Writes text exactly as given (binary mode, no newline translation).
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

} // namespace unlearn
