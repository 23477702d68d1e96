#include "unlearn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace unlearn {

void Dataset::validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset is empty");
    if (features.rank() != 2 || features.rows() != labels.size()) {
        throw std::invalid_argument("dataset features " + shape_string(features.shape()) +
                                    " do not match " + std::to_string(labels.size()) + " labels");
    }
    if (class_count < 1) throw std::invalid_argument("dataset class_count must be >= 1");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count) {
            throw std::invalid_argument("dataset label " + std::to_string(labels[i]) + " at row " +
                                        std::to_string(i) + " outside [0," +
                                        std::to_string(class_count) + ")");
        }
    }
}

Tensor Dataset::gather_features(std::span<const std::size_t> rows) const {
    const std::size_t d = dim();
    std::vector<double> out;
    out.reserve(rows.size() * d);
    for (std::size_t r : rows) {
        if (r >= size()) throw std::out_of_range("row " + std::to_string(r) + " out of range");
        const auto src = features.row(r);
        out.insert(out.end(), src.begin(), src.end());
    }
    return Tensor::matrix(rows.size(), d, std::move(out));
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> rows) const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(labels.at(r));
    return out;
}

double ForgetSplit::p_forget() const {
    return static_cast<double>(forget.size()) / static_cast<double>(forget.size() + remain.size());
}

double ForgetSplit::p_remain() const { return 1.0 - p_forget(); }

void ForgetSplit::validate() const {
    if (forget.empty()) throw std::invalid_argument("split: forget set is empty");
    if (remain.empty()) throw std::invalid_argument("split: remain set is empty");
    std::unordered_set<std::size_t> seen;
    auto insert_all = [&](const std::vector<std::size_t>& idx, const char* name) {
        for (std::size_t i : idx) {
            if (!seen.insert(i).second) {
                throw std::invalid_argument(std::string("split: index ") + std::to_string(i) +
                                            " appears twice (in " + name + ")");
            }
        }
    };
    insert_all(forget, "forget");
    insert_all(remain, "remain");
    insert_all(test, "test");
}

Dataset generate_blobs(std::uint64_t seed, std::size_t n_per_class, int class_count,
                       std::size_t dim, double spread) {
    if (n_per_class < 1 || class_count < 1 || dim < 1) {
        throw std::invalid_argument("generate_blobs: counts must be >= 1");
    }
    if (!(spread > 0.0)) throw std::invalid_argument("generate_blobs: spread must be > 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::vector<double>> means(static_cast<std::size_t>(class_count));
    for (auto& m : means) {
        double n2 = 0.0;
        do {
            m.assign(dim, 0.0);
            n2 = 0.0;
            for (auto& v : m) {
                v = normal(rng);
                n2 += v * v;
            }
        } while (n2 == 0.0);
        const double scale = 2.0 / std::sqrt(n2);
        for (auto& v : m) v *= scale;
    }

    const std::size_t n = n_per_class * static_cast<std::size_t>(class_count);
    std::vector<double> x;
    x.reserve(n * dim);
    Dataset data;
    data.class_count = class_count;
    data.labels.reserve(n);
    for (int c = 0; c < class_count; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i) {
            for (std::size_t d = 0; d < dim; ++d) {
                x.push_back(means[static_cast<std::size_t>(c)][d] + spread * normal(rng));
            }
            data.labels.push_back(c);
        }
    }
    data.features = Tensor::matrix(n, dim, std::move(x));
    return data;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

std::size_t round_count(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

void sort_all(ForgetSplit& s) {
    std::sort(s.forget.begin(), s.forget.end());
    std::sort(s.remain.begin(), s.remain.end());
    std::sort(s.test.begin(), s.test.end());
}

} // namespace

ForgetSplit make_random_subset_split(const Dataset& data, double fraction, double test_fraction,
                                     std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("random subset split: fraction must be in (0,1)");
    }
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("random subset split: test_fraction must be in [0,1)");
    }
    std::mt19937_64 rng(seed);
    const auto order = shuffled_indices(data.size(), rng);
    const std::size_t n_test = round_count(test_fraction, data.size());
    const std::size_t pool = data.size() - n_test;
    const std::size_t n_forget = round_count(fraction, pool);

    ForgetSplit s;
    s.mode = SplitMode::random_subset;
    s.fraction = fraction;
    s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.forget.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                    order.begin() + static_cast<std::ptrdiff_t>(n_test + n_forget));
    s.remain.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_forget), order.end());
    sort_all(s);
    s.validate();
    return s;
}

ForgetSplit make_classwise_split(const Dataset& data, int class_id, double test_fraction,
                                 std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("classwise split: test_fraction must be in [0,1)");
    }
    if (std::find(data.labels.begin(), data.labels.end(), class_id) == data.labels.end()) {
        throw std::invalid_argument("classwise split: class " + std::to_string(class_id) +
                                    " not present in dataset");
    }
    std::mt19937_64 rng(seed);
    const auto order = shuffled_indices(data.size(), rng);
    const std::size_t n_test = round_count(test_fraction, data.size());

    ForgetSplit s;
    s.mode = SplitMode::classwise;
    s.class_id = class_id;
    for (std::size_t i : order) {
        if (data.labels[i] == class_id) {
            s.forget.push_back(i);
        } else if (s.test.size() < n_test) {
            s.test.push_back(i);
        } else {
            s.remain.push_back(i);
        }
    }
    sort_all(s);
    s.validate();
    return s;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

template <typename T>
bool parse_exact(std::string_view token, T& out) {
    const char* first = token.data();
    const char* last = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && first != last;
}

} // namespace

Dataset load_csv_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_commas(line);
    if (header.size() < 2 || header[0] != "label") {
        throw std::runtime_error(path.string() + ":1: header must be label,f0,f1,...");
    }
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (header[i] != "f" + std::to_string(i - 1)) {
            throw std::runtime_error(path.string() + ":1: unexpected column '" +
                                     std::string(header[i]) + "'");
        }
    }
    const std::size_t dim = header.size() - 1;

    std::vector<double> x;
    Dataset data;
    std::size_t line_no = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_commas(line);
        const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
        if (fields.size() != dim + 1) {
            throw std::runtime_error(where + "expected " + std::to_string(dim + 1) +
                                     " fields, got " + std::to_string(fields.size()));
        }
        int label = 0;
        if (!parse_exact(fields[0], label) || label < 0) {
            throw std::runtime_error(where + "invalid label '" + std::string(fields[0]) + "'");
        }
        for (std::size_t d = 1; d <= dim; ++d) {
            double v = 0.0;
            if (!parse_exact(fields[d], v) || !std::isfinite(v)) {
                throw std::runtime_error(where + "invalid value '" + std::string(fields[d]) +
                                         "' in column f" + std::to_string(d - 1));
            }
            x.push_back(v);
        }
        data.labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    if (data.labels.empty()) throw std::runtime_error(path.string() + ": no data rows");
    data.class_count = max_label + 1;
    data.features = Tensor::matrix(data.labels.size(), dim, std::move(x));
    return data;
}

void save_csv_dataset(const Dataset& data, const std::filesystem::path& path) {
    data.validate();
    std::string out = "label";
    for (std::size_t d = 0; d < data.dim(); ++d) out += ",f" + std::to_string(d);
    out += '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out += std::to_string(data.labels[i]);
        for (double v : data.features.row(i)) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    write_text_file(path, out);
}

std::string to_string(SplitMode mode) {
    return mode == SplitMode::random_subset ? "random_subset" : "classwise";
}

SplitMode split_mode_from_string(const std::string& s) {
    if (s == "random_subset") return SplitMode::random_subset;
    if (s == "classwise") return SplitMode::classwise;
    throw std::invalid_argument("unknown split mode '" + s + "'");
}

nlohmann::json split_to_json(const ForgetSplit& split) {
    nlohmann::json j{{"schema_version", 1},
                     {"mode", to_string(split.mode)},
                     {"forget", split.forget},
                     {"remain", split.remain},
                     {"test", split.test}};
    if (split.mode == SplitMode::random_subset) {
        j["fraction"] = split.fraction;
    } else {
        j["class_id"] = split.class_id;
    }
    return j;
}

ForgetSplit split_from_json(const nlohmann::json& j) {
    if (j.value("schema_version", 0) != 1) {
        throw std::invalid_argument("split: unsupported schema_version");
    }
    ForgetSplit s;
    s.mode = split_mode_from_string(j.at("mode").get<std::string>());
    j.at("forget").get_to(s.forget);
    j.at("remain").get_to(s.remain);
    j.at("test").get_to(s.test);
    if (s.mode == SplitMode::random_subset) {
        s.fraction = j.value("fraction", 0.0);
    } else {
        s.class_id = j.at("class_id").get<int>();
    }
    s.validate();
    return s;
}

void save_split(const ForgetSplit& split, const std::filesystem::path& path) {
    write_text_file(path, split_to_json(split).dump(2) + "\n");
}

ForgetSplit load_split(const std::filesystem::path& path) {
    return split_from_json(nlohmann::json::parse(read_text_file(path)));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace unlearn
