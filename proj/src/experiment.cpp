#include "unlearn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace unlearn {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string>& report_fields() {
    static const std::vector<std::string> f{"fa", "ra", "ta", "mia", "avg_d", "kl_to_ref",
                                            "rte_seconds"};
    return f;
}

fs::path dataset_next_to(const fs::path& split_path) {
    return split_path.parent_path() / "dataset.csv";
}

UnlearnConfig config_for(const SeededConfig& sc, const std::string& method) {
    const Method m = method_from_string(method);
    auto it = sc.unlearn.find(method);
    UnlearnConfig u = it != sc.unlearn.end() ? it->second : UnlearnConfig{};
    u.method = m;
    return u;
}

} // namespace

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seeds must be nonempty");
    if (dataset.csv.empty()) {
        if (dataset.n_per_class < 1 || dataset.class_count < 1 || dataset.dim < 1 ||
            !(dataset.spread > 0.0)) {
            throw std::invalid_argument("ExperimentConfig: invalid blobs generator spec");
        }
        if (dataset.dim != model.input_dim() ||
            static_cast<std::size_t>(dataset.class_count) != model.class_count()) {
            throw std::invalid_argument("ExperimentConfig: model shape does not match dataset");
        }
    }
    for (const auto& [name, u] : unlearn) {
        if (to_string(u.method) != name) {
            throw std::invalid_argument("ExperimentConfig: unlearn entry '" + name +
                                        "' has method " + to_string(u.method));
        }
        u.validate();
    }
}

void to_json(nlohmann::json& j, const ExperimentConfig& cfg) {
    nlohmann::json ds;
    if (cfg.dataset.csv.empty()) {
        ds = {{"generator", "blobs"},
              {"n_per_class", cfg.dataset.n_per_class},
              {"class_count", cfg.dataset.class_count},
              {"dim", cfg.dataset.dim},
              {"spread", cfg.dataset.spread},
              {"seed", cfg.dataset.seed}};
    } else {
        ds = {{"csv", cfg.dataset.csv}};
    }
    nlohmann::json sp{{"mode", to_string(cfg.split.mode)},
                      {"test_fraction", cfg.split.test_fraction},
                      {"seed", cfg.split.seed}};
    if (cfg.split.mode == SplitMode::random_subset) {
        sp["fraction"] = cfg.split.fraction;
    } else {
        sp["class_id"] = cfg.split.class_id;
    }
    j = nlohmann::json{{"schema_version", kExperimentSchemaVersion},
                       {"dataset", ds},
                       {"split", sp},
                       {"model", cfg.model},
                       {"train", cfg.train},
                       {"retrain_alt_offset", cfg.retrain_alt_offset},
                       {"unlearn", cfg.unlearn},
                       {"output_dir", cfg.output_dir},
                       {"seeds", cfg.seeds}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& cfg) {
    const int version = j.value("schema_version", -1);
    if (version != kExperimentSchemaVersion) {
        throw std::invalid_argument("ExperimentConfig: unsupported schema_version " +
                                    std::to_string(version));
    }
    const ExperimentConfig d;
    const auto& ds = j.at("dataset");
    cfg.dataset = d.dataset;
    if (ds.contains("csv")) {
        cfg.dataset.csv = ds.at("csv").get<std::string>();
    } else {
        if (ds.value("generator", std::string{"blobs"}) != "blobs") {
            throw std::invalid_argument("ExperimentConfig: unknown dataset generator");
        }
        cfg.dataset.n_per_class = ds.value("n_per_class", d.dataset.n_per_class);
        cfg.dataset.class_count = ds.value("class_count", d.dataset.class_count);
        cfg.dataset.dim = ds.value("dim", d.dataset.dim);
        cfg.dataset.spread = ds.value("spread", d.dataset.spread);
        cfg.dataset.seed = ds.value("seed", d.dataset.seed);
    }
    const auto sp = j.value("split", nlohmann::json::object());
    cfg.split.mode = split_mode_from_string(sp.value("mode", to_string(d.split.mode)));
    cfg.split.fraction = sp.value("fraction", d.split.fraction);
    cfg.split.class_id = sp.value("class_id", d.split.class_id);
    cfg.split.test_fraction = sp.value("test_fraction", d.split.test_fraction);
    cfg.split.seed = sp.value("seed", d.split.seed);
    cfg.model = j.at("model").get<ModelConfig>();
    cfg.train = j.value("train", nlohmann::json(d.train)).get<TrainConfig>();
    cfg.retrain_alt_offset = j.value("retrain_alt_offset", d.retrain_alt_offset);
    cfg.unlearn.clear();
    const nlohmann::json unlearn_map = j.value("unlearn", nlohmann::json::object());
    for (const auto& [name, u] : unlearn_map.items()) {
        nlohmann::json body = u;
        body["method"] = name;
        cfg.unlearn[name] = body.get<UnlearnConfig>();
    }
    cfg.output_dir = j.value("output_dir", d.output_dir);
    cfg.seeds = j.value("seeds", d.seeds);
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    ExperimentConfig cfg = j.get<ExperimentConfig>();
    cfg.validate();
    return cfg;
}

SeededConfig apply_seed(const ExperimentConfig& cfg, std::uint64_t s) {
    SeededConfig sc{cfg.dataset, cfg.split, cfg.model, cfg.train, cfg.unlearn};
    sc.dataset.seed += s;
    sc.split.seed += s;
    sc.model.seed += s;
    sc.train.seed += s;
    for (auto& [name, u] : sc.unlearn) u.seed += s;
    return sc;
}

Dataset build_dataset(const DatasetSpec& spec) {
    if (!spec.csv.empty()) return load_csv_dataset(spec.csv);
    return generate_blobs(spec.seed, spec.n_per_class, spec.class_count, spec.dim, spec.spread);
}

ForgetSplit build_split(const Dataset& data, const SplitSpec& spec) {
    if (spec.mode == SplitMode::random_subset) {
        return make_random_subset_split(data, spec.fraction, spec.test_fraction, spec.seed);
    }
    return make_classwise_split(data, spec.class_id, spec.test_fraction, spec.seed);
}

Checkpoint retrain_alternate(const Dataset& data, const ForgetSplit& split,
                             const ModelConfig& model, const TrainConfig& train,
                             std::uint64_t offset) {
    ModelConfig m = model;
    TrainConfig t = train;
    m.seed += offset;
    t.seed += offset;
    Checkpoint c = retrain_oracle(m, t, data, split);
    c.provenance.method = "rt_alt";
    return c;
}

Checkpoint pretrain(const Dataset& data, const ForgetSplit& split, const ModelConfig& model,
                    const TrainConfig& train) {
    std::vector<std::size_t> rows = split.forget;
    rows.insert(rows.end(), split.remain.begin(), split.remain.end());
    std::sort(rows.begin(), rows.end());
    return sgd_train(init_params(model), model, train, data, rows);
}

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t s) {
    const SeededConfig sc = apply_seed(cfg, s);
    SeedRun run;
    run.seed = s;
    run.data = build_dataset(sc.dataset);
    run.split = build_split(run.data, sc.split);
    run.pretrained = pretrain(run.data, run.split, sc.model, sc.train);
    run.retrained = retrain_oracle(sc.model, sc.train, run.data, run.split);
    run.retrained_alt =
        retrain_alternate(run.data, run.split, sc.model, sc.train, cfg.retrain_alt_offset);
    run.noise_floor = empirical_kl(run.retrained_alt, run.retrained, run.data, run.split);

    auto report = [&](const Checkpoint& c) {
        return full_report(c, run.retrained, run.data, run.split, c.provenance.wall_seconds);
    };
    run.reports["rt"] = report(run.retrained);
    run.reports["rt_alt"] = report(run.retrained_alt);
    run.reports["pretrain"] = report(run.pretrained);
    for (const auto& [name, u] : sc.unlearn) {
        Checkpoint c = run_unlearning(run.pretrained.params, sc.model, run.data, run.split, u);
        run.reports[name] = report(c);
        run.unlearned.emplace(name, std::move(c));
    }
    return run;
}

MetricSummary summarize(const std::vector<double>& xs) {
    MetricSummary m;
    if (xs.empty()) return m;
    for (double x : xs) m.mean += x;
    m.mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - m.mean) * (x - m.mean);
    m.stdev = std::sqrt(var / static_cast<double>(xs.size()));
    return m;
}

nlohmann::json aggregate_reports(const std::vector<SeedRun>& runs) {
    nlohmann::json out = nlohmann::json::object();
    if (runs.empty()) return out;
    for (const auto& [method, _] : runs.front().reports) {
        nlohmann::json entry = nlohmann::json::object();
        for (const auto& field : report_fields()) {
            std::vector<double> xs;
            for (const auto& r : runs) xs.push_back(nlohmann::json(r.reports.at(method)).at(field));
            const MetricSummary m = summarize(xs);
            entry[field] = {{"mean", m.mean}, {"std", m.stdev}};
        }
        out[method] = entry;
    }
    std::vector<double> floors;
    for (const auto& r : runs) floors.push_back(r.noise_floor);
    const MetricSummary f = summarize(floors);
    out["noise_floor"] = {{"mean", f.mean}, {"std", f.stdev}};
    return out;
}

std::string aggregate_markdown(const nlohmann::json& aggregate) {
    std::string md = "| Method | FA | RA | TA | MIA | Avg.D | D_KL | RTE (s) |\n"
                     "|---|---|---|---|---|---|---|---|\n";
    char buf[96];
    for (const auto& [method, entry] : aggregate.items()) {
        if (method == "noise_floor") continue;
        md += "| " + method + " |";
        for (const auto& field : report_fields()) {
            const double scale = (field == "fa" || field == "ra" || field == "ta" || field == "mia")
                                     ? 100.0
                                     : 1.0;
            const char* fmt = field == "kl_to_ref" ? " %.4f ± %.4f |" : " %.2f ± %.2f |";
            std::snprintf(buf, sizeof buf, fmt, scale * entry.at(field).at("mean").get<double>(),
                          scale * entry.at(field).at("std").get<double>());
            md += buf;
        }
        md += "\n";
    }
    if (aggregate.contains("noise_floor")) {
        std::snprintf(buf, sizeof buf, "\nRT vs RT' noise floor (D_KL): %.4f ± %.4f\n",
                      aggregate["noise_floor"]["mean"].get<double>(),
                      aggregate["noise_floor"]["std"].get<double>());
        md += buf;
    }
    return md;
}

void write_provenance(const fs::path& dir, const std::string& command,
                      const nlohmann::json& config, const std::vector<std::uint64_t>& seeds,
                      const nlohmann::json& extra) {
    nlohmann::json p{{"command", command},
                     {"library_version", kLibraryVersion},
                     {"config", config},
                     {"seeds", seeds},
                     {"extra", extra}};
    write_text_file(dir / "provenance.json", p.dump(2) + "\n");
}

fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t s) {
    return fs::path(cfg.output_dir) / ("seed_" + std::to_string(s));
}

fs::path cmd_pretrain(const fs::path& config_path, std::uint64_t s) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    const SeededConfig sc = apply_seed(cfg, s);
    const fs::path dir = seed_dir(cfg, s);
    const Dataset data = build_dataset(sc.dataset);
    const ForgetSplit split = build_split(data, sc.split);
    fs::create_directories(dir);
    save_csv_dataset(data, dir / "dataset.csv");
    save_split(split, dir / "split.json");
    const Checkpoint ckpt = pretrain(data, split, sc.model, sc.train);
    save_checkpoint(ckpt, dir / "pretrain");
    write_provenance(dir, "pretrain", cfg, {s});
    write_provenance(dir / "pretrain", "pretrain", cfg, {s});
    return dir / "pretrain";
}

fs::path cmd_retrain(const fs::path& config_path, const fs::path& split_path, std::uint64_t s) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    const SeededConfig sc = apply_seed(cfg, s);
    const Dataset data = load_csv_dataset(dataset_next_to(split_path));
    const ForgetSplit split = load_split(split_path);
    const fs::path out = split_path.parent_path() / "retrain";
    save_checkpoint(retrain_oracle(sc.model, sc.train, data, split), out);
    write_provenance(out, "retrain", cfg, {s}, {{"split", split_path.string()}});
    return out;
}

fs::path cmd_unlearn(const fs::path& config_path, const std::string& method,
                     const fs::path& pretrained_dir, const fs::path& split_path, std::uint64_t s) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    const SeededConfig sc = apply_seed(cfg, s);
    const UnlearnConfig u = config_for(sc, method);
    const Checkpoint base = load_checkpoint(pretrained_dir);
    const Dataset data = load_csv_dataset(dataset_next_to(split_path));
    const ForgetSplit split = load_split(split_path);
    const Checkpoint c = run_unlearning(base.params, base.model, data, split, u);
    const fs::path out = split_path.parent_path() / ("unlearn_" + method);
    save_checkpoint(c, out);
    write_provenance(out, "unlearn", cfg, {s},
                     {{"method", method},
                      {"pretrained", pretrained_dir.string()},
                      {"split", split_path.string()},
                      {"unlearn_config", u}});
    return out;
}

MetricsReport cmd_eval(const fs::path& model_dir, const fs::path& reference_dir,
                       const fs::path& split_path, const fs::path& data_path,
                       const fs::path& out_path) {
    const Checkpoint model = load_checkpoint(model_dir);
    const Checkpoint reference = load_checkpoint(reference_dir);
    const ForgetSplit split = load_split(split_path);
    const Dataset data =
        load_csv_dataset(data_path.empty() ? dataset_next_to(split_path) : data_path);
    MetricsReport r = full_report(model, reference, data, split, model.provenance.wall_seconds);
    write_text_file(out_path, nlohmann::json(r).dump(2) + "\n");
    const fs::path dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
    write_provenance(dir, "eval", nlohmann::json::object(), model.provenance.seeds,
                     {{"model", model_dir.string()},
                      {"reference", reference_dir.string()},
                      {"split", split_path.string()}});
    return r;
}

nlohmann::json cmd_report(const fs::path& config_path) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    std::vector<SeedRun> runs;
    nlohmann::json per_seed = nlohmann::json::object();
    for (std::uint64_t s : cfg.seeds) {
        runs.push_back(run_seed(cfg, s));
        const SeedRun& run = runs.back();
        nlohmann::json reports = nlohmann::json::object();
        for (const auto& [name, r] : run.reports) reports[name] = r;
        per_seed[std::to_string(s)] = {{"noise_floor", run.noise_floor}, {"reports", reports}};
    }
    const nlohmann::json agg = aggregate_reports(runs);
    const nlohmann::json report{{"aggregate", agg}, {"per_seed", per_seed}};
    const fs::path dir(cfg.output_dir);
    write_text_file(dir / "report.json", report.dump(2) + "\n");
    write_text_file(dir / "report.md", aggregate_markdown(agg));
    write_provenance(dir, "report", cfg, cfg.seeds);
    return report;
}

} // namespace unlearn
