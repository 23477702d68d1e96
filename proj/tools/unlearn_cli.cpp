// Command-line runner: pretrain, retrain, unlearn, eval, verify, report.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "unlearn/experiment.hpp"
#include "unlearn/methods.hpp"
#include "unlearn/verify.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient-based machine unlearning experiments"};
    app.require_subcommand(1);

    std::string config;
    std::string split;
    std::string method;
    std::string pretrained;
    std::string model;
    std::string reference;
    std::string data;
    std::string out = "report.json";
    std::string suite = "all";
    std::uint64_t seed = 0;

    auto* pre = app.add_subcommand("pretrain", "Generate data and split, train the base model");
    pre->add_option("--config", config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
    pre->add_option("--seed", seed, "Seed offset");

    auto* re = app.add_subcommand("retrain", "Train the retrain reference on the remain set");
    re->add_option("--config", config)->required()->check(CLI::ExistingFile);
    re->add_option("--split", split)->required()->check(CLI::ExistingFile);
    re->add_option("--seed", seed);

    auto* un = app.add_subcommand("unlearn", "Apply one unlearning method to a checkpoint");
    un->add_option("--config", config)->required()->check(CLI::ExistingFile);
    un->add_option("--method", method, "sfr_on | ft | ga | rl | salun | joint")->required();
    un->add_option("--pretrained", pretrained)->required()->check(CLI::ExistingDirectory);
    un->add_option("--split", split)->required()->check(CLI::ExistingFile);
    un->add_option("--seed", seed);

    auto* ev = app.add_subcommand("eval", "Compare a checkpoint against a reference");
    ev->add_option("--model", model)->required()->check(CLI::ExistingDirectory);
    ev->add_option("--reference", reference)->required()->check(CLI::ExistingDirectory);
    ev->add_option("--split", split)->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data, "Dataset CSV (default: dataset.csv next to the split)");
    ev->add_option("--out", out, "Report JSON path");

    auto* ve = app.add_subcommand("verify", "Run the numerical verification suite");
    ve->add_option("--suite", suite)->check(CLI::IsMember(unlearn::verify::suite_names()));

    auto* rep = app.add_subcommand("report", "Run every seed and method, write report.json/md");
    rep->add_option("--config", config)->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (*pre) {
            std::cout << unlearn::cmd_pretrain(config, seed).string() << "\n";
        } else if (*re) {
            std::cout << unlearn::cmd_retrain(config, split, seed).string() << "\n";
        } else if (*un) {
            try {
                unlearn::method_from_string(method);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            std::cout << unlearn::cmd_unlearn(config, method, pretrained, split, seed).string()
                      << "\n";
        } else if (*ev) {
            const auto r = unlearn::cmd_eval(model, reference, split, data, out);
            std::cout << unlearn::markdown_header() << unlearn::markdown_row(model, r) << "\n";
        } else if (*ve) {
            const auto report = unlearn::verify::run_suite(suite);
            std::cout << report.dump(2) << "\n";
            return unlearn::verify::suite_passed(report) ? 0 : kRuntimeError;
        } else if (*rep) {
            const auto report = unlearn::cmd_report(config);
            std::cout << unlearn::aggregate_markdown(report.at("aggregate"));
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return 0;
}
