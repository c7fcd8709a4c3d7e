// Command-line front end: train, crossval, grid-search, analyze-transfer,
// export-knowledge-states, generate-synthetic. Exit codes: 0 success,
// 1 configuration error, 2 runtime error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "takt/cli.hpp"
#include "takt/version.hpp"

namespace {

struct SubArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> folds;
    bool exclude_cold_start = false;
};

void add_common_options(CLI::App* sub, SubArgs& args) {
    sub->add_option("--config", args.config_path, "JSON run configuration")->required();
    sub->add_option("--seed", args.seed, "Override the run seed");
    sub->add_option("--out", args.out_dir, "Override the output directory");
    sub->add_option("--folds", args.folds, "Override the fold count");
    sub->add_flag("--exclude-cold-start", args.exclude_cold_start,
                  "Drop predictions made from the zero initial state from metrics");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"takt: transition-aware multi-activity knowledge tracing"};
    app.set_version_flag("--version", takt::kVersion);
    app.require_subcommand(1);

    const takt::cli::Command commands[] = {
        takt::cli::Command::Train,
        takt::cli::Command::CrossVal,
        takt::cli::Command::GridSearch,
        takt::cli::Command::AnalyzeTransfer,
        takt::cli::Command::ExportKnowledgeStates,
        takt::cli::Command::GenerateSynthetic,
    };
    const char* descriptions[] = {
        "Train a model and write a checkpoint",
        "k-fold student-level cross-validation",
        "Grid search over declared hyperparameter candidates",
        "Compare two transfer matrices of a trained checkpoint",
        "Export per-step predicted mastery for one student",
        "Generate a synthetic interaction log",
    };

    SubArgs args[6];
    CLI::App* subs[6];
    for (int i = 0; i < 6; ++i) {
        subs[i] = app.add_subcommand(takt::cli::command_name(commands[i]), descriptions[i]);
        add_common_options(subs[i], args[i]);
    }

    CLI11_PARSE(app, argc, argv);

    int which = -1;
    for (int i = 0; i < 6; ++i) {
        if (subs[i]->parsed()) which = i;
    }
    if (which < 0) {
        std::cerr << "error: no subcommand given\n";
        return 1;
    }

    try {
        takt::cli::RunConfig config =
            takt::cli::load_run_config(args[which].config_path, commands[which]);
        takt::cli::Overrides overrides;
        overrides.seed = args[which].seed;
        overrides.out_dir = args[which].out_dir;
        overrides.folds = args[which].folds;
        overrides.exclude_cold_start = args[which].exclude_cold_start;
        takt::cli::apply_overrides(config, overrides);
        return takt::cli::run(config);
    } catch (const takt::cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
