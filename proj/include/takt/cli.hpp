#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "takt/data.hpp"
#include "takt/model.hpp"

namespace takt::cli {

// Configuration problems exit with status 1; runtime failures with status 2.
struct ConfigError : Error {
    using Error::Error;
};

enum class Command {
    Train,
    CrossVal,
    GridSearch,
    AnalyzeTransfer,
    ExportKnowledgeStates,
    GenerateSynthetic,
};

const char* command_name(Command c);
std::optional<Command> command_from_name(const std::string& name);

struct RunConfig {
    Command command = Command::Train;
    std::string data_path;
    std::string checkpoint_path;
    std::string out_dir = "runs/out";
    std::uint64_t seed = 0;
    std::size_t folds = 5;
    double validation_fraction = 0.2;
    bool exclude_cold_start = false;
    Hyperparams hyper;
    bool response_mode_set = false;  // otherwise inferred from the dataset
    std::map<std::string, std::vector<double>> grid;
    SyntheticConfig synthetic;
    std::string student_id;
    std::vector<std::string> materials;  // export-knowledge-states; empty = all
    std::string gate = "forget";
    std::string pair_first = "QL";
    std::string pair_second = "LQ";
    std::string output_name;  // generate-synthetic log file name
};

// Parses and fully validates a JSON config for the given command; rejects
// unknown keys with a field-level diagnostic. `origin` names the file for
// error messages.
RunConfig parse_run_config(const std::string& json_text, Command command,
                           const std::string& origin);
RunConfig load_run_config(const std::string& path, Command command);

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> folds;
    bool exclude_cold_start = false;
};

void apply_overrides(RunConfig& config, const Overrides& overrides);

// Executes one command: writes its artifacts under config.out_dir
// (checkpoints/, reports/, exports/) plus a manifest with the config hash,
// seed, and artifact version. Returns 0; failures are reported by exception
// (ConfigError for invalid configuration, any other takt::Error at runtime).
int run(const RunConfig& config);

// Canonical JSON echo of a resolved config and its FNV-1a hash; the manifest
// stores both, and identical manifests imply identical outputs.
std::string resolved_config_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

}  // namespace takt::cli
