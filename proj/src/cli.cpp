#include "takt/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "takt/analysis.hpp"
#include "takt/evaluation.hpp"
#include "takt/rng.hpp"
#include "takt/training.hpp"
#include "takt/version.hpp"

namespace takt::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
        }
    }
}

template <typename T>
T get_field(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: field '" + key + "' has the wrong type");
    }
}

void parse_hyper(const json& j, Hyperparams& h, bool& mode_set) {
    check_keys(j,
               {"problem_dim", "lecture_dim", "response_dim", "hidden_dim", "seq_len", "lambda",
                "response_mode", "learning_rate", "epochs", "batch_size", "clip_norm", "seed",
                "tied_transfer"},
               "'hyper'");
    h.problem_dim = get_field<std::size_t>(j, "problem_dim", h.problem_dim);
    h.lecture_dim = get_field<std::size_t>(j, "lecture_dim", h.lecture_dim);
    h.response_dim = get_field<std::size_t>(j, "response_dim", h.response_dim);
    h.hidden_dim = get_field<std::size_t>(j, "hidden_dim", h.hidden_dim);
    h.seq_len = get_field<std::size_t>(j, "seq_len", h.seq_len);
    h.lambda = get_field<double>(j, "lambda", h.lambda);
    h.learning_rate = get_field<double>(j, "learning_rate", h.learning_rate);
    h.epochs = get_field<std::size_t>(j, "epochs", h.epochs);
    h.batch_size = get_field<std::size_t>(j, "batch_size", h.batch_size);
    h.clip_norm = get_field<double>(j, "clip_norm", h.clip_norm);
    h.seed = get_field<std::uint64_t>(j, "seed", h.seed);
    h.tied_transfer = get_field<bool>(j, "tied_transfer", h.tied_transfer);
    if (j.contains("response_mode")) {
        const auto name = get_field<std::string>(j, "response_mode", "");
        const auto mode = response_mode_from_name(name);
        if (!mode) throw ConfigError("config: response_mode must be 'binary' or 'numeric'");
        h.response_mode = *mode;
        mode_set = true;
    }
    try {
        h.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

void parse_synthetic(const json& j, SyntheticConfig& c) {
    check_keys(j,
               {"n_students", "n_problems", "n_lectures", "n_concepts", "steps_per_student",
                "lecture_fraction", "skill_mean", "skill_std", "difficulty_std", "lecture_gain",
                "practice_gain", "transfer_ql", "transfer_lq", "seed"},
               "'synthetic'");
    c.n_students = get_field<std::size_t>(j, "n_students", c.n_students);
    c.n_problems = get_field<std::size_t>(j, "n_problems", c.n_problems);
    c.n_lectures = get_field<std::size_t>(j, "n_lectures", c.n_lectures);
    c.n_concepts = get_field<std::size_t>(j, "n_concepts", c.n_concepts);
    c.steps_per_student = get_field<std::size_t>(j, "steps_per_student", c.steps_per_student);
    c.lecture_fraction = get_field<double>(j, "lecture_fraction", c.lecture_fraction);
    c.skill_mean = get_field<double>(j, "skill_mean", c.skill_mean);
    c.skill_std = get_field<double>(j, "skill_std", c.skill_std);
    c.difficulty_std = get_field<double>(j, "difficulty_std", c.difficulty_std);
    c.lecture_gain = get_field<double>(j, "lecture_gain", c.lecture_gain);
    c.practice_gain = get_field<double>(j, "practice_gain", c.practice_gain);
    if (j.contains("transfer_ql")) {
        // Accept either a flat list or a list of rows.
        const json& m = j.at("transfer_ql");
        c.transfer_ql.clear();
        for (const auto& e : m) {
            if (e.is_array()) {
                for (const auto& v : e) c.transfer_ql.push_back(v.get<double>());
            } else {
                c.transfer_ql.push_back(e.get<double>());
            }
        }
    }
    if (j.contains("transfer_lq")) {
        const json& m = j.at("transfer_lq");
        c.transfer_lq.clear();
        for (const auto& e : m) {
            if (e.is_array()) {
                for (const auto& v : e) c.transfer_lq.push_back(v.get<double>());
            } else {
                c.transfer_lq.push_back(e.get<double>());
            }
        }
    }
    c.seed = get_field<std::uint64_t>(j, "seed", c.seed);
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("config: missing required '") + what + "'");
    if (!fs::exists(path)) {
        throw ConfigError(std::string("config: ") + what + " '" + path + "' does not exist");
    }
}

const std::vector<std::string> kGridKeys = {"problem_dim", "lecture_dim", "response_dim",
                                            "hidden_dim", "seq_len", "lambda", "learning_rate",
                                            "epochs", "batch_size", "clip_norm"};

}  // namespace

const char* command_name(Command c) {
    switch (c) {
        case Command::Train: return "train";
        case Command::CrossVal: return "crossval";
        case Command::GridSearch: return "grid-search";
        case Command::AnalyzeTransfer: return "analyze-transfer";
        case Command::ExportKnowledgeStates: return "export-knowledge-states";
        case Command::GenerateSynthetic: return "generate-synthetic";
    }
    return "?";
}

std::optional<Command> command_from_name(const std::string& name) {
    if (name == "train") return Command::Train;
    if (name == "crossval") return Command::CrossVal;
    if (name == "grid-search") return Command::GridSearch;
    if (name == "analyze-transfer") return Command::AnalyzeTransfer;
    if (name == "export-knowledge-states") return Command::ExportKnowledgeStates;
    if (name == "generate-synthetic") return Command::GenerateSynthetic;
    return std::nullopt;
}

RunConfig parse_run_config(const std::string& json_text, Command command,
                           const std::string& origin) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + origin + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config " + origin + ": top level must be an object");

    RunConfig cfg;
    cfg.command = command;

    check_keys(doc,
               {"data", "checkpoint", "out", "seed", "folds", "validation_fraction",
                "exclude_cold_start", "hyper", "grid", "synthetic", "student", "materials",
                "gate", "pair", "output_name"},
               "top level");

    cfg.data_path = get_field<std::string>(doc, "data", "");
    cfg.checkpoint_path = get_field<std::string>(doc, "checkpoint", "");
    cfg.out_dir = get_field<std::string>(doc, "out", cfg.out_dir);
    cfg.seed = get_field<std::uint64_t>(doc, "seed", cfg.seed);
    cfg.hyper.seed = cfg.seed;  // hyper.seed may still override below
    cfg.folds = get_field<std::size_t>(doc, "folds", cfg.folds);
    cfg.validation_fraction =
        get_field<double>(doc, "validation_fraction", cfg.validation_fraction);
    cfg.exclude_cold_start = get_field<bool>(doc, "exclude_cold_start", cfg.exclude_cold_start);
    if (doc.contains("hyper")) parse_hyper(doc.at("hyper"), cfg.hyper, cfg.response_mode_set);
    if (doc.contains("synthetic")) parse_synthetic(doc.at("synthetic"), cfg.synthetic);
    cfg.student_id = get_field<std::string>(doc, "student", "");
    cfg.materials = get_field<std::vector<std::string>>(doc, "materials", {});
    cfg.gate = get_field<std::string>(doc, "gate", cfg.gate);
    if (doc.contains("pair")) {
        const auto pair = get_field<std::vector<std::string>>(doc, "pair", {});
        if (pair.size() != 2) throw ConfigError("config: 'pair' must list two transitions");
        cfg.pair_first = pair[0];
        cfg.pair_second = pair[1];
    }
    cfg.output_name = get_field<std::string>(doc, "output_name", "");
    if (doc.contains("grid")) {
        const json& g = doc.at("grid");
        if (!g.is_object()) throw ConfigError("config: 'grid' must be an object");
        check_keys(g, kGridKeys, "'grid'");
        for (auto it = g.begin(); it != g.end(); ++it) {
            if (!it.value().is_array() || it.value().empty()) {
                throw ConfigError("config: grid entry '" + it.key() +
                                  "' must be a nonempty array");
            }
            std::vector<double> values;
            for (const auto& v : it.value()) {
                if (!v.is_number()) {
                    throw ConfigError("config: grid entry '" + it.key() + "' must be numeric");
                }
                values.push_back(v.get<double>());
            }
            cfg.grid[it.key()] = std::move(values);
        }
    }

    // Per-command requirements.
    switch (command) {
        case Command::Train:
            require_file(cfg.data_path, "data");
            break;
        case Command::CrossVal:
            require_file(cfg.data_path, "data");
            if (cfg.folds < 2) throw ConfigError("config: folds must be >= 2");
            break;
        case Command::GridSearch:
            require_file(cfg.data_path, "data");
            if (cfg.grid.empty()) throw ConfigError("config: grid-search needs a 'grid' object");
            break;
        case Command::AnalyzeTransfer:
            require_file(cfg.checkpoint_path, "checkpoint");
            if (!gate_from_name(cfg.gate)) {
                throw ConfigError("config: unknown gate '" + cfg.gate + "'");
            }
            if (!transition_from_name(cfg.pair_first) || !transition_from_name(cfg.pair_second)) {
                throw ConfigError("config: pair entries must be QQ, QL, LQ or LL");
            }
            break;
        case Command::ExportKnowledgeStates:
            require_file(cfg.checkpoint_path, "checkpoint");
            require_file(cfg.data_path, "data");
            if (cfg.student_id.empty()) throw ConfigError("config: missing required 'student'");
            break;
        case Command::GenerateSynthetic:
            break;  // synthetic block has defaults
    }
    if (cfg.validation_fraction < 0.0 || cfg.validation_fraction > 0.9) {
        throw ConfigError("config: validation_fraction must lie in [0, 0.9]");
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path, Command command) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), command, path);
}

void apply_overrides(RunConfig& config, const Overrides& overrides) {
    if (overrides.seed) {
        config.seed = *overrides.seed;
        config.hyper.seed = *overrides.seed;
    }
    if (overrides.out_dir) config.out_dir = *overrides.out_dir;
    if (overrides.folds) {
        if (*overrides.folds < 2) throw ConfigError("config: folds must be >= 2");
        config.folds = *overrides.folds;
    }
    if (overrides.exclude_cold_start) config.exclude_cold_start = true;
}

namespace {

json hyper_json(const Hyperparams& h) {
    return json{{"problem_dim", h.problem_dim},
                {"lecture_dim", h.lecture_dim},
                {"response_dim", h.response_dim},
                {"hidden_dim", h.hidden_dim},
                {"seq_len", h.seq_len},
                {"lambda", h.lambda},
                {"response_mode", response_mode_name(h.response_mode)},
                {"learning_rate", h.learning_rate},
                {"epochs", h.epochs},
                {"batch_size", h.batch_size},
                {"clip_norm", h.clip_norm},
                {"seed", h.seed},
                {"tied_transfer", h.tied_transfer}};
}

}  // namespace

std::string resolved_config_json(const RunConfig& c) {
    json doc;
    doc["command"] = command_name(c.command);
    doc["data"] = c.data_path;
    doc["checkpoint"] = c.checkpoint_path;
    doc["out"] = c.out_dir;
    doc["seed"] = c.seed;
    doc["folds"] = c.folds;
    doc["validation_fraction"] = c.validation_fraction;
    doc["exclude_cold_start"] = c.exclude_cold_start;
    doc["hyper"] = hyper_json(c.hyper);
    doc["grid"] = c.grid;
    doc["synthetic"] = json{{"n_students", c.synthetic.n_students},
                            {"n_problems", c.synthetic.n_problems},
                            {"n_lectures", c.synthetic.n_lectures},
                            {"n_concepts", c.synthetic.n_concepts},
                            {"steps_per_student", c.synthetic.steps_per_student},
                            {"lecture_fraction", c.synthetic.lecture_fraction},
                            {"skill_mean", c.synthetic.skill_mean},
                            {"skill_std", c.synthetic.skill_std},
                            {"difficulty_std", c.synthetic.difficulty_std},
                            {"lecture_gain", c.synthetic.lecture_gain},
                            {"practice_gain", c.synthetic.practice_gain},
                            {"transfer_ql", c.synthetic.transfer_ql},
                            {"transfer_lq", c.synthetic.transfer_lq},
                            {"seed", c.synthetic.seed}};
    doc["student"] = c.student_id;
    doc["materials"] = c.materials;
    doc["gate"] = c.gate;
    doc["pair"] = {c.pair_first, c.pair_second};
    doc["output_name"] = c.output_name;
    return doc.dump(2);
}

std::string config_hash(const RunConfig& config) {
    const std::string text = resolved_config_json(config);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string("fnv1a64:") + buf;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

struct OutDirs {
    fs::path root, checkpoints, reports, exports;
};

OutDirs prepare_out(const RunConfig& c) {
    OutDirs d;
    d.root = c.out_dir;
    d.checkpoints = d.root / "checkpoints";
    d.reports = d.root / "reports";
    d.exports = d.root / "exports";
    fs::create_directories(d.checkpoints);
    fs::create_directories(d.reports);
    fs::create_directories(d.exports);
    return d;
}

void write_manifest(const RunConfig& c, const OutDirs& dirs) {
    json doc;
    doc["artifact"] = "takt";
    doc["version"] = kVersion;
    doc["command"] = command_name(c.command);
    doc["seed"] = c.seed;
    doc["config_hash"] = config_hash(c);
    doc["config"] = json::parse(resolved_config_json(c));
    write_text(dirs.root / "manifest.json", doc.dump(2) + "\n");
}

Dataset load_data_for(const RunConfig& c, Hyperparams& hyper) {
    Dataset ds = load_interactions(c.data_path);
    if (!c.response_mode_set) {
        hyper.response_mode = ds.mode;
    } else if (hyper.response_mode != ds.mode) {
        throw ValidationError(std::string("dataset '") + c.data_path + "' is " +
                              response_mode_name(ds.mode) + " but config says " +
                              response_mode_name(hyper.response_mode));
    }
    return ds;
}

// Deterministic student split for train/grid-search validation.
std::pair<std::vector<std::string>, std::vector<std::string>> split_students(
    const Dataset& ds, double validation_fraction, std::uint64_t seed) {
    std::vector<std::string> students = ds.student_ids();
    Rng rng(seed ^ 0x5851f42d4c957f2dULL);
    rng.shuffle(students);
    const auto n_valid = static_cast<std::size_t>(
        validation_fraction * static_cast<double>(students.size()));
    std::vector<std::string> valid(students.begin(), students.begin() + n_valid);
    std::vector<std::string> train(students.begin() + n_valid, students.end());
    return {std::move(train), std::move(valid)};
}

std::string history_csv(const TrainHistory& history) {
    std::string out = "epoch,train_loss,valid_metric\n";
    for (const auto& e : history.epochs) {
        out += std::to_string(e.epoch) + "," + std::to_string(e.train_loss) + ",";
        if (e.valid_metric) out += std::to_string(*e.valid_metric);
        out += "\n";
    }
    return out;
}

int run_train(const RunConfig& c) {
    const OutDirs dirs = prepare_out(c);
    Hyperparams hyper = c.hyper;
    const Dataset ds = load_data_for(c, hyper);
    auto [train_students, valid_students] =
        split_students(ds, c.validation_fraction, c.seed);
    std::optional<std::vector<std::string>> valid;
    if (!valid_students.empty()) valid = valid_students;
    const TrainResult result = train(ds, train_students, hyper, valid);
    save_checkpoint(result.params, hyper, (dirs.checkpoints / "model.json").string());
    write_text(dirs.reports / "history.csv", history_csv(result.history));
    write_manifest(c, dirs);
    return 0;
}

int run_crossval(const RunConfig& c) {
    const OutDirs dirs = prepare_out(c);
    Hyperparams hyper = c.hyper;
    const Dataset ds = load_data_for(c, hyper);
    const CrossValResult result =
        cross_validate(ds, hyper, c.folds, c.seed, c.exclude_cold_start);
    write_metrics_report(result, (dirs.reports / "metrics.csv").string());
    write_manifest(c, dirs);
    return 0;
}

void apply_grid_value(Hyperparams& h, const std::string& key, double value) {
    if (key == "problem_dim") h.problem_dim = static_cast<std::size_t>(value);
    else if (key == "lecture_dim") h.lecture_dim = static_cast<std::size_t>(value);
    else if (key == "response_dim") h.response_dim = static_cast<std::size_t>(value);
    else if (key == "hidden_dim") h.hidden_dim = static_cast<std::size_t>(value);
    else if (key == "seq_len") h.seq_len = static_cast<std::size_t>(value);
    else if (key == "lambda") h.lambda = value;
    else if (key == "learning_rate") h.learning_rate = value;
    else if (key == "epochs") h.epochs = static_cast<std::size_t>(value);
    else if (key == "batch_size") h.batch_size = static_cast<std::size_t>(value);
    else if (key == "clip_norm") h.clip_norm = value;
}

int run_grid_search(const RunConfig& c) {
    const OutDirs dirs = prepare_out(c);
    Hyperparams base = c.hyper;
    const Dataset ds = load_data_for(c, base);
    const double fraction = c.validation_fraction > 0.0 ? c.validation_fraction : 0.2;
    auto [train_students, valid_students] = split_students(ds, fraction, c.seed);
    if (valid_students.empty()) {
        throw ValidationError("grid-search needs a nonempty validation split");
    }

    std::vector<std::string> keys;
    for (const auto& [k, _] : c.grid) keys.push_back(k);

    std::string report = "point";
    for (const auto& k : keys) report += "," + k;
    report += ",valid_metric\n";

    json best;
    double best_metric = -1.0;
    std::vector<std::size_t> idx(keys.size(), 0);
    std::size_t point = 0;
    while (true) {
        Hyperparams hyper = base;
        json assignment;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            const double v = c.grid.at(keys[i])[idx[i]];
            apply_grid_value(hyper, keys[i], v);
            assignment[keys[i]] = v;
        }
        hyper.validate();
        const TrainResult result = train(ds, train_students, hyper, valid_students);
        double metric = -1.0;
        for (const auto& e : result.history.epochs) {
            if (e.valid_metric && *e.valid_metric > metric) metric = *e.valid_metric;
        }
        report += std::to_string(point);
        for (std::size_t i = 0; i < keys.size(); ++i) {
            report += "," + std::to_string(c.grid.at(keys[i])[idx[i]]);
        }
        report += "," + std::to_string(metric) + "\n";
        if (metric > best_metric) {
            best_metric = metric;
            best = json{{"point", point}, {"assignment", assignment}, {"valid_metric", metric}};
        }
        // next cartesian point
        std::size_t d = 0;
        for (; d < keys.size(); ++d) {
            if (++idx[d] < c.grid.at(keys[d]).size()) break;
            idx[d] = 0;
        }
        ++point;
        if (d == keys.size()) break;
    }

    write_text(dirs.reports / "grid.csv", report);
    write_text(dirs.reports / "grid_best.json", best.dump(2) + "\n");
    write_manifest(c, dirs);
    return 0;
}

int run_analyze_transfer(const RunConfig& c) {
    const OutDirs dirs = prepare_out(c);
    auto [params, hyper] = load_checkpoint(c.checkpoint_path);
    (void)hyper;
    const GateKind gate = *gate_from_name(c.gate);
    const Transition first = *transition_from_name(c.pair_first);
    const Transition second = *transition_from_name(c.pair_second);
    const TransferReport report = compare_transfer_matrices(params, gate, first, second);

    const std::string stem = std::string("transfer_") + gate_name(gate) + "_" +
                             transition_name(first) + "_" + transition_name(second);
    write_transfer_report(report, (dirs.reports / (stem + ".json")).string());
    export_heatmap_csv(report.z_first,
                       (dirs.exports / (stem + "_" + transition_name(first) + "_z.csv")).string());
    export_heatmap_csv(
        report.z_second,
        (dirs.exports / (stem + "_" + transition_name(second) + "_z.csv")).string());
    write_manifest(c, dirs);
    return 0;
}

int run_export_knowledge_states(const RunConfig& c) {
    const OutDirs dirs = prepare_out(c);
    auto [params, hyper] = load_checkpoint(c.checkpoint_path);
    Dataset ds = load_interactions(c.data_path);
    if (ds.mode != hyper.response_mode) {
        throw ValidationError("dataset response mode does not match the checkpoint");
    }
    const StudentSequence* seq = ds.find_student(c.student_id);
    if (!seq) throw ValidationError("student '" + c.student_id + "' not found in dataset");

    std::vector<std::size_t> ids;
    if (c.materials.empty()) {
        for (std::size_t q = 0; q < ds.problem_count(); ++q) ids.push_back(q);
    } else {
        for (const auto& m : c.materials) {
            const auto it = std::find(ds.problem_ids.begin(), ds.problem_ids.end(), m);
            if (it == ds.problem_ids.end()) {
                throw ValidationError("assessed material '" + m + "' not found in dataset");
            }
            ids.push_back(static_cast<std::size_t>(it - ds.problem_ids.begin()));
        }
    }
    const Matrix traj = knowledge_state_trajectory(params, *seq, ids, hyper);
    export_heatmap_csv(traj,
                       (dirs.exports / ("knowledge_states_" + c.student_id + ".csv")).string());
    write_manifest(c, dirs);
    return 0;
}

int run_generate_synthetic(const RunConfig& c) {
    const OutDirs dirs = prepare_out(c);
    const Dataset ds = generate_synthetic(c.synthetic);
    const std::string name = c.output_name.empty() ? "synthetic.csv" : c.output_name;
    save_interactions(ds, (dirs.exports / name).string());
    write_manifest(c, dirs);
    return 0;
}

}  // namespace

int run(const RunConfig& config) {
    switch (config.command) {
        case Command::Train: return run_train(config);
        case Command::CrossVal: return run_crossval(config);
        case Command::GridSearch: return run_grid_search(config);
        case Command::AnalyzeTransfer: return run_analyze_transfer(config);
        case Command::ExportKnowledgeStates: return run_export_knowledge_states(config);
        case Command::GenerateSynthetic: return run_generate_synthetic(config);
    }
    throw Error("unknown command");
}

}  // namespace takt::cli
