// Python bindings for the core operations: synthetic data, training,
// cross-validation, transfer analysis, and the rank statistics.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "takt/analysis.hpp"
#include "takt/cli.hpp"
#include "takt/evaluation.hpp"
#include "takt/training.hpp"
#include "takt/version.hpp"

namespace py = pybind11;
using namespace takt;

namespace {

std::vector<std::vector<double>> matrix_to_rows(const Matrix& m) {
    std::vector<std::vector<double>> rows(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) {
        rows[r].assign(m.values.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
                       m.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols));
    }
    return rows;
}

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows) {
    Matrix m;
    m.rows = rows.size();
    m.cols = rows.empty() ? 0 : rows[0].size();
    for (const auto& row : rows) {
        if (row.size() != m.cols) throw DimensionError("matrix rows have unequal lengths");
        m.values.insert(m.values.end(), row.begin(), row.end());
    }
    return m;
}

GateKind parse_gate(const std::string& name) {
    const auto g = gate_from_name(name);
    if (!g) throw ValidationError("unknown gate '" + name + "'");
    return *g;
}

Transition parse_transition(const std::string& name) {
    const auto t = transition_from_name(name);
    if (!t) throw ValidationError("unknown transition '" + name + "'");
    return *t;
}

py::dict history_to_dicts(const TrainHistory& h) {
    py::list epochs;
    for (const auto& e : h.epochs) {
        py::dict d;
        d["epoch"] = e.epoch;
        d["train_loss"] = e.train_loss;
        if (e.valid_metric) {
            d["valid_metric"] = *e.valid_metric;
        } else {
            d["valid_metric"] = py::none();
        }
        d["wall_time_sec"] = e.wall_time_sec;
        epochs.append(d);
    }
    py::dict out;
    out["epochs"] = epochs;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Transition-aware multi-activity knowledge tracing";
    m.attr("__version__") = kVersion;

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<DegenerateError>(m, "DegenerateError", PyExc_ValueError);

    py::class_<Hyperparams>(m, "Hyperparams")
        .def(py::init<>())
        .def_readwrite("problem_dim", &Hyperparams::problem_dim)
        .def_readwrite("lecture_dim", &Hyperparams::lecture_dim)
        .def_readwrite("response_dim", &Hyperparams::response_dim)
        .def_readwrite("hidden_dim", &Hyperparams::hidden_dim)
        .def_readwrite("seq_len", &Hyperparams::seq_len)
        .def_readwrite("lambda_", &Hyperparams::lambda)
        .def_readwrite("learning_rate", &Hyperparams::learning_rate)
        .def_readwrite("epochs", &Hyperparams::epochs)
        .def_readwrite("batch_size", &Hyperparams::batch_size)
        .def_readwrite("clip_norm", &Hyperparams::clip_norm)
        .def_readwrite("seed", &Hyperparams::seed)
        .def_readwrite("tied_transfer", &Hyperparams::tied_transfer)
        .def_property(
            "response_mode",
            [](const Hyperparams& h) { return std::string(response_mode_name(h.response_mode)); },
            [](Hyperparams& h, const std::string& name) {
                const auto mode = response_mode_from_name(name);
                if (!mode) throw ValidationError("response_mode must be 'binary' or 'numeric'");
                h.response_mode = *mode;
            });

    py::class_<SyntheticConfig>(m, "SyntheticConfig")
        .def(py::init<>())
        .def_readwrite("n_students", &SyntheticConfig::n_students)
        .def_readwrite("n_problems", &SyntheticConfig::n_problems)
        .def_readwrite("n_lectures", &SyntheticConfig::n_lectures)
        .def_readwrite("n_concepts", &SyntheticConfig::n_concepts)
        .def_readwrite("steps_per_student", &SyntheticConfig::steps_per_student)
        .def_readwrite("lecture_fraction", &SyntheticConfig::lecture_fraction)
        .def_readwrite("skill_mean", &SyntheticConfig::skill_mean)
        .def_readwrite("skill_std", &SyntheticConfig::skill_std)
        .def_readwrite("difficulty_std", &SyntheticConfig::difficulty_std)
        .def_readwrite("lecture_gain", &SyntheticConfig::lecture_gain)
        .def_readwrite("practice_gain", &SyntheticConfig::practice_gain)
        .def_readwrite("transfer_ql", &SyntheticConfig::transfer_ql)
        .def_readwrite("transfer_lq", &SyntheticConfig::transfer_lq)
        .def_readwrite("seed", &SyntheticConfig::seed);

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("problem_count", &Dataset::problem_count)
        .def_property_readonly("lecture_count", &Dataset::lecture_count)
        .def_property_readonly("student_count", &Dataset::student_count)
        .def_property_readonly(
            "response_mode",
            [](const Dataset& d) { return std::string(response_mode_name(d.mode)); })
        .def("student_ids", &Dataset::student_ids)
        .def("save", [](const Dataset& d, const std::string& path) { save_interactions(d, path); });

    py::class_<ModelParams>(m, "ModelParams")
        .def_property_readonly("problem_count",
                               [](const ModelParams& p) { return p.problem_count; })
        .def_property_readonly("lecture_count",
                               [](const ModelParams& p) { return p.lecture_count; })
        .def("squared_norm", &ModelParams::squared_norm);

    m.def("generate_synthetic", &generate_synthetic, py::arg("config"));
    m.def("load_interactions", &load_interactions, py::arg("path"));

    m.def(
        "stratified_folds",
        [](const Dataset& ds, std::size_t k, std::uint64_t seed) {
            py::list out;
            for (const auto& f : stratified_folds(ds, k, seed)) {
                out.append(py::make_tuple(f.train_students, f.test_students));
            }
            return out;
        },
        py::arg("dataset"), py::arg("k") = 5, py::arg("seed") = 0);

    m.def(
        "train",
        [](const Dataset& ds, const std::vector<std::string>& students, const Hyperparams& hyper,
           std::optional<std::vector<std::string>> valid) {
            const TrainResult r = train(ds, students, hyper, valid);
            return py::make_tuple(r.params, history_to_dicts(r.history));
        },
        py::arg("dataset"), py::arg("train_students"), py::arg("hyper"),
        py::arg("valid_students") = py::none());

    m.def(
        "evaluate",
        [](const ModelParams& p, const Dataset& ds, const std::vector<std::string>& students,
           const Hyperparams& hyper, bool exclude_cold_start) {
            const EvalResult r = evaluate(p, ds, students, hyper, exclude_cold_start);
            py::dict d;
            d["auc"] = r.auc ? py::cast(*r.auc) : py::none();
            d["rmse"] = r.rmse;
            d["n_predictions"] = r.n_predictions;
            return d;
        },
        py::arg("params"), py::arg("dataset"), py::arg("students"), py::arg("hyper"),
        py::arg("exclude_cold_start") = false);

    m.def(
        "cross_validate",
        [](const Dataset& ds, const Hyperparams& hyper, std::size_t k, std::uint64_t seed,
           bool exclude_cold_start) {
            const CrossValResult r = cross_validate(ds, hyper, k, seed, exclude_cold_start);
            py::list folds;
            for (const auto& f : r.folds) {
                py::dict d;
                d["fold"] = f.fold_index;
                d["metric"] = f.metric;
                d["value"] = f.value;
                d["n_predictions"] = f.n_predictions;
                folds.append(d);
            }
            py::list summary;
            for (const auto& s : r.summary) {
                py::dict d;
                d["metric"] = s.metric;
                d["mean"] = s.mean;
                d["std"] = s.stddev;
                summary.append(d);
            }
            py::dict out;
            out["folds"] = folds;
            out["summary"] = summary;
            return out;
        },
        py::arg("dataset"), py::arg("hyper"), py::arg("k") = 5, py::arg("seed") = 0,
        py::arg("exclude_cold_start") = false);

    m.def("save_checkpoint", &save_checkpoint, py::arg("params"), py::arg("hyper"),
          py::arg("path"));
    m.def("load_checkpoint", [](const std::string& path) {
        auto [params, hyper] = load_checkpoint(path);
        return py::make_tuple(params, hyper);
    });

    m.def("auc", &auc, py::arg("scores"), py::arg("labels"));
    m.def("rmse", &rmse, py::arg("predictions"), py::arg("targets"));
    m.def(
        "paired_t_test",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const TTestResult r = paired_t_test(a, b);
            return py::make_tuple(r.t, r.p);
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "wilcoxon_signed_rank",
        [](const std::vector<double>& x, const std::vector<double>& y) {
            const WilcoxonResult r = wilcoxon_signed_rank(x, y);
            return py::make_tuple(r.w, r.p);
        },
        py::arg("x"), py::arg("y"));
    m.def(
        "spearman",
        [](const std::vector<double>& x, const std::vector<double>& y) {
            const SpearmanResult r = spearman(x, y);
            return py::make_tuple(r.rho, r.p);
        },
        py::arg("x"), py::arg("y"));
    m.def(
        "zscore_normalize",
        [](const std::vector<std::vector<double>>& rows) {
            return matrix_to_rows(zscore_normalize(rows_to_matrix(rows)));
        },
        py::arg("matrix"));

    m.def(
        "compare_transfer_matrices",
        [](const ModelParams& p, const std::string& gate, const std::string& first,
           const std::string& second) {
            const TransferReport r =
                compare_transfer_matrices(p, parse_gate(gate), parse_transition(first),
                                          parse_transition(second));
            py::dict d;
            d["gate"] = gate_name(r.gate);
            d["pair"] = py::make_tuple(transition_name(r.first), transition_name(r.second));
            d["wilcoxon_w"] = r.wilcoxon_degenerate ? py::object(py::none()) : py::cast(r.wilcoxon_w);
            d["wilcoxon_p"] = r.wilcoxon_degenerate ? py::object(py::none()) : py::cast(r.wilcoxon_p);
            d["spearman_rho"] =
                r.spearman_degenerate ? py::object(py::none()) : py::cast(r.spearman_rho);
            d["spearman_p"] =
                r.spearman_degenerate ? py::object(py::none()) : py::cast(r.spearman_p);
            d["z_first"] = matrix_to_rows(r.z_first);
            d["z_second"] = matrix_to_rows(r.z_second);
            return d;
        },
        py::arg("params"), py::arg("gate") = "forget", py::arg("first") = "QL",
        py::arg("second") = "LQ");

    m.def(
        "knowledge_state_trajectory",
        [](const ModelParams& p, const Dataset& ds, const std::string& student_id,
           const std::vector<std::size_t>& assessed_ids, const Hyperparams& hyper) {
            const StudentSequence* seq = ds.find_student(student_id);
            if (!seq) throw ValidationError("student '" + student_id + "' not found");
            std::vector<std::size_t> ids = assessed_ids;
            if (ids.empty()) {
                for (std::size_t q = 0; q < ds.problem_count(); ++q) ids.push_back(q);
            }
            return matrix_to_rows(knowledge_state_trajectory(p, *seq, ids, hyper));
        },
        py::arg("params"), py::arg("dataset"), py::arg("student_id"),
        py::arg("assessed_ids") = std::vector<std::size_t>{}, py::arg("hyper"));
}
