#include "takt/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "takt/training.hpp"

namespace takt {

namespace {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("auc: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw DomainError("auc: labels must be 0 or 1");
        n_pos += static_cast<std::size_t>(l);
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw DegenerateError("auc undefined: only one class present");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tie groups, 1-based.
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t t = i; t <= j; ++t) {
            if (labels[order[t]] == 1) pos_rank_sum += avg_rank;
        }
        i = j + 1;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double rmse(const std::vector<double>& predictions, const std::vector<double>& targets) {
    if (predictions.size() != targets.size()) {
        throw DimensionError("rmse: " + std::to_string(predictions.size()) + " predictions vs " +
                             std::to_string(targets.size()) + " targets");
    }
    if (predictions.empty()) throw DegenerateError("rmse undefined on empty input");
    double sq = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - targets[i];
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(predictions.size()));
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw DimensionError("paired_t_test: lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()) + " differ");
    }
    const std::size_t n = a.size();
    if (n < 2) throw DegenerateError("paired_t_test needs at least two pairs");
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n - 1);
    if (var <= 0.0) {
        throw DegenerateError("paired_t_test: differences have zero variance");
    }
    TTestResult res;
    res.df = n - 1;
    res.t = mean / std::sqrt(var / static_cast<double>(n));
    const boost::math::students_t dist(static_cast<double>(res.df));
    res.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(res.t)));
    return res;
}

EvalResult evaluate(const ModelParams& params, const Dataset& dataset,
                    const std::vector<std::string>& students, const Hyperparams& hyper,
                    bool exclude_cold_start) {
    std::vector<double> preds;
    std::vector<double> targets;
    for (const auto& id : students) {
        const StudentSequence* seq = dataset.find_student(id);
        if (!seq) throw ValidationError("unknown student id '" + id + "'");
        for (const auto& chunk : pad_truncate(*seq, hyper.seq_len)) {
            Tape tape(/*recording=*/false);
            const ForwardResult out = forward_sequence(tape, chunk, params, hyper);
            for (std::size_t t = 0; t < out.mask.size(); ++t) {
                if (!out.mask[t]) continue;
                if (exclude_cold_start && out.cold_start[t]) continue;
                preds.push_back(out.predictions[t].value());
                targets.push_back(out.targets[t]);
            }
        }
    }
    EvalResult res;
    res.n_predictions = preds.size();
    if (preds.empty()) {
        throw DegenerateError("evaluate: no predictions were emitted");
    }
    res.rmse = rmse(preds, targets);
    if (dataset.mode == ResponseMode::Binary) {
        std::vector<int> labels(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) labels[i] = targets[i] == 1.0 ? 1 : 0;
        try {
            res.auc = auc(preds, labels);
        } catch (const DegenerateError&) {
            res.auc = std::nullopt;  // single-class targets
        }
    }
    return res;
}

CrossValResult cross_validate(const Dataset& dataset, const Hyperparams& hyper, std::size_t k,
                              std::uint64_t seed, bool exclude_cold_start) {
    const auto folds = stratified_folds(dataset, k, seed);
    CrossValResult result;
    std::vector<double> auc_values;
    std::vector<double> rmse_values;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        Hyperparams fold_hyper = hyper;
        fold_hyper.seed = hyper.seed + f;
        const TrainResult tr = train(dataset, folds[f].train_students, fold_hyper);
        const EvalResult ev =
            evaluate(tr.params, dataset, folds[f].test_students, fold_hyper, exclude_cold_start);
        if (ev.auc.has_value()) {
            result.folds.push_back({f, "auc", *ev.auc, ev.n_predictions});
            auc_values.push_back(*ev.auc);
        }
        result.folds.push_back({f, "rmse", ev.rmse, ev.n_predictions});
        rmse_values.push_back(ev.rmse);
    }

    auto summarize = [&](const std::string& name, const std::vector<double>& values) {
        if (values.empty()) return;
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        const double sd =
            values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
        result.summary.push_back({name, mean, sd});
    };
    summarize("auc", auc_values);
    summarize("rmse", rmse_values);
    return result;
}

std::string format_metrics_report(const CrossValResult& result) {
    std::string out = "fold,metric,value,n_predictions\n";
    for (const auto& row : result.folds) {
        out += std::to_string(row.fold_index) + "," + row.metric + "," + format_double(row.value) +
               "," + std::to_string(row.n_predictions) + "\n";
    }
    for (const auto& s : result.summary) {
        out += "mean," + s.metric + "," + format_double(s.mean) + ",\n";
        out += "std," + s.metric + "," + format_double(s.stddev) + ",\n";
    }
    return out;
}

void write_metrics_report(const CrossValResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write metrics report '" + path + "'");
    out << format_metrics_report(result);
    if (!out) throw IoError("failed writing metrics report '" + path + "'");
}

}  // namespace takt
