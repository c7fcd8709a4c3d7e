#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "takt/data.hpp"
#include "takt/model.hpp"

namespace takt {

// Rank-based AUC: probability that a random positive outranks a random
// negative, ties credited 0.5 (Mann-Whitney with average ranks). Throws
// DegenerateError unless both classes are present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Root mean squared error; DegenerateError on empty input.
double rmse(const std::vector<double>& predictions, const std::vector<double>& targets);

struct TTestResult {
    double t = 0.0;
    double p = 0.0;
    std::size_t df = 0;
};

// Two-sided paired t-test on elementwise differences a - b; DegenerateError
// when fewer than two pairs or the differences have zero variance.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct EvalResult {
    std::optional<double> auc;  // absent for numeric data or single-class targets
    double rmse = 0.0;
    std::size_t n_predictions = 0;
};

// Frozen-parameter evaluation over the given students' padded sequences.
// Cold-start emissions (predicted from the zero initial state) are dropped
// when exclude_cold_start is set.
EvalResult evaluate(const ModelParams& params, const Dataset& dataset,
                    const std::vector<std::string>& students, const Hyperparams& hyper,
                    bool exclude_cold_start = false);

struct FoldMetrics {
    std::size_t fold_index = 0;
    std::string metric;
    double value = 0.0;
    std::size_t n_predictions = 0;
};

struct MetricSummary {
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation over folds
};

struct CrossValResult {
    std::vector<FoldMetrics> folds;
    std::vector<MetricSummary> summary;
};

// k-fold student-level cross-validation: trains on each fold's 80% student
// split and evaluates on the held-out students. Binary datasets report AUC
// and RMSE, numeric datasets RMSE.
CrossValResult cross_validate(const Dataset& dataset, const Hyperparams& hyper, std::size_t k,
                              std::uint64_t seed, bool exclude_cold_start = false);

// Metrics report: CSV with one row per (fold, metric) and trailing mean/std
// summary rows.
std::string format_metrics_report(const CrossValResult& result);
void write_metrics_report(const CrossValResult& result, const std::string& path);

}  // namespace takt
