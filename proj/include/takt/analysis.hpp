#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "takt/data.hpp"
#include "takt/model.hpp"

namespace takt {

// Dense row-major matrix for analysis outputs (z-scored weights, knowledge
// trajectories, heatmap export).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // rows * cols, row-major

    static Matrix zeros(std::size_t r, std::size_t c) { return Matrix{r, c, std::vector<double>(r * c, 0.0)}; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// (M - mean) / std over all entries; population standard deviation.
// DegenerateError when the matrix has fewer than two entries or zero variance.
Matrix zscore_normalize(const Matrix& m);

struct WilcoxonResult {
    double w = 0.0;        // min(W+, W-) on average ranks
    double p = 0.0;        // two-sided
    std::size_t n = 0;     // pairs remaining after dropping zero differences
    bool exact = false;    // exact signed-rank distribution vs normal approximation
};

// Two-sided Wilcoxon signed-rank test on paired differences x - y. Zero
// differences are dropped; |differences| are ranked with average ranks for
// ties. The p-value uses exact enumeration of the signed-rank distribution
// for n <= 25 and a tie- and continuity-corrected normal approximation above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y);

namespace detail {

// The two p-value routes behind wilcoxon_signed_rank, taking the average
// ranks of the nonzero |differences| and the observed positive rank sum.
// Exposed so the paths can be checked against each other.
double wilcoxon_exact_p(const std::vector<double>& ranks, double w_pos);
double wilcoxon_normal_approx_p(const std::vector<double>& ranks, double w_pos);

}  // namespace detail

struct SpearmanResult {
    double rho = 0.0;
    double p = 0.0;  // two-sided, t approximation with n-2 df
};

SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y);

// Paired comparison of two of a gate's transfer matrices: both are flattened
// row-major, run through the Wilcoxon and Spearman tests, and z-scored for
// heatmap export. A single degenerate test is recorded via its flag (value
// NaN); only when both tests degenerate does the call throw.
struct TransferReport {
    GateKind gate = GateKind::Forget;
    Transition first = Transition::QL;
    Transition second = Transition::LQ;
    double wilcoxon_w = 0.0;
    double wilcoxon_p = 0.0;
    bool wilcoxon_degenerate = false;
    double spearman_rho = 0.0;
    double spearman_p = 0.0;
    bool spearman_degenerate = false;
    Matrix z_first;
    Matrix z_second;
};

TransferReport compare_transfer_matrices(const ModelParams& params, GateKind gate,
                                         Transition first = Transition::QL,
                                         Transition second = Transition::LQ);

std::string format_transfer_report(const TransferReport& report);
void write_transfer_report(const TransferReport& report, const std::string& path);

// Predicted performance on every material of interest after every
// non-padding step: row i = assessed_ids[i], column t = state after step t.
Matrix knowledge_state_trajectory(const ModelParams& params, const StudentSequence& seq,
                                  const std::vector<std::size_t>& assessed_ids,
                                  const Hyperparams& hyper);

// Row-major CSV with integer row/column index headers; values are written in
// shortest round-trip form, locale-independent.
void export_heatmap_csv(const Matrix& m, const std::string& path);
std::string format_heatmap_csv(const Matrix& m);
Matrix read_heatmap_csv(const std::string& path);

}  // namespace takt
