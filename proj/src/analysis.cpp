#include "takt/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

namespace takt {

namespace {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

Matrix zscore_normalize(const Matrix& m) {
    const std::size_t n = m.values.size();
    if (n < 2) throw DegenerateError("zscore_normalize needs at least two entries");
    double mean = 0.0;
    for (double v : m.values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : m.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    if (var <= 0.0) throw DegenerateError("zscore_normalize: zero variance");
    const double inv_std = 1.0 / std::sqrt(var);
    Matrix out = m;
    for (double& v : out.values) v = (v - mean) * inv_std;
    return out;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) {
        throw DimensionError("wilcoxon_signed_rank: lengths " + std::to_string(x.size()) +
                             " and " + std::to_string(y.size()) + " differ");
    }
    std::vector<double> abs_diff;
    std::vector<int> sign;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        if (d == 0.0) continue;  // classic treatment: drop zero differences
        abs_diff.push_back(std::abs(d));
        sign.push_back(d > 0.0 ? 1 : -1);
    }
    const std::size_t n = abs_diff.size();
    if (n == 0) throw DegenerateError("wilcoxon_signed_rank: all differences are zero");
    if (n < 5) {
        throw DegenerateError("wilcoxon_signed_rank needs at least 5 nonzero differences, got " +
                              std::to_string(n));
    }

    const std::vector<double> ranks = average_ranks(abs_diff);
    double w_pos = 0.0, w_neg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (sign[i] > 0) {
            w_pos += ranks[i];
        } else {
            w_neg += ranks[i];
        }
    }

    WilcoxonResult res;
    res.n = n;
    res.w = std::min(w_pos, w_neg);
    res.exact = n <= 25;
    res.p = res.exact ? detail::wilcoxon_exact_p(ranks, w_pos)
                      : detail::wilcoxon_normal_approx_p(ranks, w_pos);
    return res;
}

namespace detail {

double wilcoxon_exact_p(const std::vector<double>& ranks, double w_pos) {
    // Exact distribution of W+ = sum of a random subset of the ranks.
    // Average ranks are multiples of 1/2, so doubling makes them integers and
    // the distribution follows the subset-sum recurrence.
    const std::size_t n = ranks.size();
    std::vector<std::int64_t> scaled(n);
    std::int64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        scaled[i] = static_cast<std::int64_t>(std::llround(2.0 * ranks[i]));
        total += scaled[i];
    }
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    std::int64_t reached = 0;
    for (std::size_t i = 0; i < n; ++i) {
        reached += scaled[i];
        for (std::int64_t s = reached; s >= scaled[i]; --s) {
            count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - scaled[i])];
        }
    }
    const auto t_obs = static_cast<std::int64_t>(std::llround(2.0 * w_pos));
    double le = 0.0, ge = 0.0;
    for (std::int64_t s = 0; s <= total; ++s) {
        const double c = count[static_cast<std::size_t>(s)];
        if (s <= t_obs) le += c;
        if (s >= t_obs) ge += c;
    }
    const double denom = std::pow(2.0, static_cast<double>(n));
    return std::min(1.0, 2.0 * std::min(le, ge) / denom);
}

double wilcoxon_normal_approx_p(const std::vector<double>& ranks, double w_pos) {
    // Tie correction from the rank multiplicities, continuity correction of
    // one half toward the mean.
    const std::size_t n = ranks.size();
    const double nd = static_cast<double>(n);
    const double mu = nd * (nd + 1.0) / 4.0;
    double tie_term = 0.0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) throw DegenerateError("wilcoxon_signed_rank: zero variance (all ranks tied)");
    double dev = w_pos - mu;
    if (dev > 0.5) {
        dev -= 0.5;
    } else if (dev < -0.5) {
        dev += 0.5;
    } else {
        dev = 0.0;
    }
    const double z = dev / std::sqrt(var);
    return std::min(1.0, 2.0 * normal_sf(std::abs(z)));
}

}  // namespace detail

SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) {
        throw DimensionError("spearman: lengths " + std::to_string(x.size()) + " and " +
                             std::to_string(y.size()) + " differ");
    }
    const std::size_t n = x.size();
    if (n < 3) throw DegenerateError("spearman needs at least 3 pairs");
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);

    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = rx[i] - mx;
        const double dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        throw DegenerateError("spearman: an input has zero rank variance");
    }
    SpearmanResult res;
    res.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double df = static_cast<double>(n - 2);
    const double denom = 1.0 - res.rho * res.rho;
    if (denom <= 0.0) {
        res.p = 0.0;  // perfectly monotone
        return res;
    }
    const double t = res.rho * std::sqrt(df / denom);
    const boost::math::students_t dist(df);
    res.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return res;
}

TransferReport compare_transfer_matrices(const ModelParams& params, GateKind gate,
                                         Transition first, Transition second) {
    const GateParams& gp = params.gates[static_cast<std::size_t>(gate)];
    const Tensor& a = gp.transfer[static_cast<std::size_t>(first)];
    const Tensor& b = gp.transfer[static_cast<std::size_t>(second)];
    const std::size_t dh = a.rows();

    TransferReport rep;
    rep.gate = gate;
    rep.first = first;
    rep.second = second;

    const std::vector<double>& av = a.values();
    const std::vector<double>& bv = b.values();
    try {
        const WilcoxonResult w = wilcoxon_signed_rank(av, bv);
        rep.wilcoxon_w = w.w;
        rep.wilcoxon_p = w.p;
    } catch (const DegenerateError&) {
        rep.wilcoxon_degenerate = true;
        rep.wilcoxon_w = std::nan("");
        rep.wilcoxon_p = std::nan("");
    }
    try {
        const SpearmanResult s = spearman(av, bv);
        rep.spearman_rho = s.rho;
        rep.spearman_p = s.p;
    } catch (const DegenerateError&) {
        rep.spearman_degenerate = true;
        rep.spearman_rho = std::nan("");
        rep.spearman_p = std::nan("");
    }
    if (rep.wilcoxon_degenerate && rep.spearman_degenerate) {
        throw DegenerateError("compare_transfer_matrices: both tests are degenerate");
    }
    rep.z_first = zscore_normalize(Matrix{dh, dh, av});
    rep.z_second = zscore_normalize(Matrix{dh, dh, bv});
    return rep;
}

std::string format_transfer_report(const TransferReport& report) {
    nlohmann::json doc;
    doc["gate"] = gate_name(report.gate);
    doc["pair"] = {transition_name(report.first), transition_name(report.second)};
    if (report.wilcoxon_degenerate) {
        doc["wilcoxon"] = {{"degenerate", true}};
    } else {
        doc["wilcoxon"] = {{"W", report.wilcoxon_w}, {"p", report.wilcoxon_p}};
    }
    if (report.spearman_degenerate) {
        doc["spearman"] = {{"degenerate", true}};
    } else {
        doc["spearman"] = {{"rho", report.spearman_rho}, {"p", report.spearman_p}};
    }
    return doc.dump(2) + "\n";
}

void write_transfer_report(const TransferReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write transfer report '" + path + "'");
    out << format_transfer_report(report);
    if (!out) throw IoError("failed writing transfer report '" + path + "'");
}

Matrix knowledge_state_trajectory(const ModelParams& params, const StudentSequence& seq,
                                  const std::vector<std::size_t>& assessed_ids,
                                  const Hyperparams& hyper) {
    for (std::size_t id : assessed_ids) {
        if (id >= params.problem_count) {
            throw IndexError("problem id " + std::to_string(id) +
                             " out of range for vocabulary of " +
                             std::to_string(params.problem_count));
        }
    }
    std::size_t steps = 0;
    for (const auto& a : seq.activities) {
        if (!a.padding) ++steps;
    }
    Matrix out = Matrix::zeros(assessed_ids.size(), steps);

    Tape tape(/*recording=*/false);
    CellState state = initial_state(hyper.hidden_dim);
    int d_prev = 0;
    bool any_step = false;
    std::size_t col = 0;
    for (const auto& act : seq.activities) {
        if (act.padding) continue;
        Tensor x = embed_activity(tape, act, params, hyper.response_mode);
        const int dp = any_step ? d_prev : act.type;
        state = cell_step(tape, x, dp, act.type, state, params);
        d_prev = act.type;
        any_step = true;
        for (std::size_t r = 0; r < assessed_ids.size(); ++r) {
            out.at(r, col) = predict(tape, state.h, assessed_ids[r], params).value();
        }
        ++col;
    }
    return out;
}

std::string format_heatmap_csv(const Matrix& m) {
    std::string out;
    for (std::size_t c = 0; c < m.cols; ++c) {
        out += "," + std::to_string(c);
    }
    out += "\n";
    for (std::size_t r = 0; r < m.rows; ++r) {
        out += std::to_string(r);
        for (std::size_t c = 0; c < m.cols; ++c) {
            out += "," + format_double(m.at(r, c));
        }
        out += "\n";
    }
    return out;
}

void export_heatmap_csv(const Matrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write heatmap csv '" + path + "'");
    out << format_heatmap_csv(m);
    if (!out) throw IoError("failed writing heatmap csv '" + path + "'");
}

Matrix read_heatmap_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open heatmap csv '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": missing header line");
    Matrix m;
    std::vector<double> values;
    std::size_t cols = 0;
    {
        std::size_t commas = 0;
        for (char c : line) commas += c == ',';
        cols = commas;
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::size_t idx = 0;
        while (std::getline(ls, field, ',')) {
            if (idx > 0) {
                double v = 0.0;
                auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
                if (ec != std::errc() || ptr != field.data() + field.size()) {
                    throw ParseError(path + ": line " + std::to_string(line_no) + ": bad value '" +
                                     field + "'");
                }
                values.push_back(v);
            }
            ++idx;
        }
        if (idx != cols + 1) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                             std::to_string(cols + 1) + " fields, got " + std::to_string(idx));
        }
        m.rows += 1;
    }
    m.cols = cols;
    m.values = std::move(values);
    return m;
}

}  // namespace takt
