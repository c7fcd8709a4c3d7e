#include "takt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "takt/rng.hpp"
#include "takt/tensor.hpp"

namespace takt {

namespace {

constexpr const char* kHeader = "student_id,time_index,material_type,material_id,response";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, std::size_t line_no, const char* what) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    }
    return v;
}

std::int64_t parse_int(const std::string& s, std::size_t line_no, const char* what) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    }
    return v;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

void check_field(const std::string& s, const char* what) {
    if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos) {
        throw ValidationError(std::string(what) + " '" + s + "' contains a delimiter");
    }
}

}  // namespace

const char* response_mode_name(ResponseMode m) {
    return m == ResponseMode::Binary ? "binary" : "numeric";
}

std::optional<ResponseMode> response_mode_from_name(const std::string& name) {
    if (name == "binary") return ResponseMode::Binary;
    if (name == "numeric") return ResponseMode::Numeric;
    return std::nullopt;
}

std::vector<std::string> Dataset::student_ids() const {
    std::vector<std::string> out;
    out.reserve(sequences.size());
    for (const auto& s : sequences) out.push_back(s.student_id);
    return out;
}

const StudentSequence* Dataset::find_student(const std::string& id) const {
    for (const auto& s : sequences) {
        if (s.student_id == id) return &s;
    }
    return nullptr;
}

Dataset parse_interactions(const std::string& text, const std::string& origin) {
    Dataset ds;
    std::unordered_map<std::string, std::size_t> student_index;
    std::unordered_map<std::string, std::size_t> problem_index;
    std::unordered_map<std::string, std::size_t> lecture_index;
    std::set<std::pair<std::string, std::int64_t>> seen_keys;
    bool all_binary = true;
    bool any_response = false;

    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::int64_t ordinal = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != kHeader) {
                throw ParseError(origin + ": line 1: expected header '" + std::string(kHeader) +
                                 "', got '" + line + "'");
            }
            continue;
        }
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 5) {
            throw ParseError(origin + ": line " + std::to_string(line_no) + ": expected 5 fields, got " +
                             std::to_string(fields.size()));
        }
        const std::string& student = fields[0];
        if (student.empty()) {
            throw ParseError(origin + ": line " + std::to_string(line_no) + ": empty student_id");
        }
        const std::int64_t time_index = parse_int(fields[1], line_no, "time_index");
        const std::int64_t type = parse_int(fields[2], line_no, "material_type");
        if (type != 0 && type != 1) {
            throw ParseError(origin + ": line " + std::to_string(line_no) +
                             ": material_type must be 0 or 1, got '" + fields[2] + "'");
        }
        const std::string& material = fields[3];
        if (material.empty()) {
            throw ParseError(origin + ": line " + std::to_string(line_no) + ": empty material_id");
        }

        if (!seen_keys.insert({student, time_index}).second) {
            throw ValidationError(origin + ": line " + std::to_string(line_no) +
                                  ": duplicate (student, time) key (" + student + ", " +
                                  std::to_string(time_index) + ")");
        }

        Activity act;
        act.type = static_cast<int>(type);
        act.time_index = time_index;
        act.ordinal = ordinal++;
        if (type == 0) {
            if (fields[4].empty()) {
                throw ValidationError(origin + ": line " + std::to_string(line_no) +
                                      ": assessed record has no response");
            }
            const double r = parse_double(fields[4], line_no, "response");
            act.response = r;
            any_response = true;
            if (r != 0.0 && r != 1.0) all_binary = false;
            auto [it, inserted] = problem_index.try_emplace(material, ds.problem_ids.size());
            if (inserted) ds.problem_ids.push_back(material);
            act.material = it->second;
        } else {
            if (!fields[4].empty()) {
                throw ValidationError(origin + ": line " + std::to_string(line_no) +
                                      ": non-assessed record carries a response");
            }
            auto [it, inserted] = lecture_index.try_emplace(material, ds.lecture_ids.size());
            if (inserted) ds.lecture_ids.push_back(material);
            act.material = it->second;
        }

        auto [sit, s_inserted] = student_index.try_emplace(student, ds.sequences.size());
        if (s_inserted) ds.sequences.push_back(StudentSequence{student, {}});
        ds.sequences[sit->second].activities.push_back(act);
    }

    for (auto& seq : ds.sequences) {
        std::stable_sort(seq.activities.begin(), seq.activities.end(),
                         [](const Activity& a, const Activity& b) {
                             return a.time_index < b.time_index;
                         });
    }
    ds.mode = (!any_response || all_binary) ? ResponseMode::Binary : ResponseMode::Numeric;
    return ds;
}

Dataset load_interactions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open interaction log '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    if (text.empty()) return Dataset{};  // empty file -> empty dataset
    return parse_interactions(text, path);
}

std::string format_interactions(const Dataset& dataset) {
    // Emit records in global ordinal order so that a reload assigns the same
    // first-appearance vocabularies.
    struct Rec {
        const StudentSequence* seq;
        const Activity* act;
    };
    std::vector<Rec> recs;
    for (const auto& seq : dataset.sequences) {
        check_field(seq.student_id, "student_id");
        for (const auto& act : seq.activities) {
            if (act.padding) continue;
            recs.push_back({&seq, &act});
        }
    }
    std::sort(recs.begin(), recs.end(),
              [](const Rec& a, const Rec& b) { return a.act->ordinal < b.act->ordinal; });

    std::ostringstream out;
    out << kHeader << "\n";
    for (const auto& r : recs) {
        const Activity& a = *r.act;
        const auto& ids = a.type == 0 ? dataset.problem_ids : dataset.lecture_ids;
        if (a.material >= ids.size()) {
            throw IndexError("material id " + std::to_string(a.material) +
                             " out of range for vocabulary of " + std::to_string(ids.size()));
        }
        check_field(ids[a.material], "material_id");
        out << r.seq->student_id << ',' << a.time_index << ',' << a.type << ','
            << ids[a.material] << ',';
        if (a.response.has_value()) out << format_double(*a.response);
        out << '\n';
    }
    return out.str();
}

void save_interactions(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write interaction log '" + path + "'");
    out << format_interactions(dataset);
    if (!out) throw IoError("failed writing interaction log '" + path + "'");
}

Dataset normalize_scores(const Dataset& dataset, const std::map<std::string, double>& max_score) {
    if (dataset.mode == ResponseMode::Binary) return dataset;
    Dataset out = dataset;
    for (auto& seq : out.sequences) {
        for (auto& act : seq.activities) {
            if (act.type != 0 || !act.response.has_value()) continue;
            const std::string& id = out.problem_ids.at(act.material);
            const auto it = max_score.find(id);
            if (it == max_score.end()) {
                throw ValidationError("no max score for assessed material '" + id + "'");
            }
            if (it->second <= 0.0) {
                throw ValidationError("max score for material '" + id + "' must be positive");
            }
            if (*act.response > it->second) {
                throw ValidationError("response " + format_double(*act.response) +
                                      " exceeds max score " + format_double(it->second) +
                                      " for material '" + id + "'");
            }
            act.response = *act.response / it->second;
        }
    }
    return out;
}

std::vector<StudentSequence> pad_truncate(const StudentSequence& seq, std::size_t seq_len) {
    if (seq_len < 1) throw ValidationError("pad_truncate: seq_len must be >= 1");
    std::vector<StudentSequence> chunks;
    const std::size_t n = seq.activities.size();
    for (std::size_t start = 0; start < n; start += seq_len) {
        StudentSequence chunk;
        chunk.student_id = seq.student_id;
        const std::size_t end = std::min(n, start + seq_len);
        chunk.activities.assign(seq.activities.begin() + static_cast<std::ptrdiff_t>(start),
                                seq.activities.begin() + static_cast<std::ptrdiff_t>(end));
        while (chunk.activities.size() < seq_len) {
            Activity pad;
            pad.padding = true;
            chunk.activities.push_back(pad);
        }
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

std::vector<Fold> stratified_folds(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("stratified_folds: k must be >= 2");
    const std::size_t n = dataset.student_count();
    if (n < k) {
        throw ValidationError("stratified_folds: " + std::to_string(n) + " students is fewer than k=" +
                              std::to_string(k));
    }
    std::vector<std::string> students = dataset.student_ids();
    Rng rng(seed);
    rng.shuffle(students);

    std::vector<Fold> folds(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t lo = i * n / k;
        const std::size_t hi = (i + 1) * n / k;
        Fold& f = folds[i];
        for (std::size_t j = 0; j < n; ++j) {
            if (j >= lo && j < hi) {
                f.test_students.push_back(students[j]);
            } else {
                f.train_students.push_back(students[j]);
            }
        }
    }
    return folds;
}

void SyntheticConfig::validate() const {
    if (n_students < 1 || n_problems < 1 || n_lectures < 1 || steps_per_student < 1) {
        throw ValidationError("synthetic config: counts must be >= 1");
    }
    if (n_concepts < 1) throw ValidationError("synthetic config: n_concepts must be >= 1");
    if (lecture_fraction < 0.0 || lecture_fraction > 1.0) {
        throw ValidationError("synthetic config: lecture_fraction must lie in [0,1]");
    }
    const std::size_t cc = n_concepts * n_concepts;
    if (!transfer_ql.empty() && transfer_ql.size() != cc) {
        throw ValidationError("synthetic config: transfer_ql must have n_concepts^2 entries");
    }
    if (!transfer_lq.empty() && transfer_lq.size() != cc) {
        throw ValidationError("synthetic config: transfer_lq must have n_concepts^2 entries");
    }
}

namespace {

void apply_transfer(std::vector<double>& skill, const std::vector<double>& m, std::size_t c) {
    if (m.empty()) return;  // identity
    std::vector<double> next(c, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) next[i] += m[i * c + j] * skill[j];
    }
    skill = std::move(next);
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    const std::size_t C = config.n_concepts;
    Rng rng(config.seed);

    // Material banks: peaked nonnegative loadings (softmax of a Gaussian)
    // with unit L1 mass, so each material concentrates on a few concepts and
    // skill . loading stays on the skill scale.
    auto peaked_loading = [&rng, C] {
        std::vector<double> u(C);
        double mass = 0.0;
        for (auto& v : u) {
            v = std::exp(2.0 * rng.normal(0.0, 1.0));
            mass += v;
        }
        for (auto& v : u) v /= mass;
        return u;
    };
    std::vector<std::vector<double>> problem_loading(config.n_problems);
    std::vector<double> difficulty(config.n_problems);
    for (std::size_t q = 0; q < config.n_problems; ++q) {
        problem_loading[q] = peaked_loading();
        difficulty[q] = rng.normal(0.0, config.difficulty_std);
    }
    std::vector<std::vector<double>> lecture_loading(config.n_lectures);
    for (std::size_t l = 0; l < config.n_lectures; ++l) {
        lecture_loading[l] = peaked_loading();
    }

    Dataset ds;
    ds.mode = ResponseMode::Binary;

    std::int64_t ordinal = 0;
    for (std::size_t s = 0; s < config.n_students; ++s) {
        StudentSequence seq;
        seq.student_id = "s" + std::to_string(s);
        std::vector<double> skill(C);
        for (auto& v : skill) v = rng.normal(config.skill_mean, config.skill_std);

        int prev_type = -1;
        for (std::size_t t = 0; t < config.steps_per_student; ++t) {
            const bool lecture = rng.bernoulli(config.lecture_fraction);
            const int type = lecture ? 1 : 0;
            if (prev_type == 0 && type == 1) apply_transfer(skill, config.transfer_ql, C);
            if (prev_type == 1 && type == 0) apply_transfer(skill, config.transfer_lq, C);

            Activity act;
            act.type = type;
            act.time_index = static_cast<std::int64_t>(t);
            act.ordinal = ordinal++;
            if (lecture) {
                const std::size_t l = static_cast<std::size_t>(rng.uniform_int(config.n_lectures));
                act.material = l;  // bank index; relabeled below
                for (std::size_t i = 0; i < C; ++i) skill[i] += config.lecture_gain * lecture_loading[l][i];
            } else {
                const std::size_t q = static_cast<std::size_t>(rng.uniform_int(config.n_problems));
                act.material = q;
                double z = -difficulty[q];
                for (std::size_t i = 0; i < C; ++i) z += skill[i] * problem_loading[q][i];
                const bool correct = rng.bernoulli(sigmoid_scalar(z));
                act.response = correct ? 1.0 : 0.0;
                for (std::size_t i = 0; i < C; ++i) skill[i] += config.practice_gain * problem_loading[q][i];
            }
            seq.activities.push_back(act);
            prev_type = type;
        }
        ds.sequences.push_back(std::move(seq));
    }

    // Relabel bank indices into dense vocabularies in first-appearance order,
    // matching the loader's convention so that save/load round-trips exactly.
    // Bank entries that never occur are dropped.
    std::unordered_map<std::size_t, std::size_t> problem_map;
    std::unordered_map<std::size_t, std::size_t> lecture_map;
    for (auto& seq : ds.sequences) {
        for (auto& act : seq.activities) {
            if (act.type == 0) {
                auto [it, inserted] = problem_map.try_emplace(act.material, ds.problem_ids.size());
                if (inserted) ds.problem_ids.push_back("q" + std::to_string(act.material));
                act.material = it->second;
            } else {
                auto [it, inserted] = lecture_map.try_emplace(act.material, ds.lecture_ids.size());
                if (inserted) ds.lecture_ids.push_back("lec" + std::to_string(act.material));
                act.material = it->second;
            }
        }
    }
    return ds;
}

}  // namespace takt
