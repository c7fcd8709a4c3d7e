#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "takt/errors.hpp"

namespace takt {

enum class ResponseMode { Binary, Numeric };

const char* response_mode_name(ResponseMode m);
std::optional<ResponseMode> response_mode_from_name(const std::string& name);

// One learning event. type 0 = assessed (problem; response present),
// type 1 = non-assessed (lecture; response absent). time_index orders events
// within a student; ordinal is the global record order, which the serializer
// preserves so that a save/load round trip reassigns identical vocabularies.
struct Activity {
    int type = 0;
    std::size_t material = 0;
    std::optional<double> response;
    std::int64_t time_index = 0;
    std::int64_t ordinal = 0;
    bool padding = false;

    bool operator==(const Activity&) const = default;
};

struct StudentSequence {
    std::string student_id;
    std::vector<Activity> activities;

    bool operator==(const StudentSequence&) const = default;
};

// Vocabularies are dense 0..size-1 in order of first appearance;
// problem_ids/lecture_ids map the dense index back to the source id string.
struct Dataset {
    std::vector<StudentSequence> sequences;
    std::vector<std::string> problem_ids;
    std::vector<std::string> lecture_ids;
    ResponseMode mode = ResponseMode::Binary;

    std::size_t problem_count() const { return problem_ids.size(); }
    std::size_t lecture_count() const { return lecture_ids.size(); }
    std::size_t student_count() const { return sequences.size(); }

    std::vector<std::string> student_ids() const;
    const StudentSequence* find_student(const std::string& id) const;

    bool operator==(const Dataset&) const = default;
};

// Interaction log: UTF-8 CSV with header
//   student_id,time_index,material_type,material_id,response
// material_type is 0|1; response is empty for type 1. Records are grouped by
// student and ordered by time_index; vocabularies are assigned by first
// appearance in file order; the response mode is binary iff every response
// is exactly 0 or 1.
Dataset load_interactions(const std::string& path);
Dataset parse_interactions(const std::string& text, const std::string& origin);
void save_interactions(const Dataset& dataset, const std::string& path);
std::string format_interactions(const Dataset& dataset);

// Divides each numeric response by its material's maximum score (keyed by
// the original material id string). Binary datasets pass through unchanged.
Dataset normalize_scores(const Dataset& dataset, const std::map<std::string, double>& max_score);

// Splits one sequence into ceil(n / seq_len) chunks of exactly seq_len
// activities; the tail of the last chunk is filled with flagged padding
// records that never contribute to loss or metrics.
std::vector<StudentSequence> pad_truncate(const StudentSequence& seq, std::size_t seq_len);

struct Fold {
    std::vector<std::string> train_students;
    std::vector<std::string> test_students;
};

// Partitions students into k disjoint test groups of size within +-1,
// deterministic under seed. Students never straddle train and test.
std::vector<Fold> stratified_folds(const Dataset& dataset, std::size_t k, std::uint64_t seed);

// Synthetic interaction generator. Students carry a latent skill vector over
// n_concepts; lectures add their concept loading to the skill, problems are
// answered Bernoulli(sigmoid(skill . loading - difficulty)), and every
// cross-type transition multiplies the skill by the matching transfer matrix
// (row-major n_concepts x n_concepts; empty means identity).
struct SyntheticConfig {
    std::size_t n_students = 100;
    std::size_t n_problems = 20;
    std::size_t n_lectures = 10;
    std::size_t n_concepts = 4;
    std::size_t steps_per_student = 50;
    double lecture_fraction = 0.3;
    double skill_mean = 0.0;
    double skill_std = 1.0;
    double difficulty_std = 1.0;
    double lecture_gain = 0.5;
    double practice_gain = 0.1;
    std::vector<double> transfer_ql;  // applied when the student moves Q -> L
    std::vector<double> transfer_lq;  // applied when the student moves L -> Q
    std::uint64_t seed = 0;

    void validate() const;  // throws ValidationError
};

Dataset generate_synthetic(const SyntheticConfig& config);

}  // namespace takt
