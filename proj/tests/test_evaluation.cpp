#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "stat_oracles.hpp"
#include "takt/evaluation.hpp"
#include "takt/rng.hpp"
#include "takt/training.hpp"

using namespace takt;
using takt::testing::auc_bruteforce;

TEST_CASE("auc basics") {
    CHECK(auc({0.9, 0.1}, {1, 0}) == doctest::Approx(1.0));
    CHECK(auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), DegenerateError);
    CHECK_THROWS_AS(auc({0.1, 0.2}, {0, 0}), DegenerateError);
    CHECK_THROWS_AS(auc({0.1}, {1, 0}), DimensionError);
    CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 2}), DomainError);
}

TEST_CASE("auc matches brute-force pair counting on 200 random points") {
    Rng rng(31);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
        // Coarse grid forces plenty of ties.
        scores.push_back(0.1 * static_cast<double>(rng.uniform_int(11)));
        labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
    }
    CHECK(std::abs(auc(scores, labels) - auc_bruteforce(scores, labels)) < 1e-12);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng r2(seed + 100);
        std::vector<double> s;
        std::vector<int> l;
        for (int i = 0; i < 60; ++i) {
            s.push_back(r2.normal(0.0, 1.0));
            l.push_back(r2.bernoulli(0.5) ? 1 : 0);
        }
        l[0] = 1;
        l[1] = 0;
        CHECK(std::abs(auc(s, l) - auc_bruteforce(s, l)) < 1e-12);
    }
}

TEST_CASE("auc is invariant under strictly monotone transforms") {
    Rng rng(8);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 100; ++i) {
        scores.push_back(rng.uniform());
        labels.push_back(i % 3 == 0 ? 1 : 0);
    }
    std::vector<double> warped;
    for (double s : scores) warped.push_back(std::exp(3.0 * s) - 7.0);
    CHECK(auc(scores, labels) == auc(warped, labels));
}

TEST_CASE("rmse basics and properties") {
    CHECK(rmse({0.2, 0.8}, {0.2, 0.8}) == doctest::Approx(0.0));
    CHECK(rmse({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(rmse({}, {}), DegenerateError);
    CHECK_THROWS_AS(rmse({0.1}, {0.1, 0.2}), DimensionError);

    Rng rng(77);
    std::vector<double> a, b;
    for (int i = 0; i < 50; ++i) {
        a.push_back(rng.uniform());
        b.push_back(rng.uniform());
    }
    double sq = 0.0;
    for (int i = 0; i < 50; ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(std::abs(rmse(a, b) - std::sqrt(sq / 50.0)) < 1e-12);
    CHECK(rmse(a, b) == rmse(b, a));  // symmetry
    CHECK(rmse(a, b) <= 1.0);         // bounded on [0,1] inputs
}

TEST_CASE("paired t-test matches a worked example to 1e-3") {
    // d = a - b = [8, 3, 1, 1, 5]; mean 3.6, sd 2.9665, t = 3.6/(2.9665/sqrt(5)).
    const std::vector<double> a = {83, 85, 79, 81, 84};
    const std::vector<double> b = {75, 82, 78, 80, 79};
    const TTestResult r = paired_t_test(a, b);
    CHECK(r.df == 4);
    CHECK(r.t == doctest::Approx(2.713602).epsilon(1e-4));
    CHECK(r.p == doctest::Approx(0.053338).epsilon(1e-3));
}

TEST_CASE("paired t-test detects a constant shift and rejects degenerate input") {
    Rng rng(5);
    std::vector<double> a, b;
    for (int i = 0; i < 5; ++i) {
        const double base = rng.uniform();
        b.push_back(base);
        a.push_back(base + 1.0 + 0.01 * rng.normal(0.0, 1.0));
    }
    CHECK(paired_t_test(a, b).p < 0.05);

    const std::vector<double> same = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(paired_t_test(same, same), DegenerateError);
    CHECK_THROWS_AS(paired_t_test({1.0}, {2.0}), DegenerateError);
    // Constant nonzero differences also have zero variance.
    CHECK_THROWS_AS(paired_t_test({2.0, 3.0, 4.0}, {1.0, 2.0, 3.0}), DegenerateError);
}

namespace {

Dataset signal_dataset(std::uint64_t seed, std::size_t students = 40) {
    SyntheticConfig cfg;
    cfg.n_students = students;
    cfg.n_problems = 8;
    cfg.n_lectures = 3;
    cfg.n_concepts = 3;
    cfg.steps_per_student = 30;
    cfg.skill_std = 3.0;  // strong student-ability signal
    cfg.difficulty_std = 1.0;
    cfg.seed = seed;
    return generate_synthetic(cfg);
}

Hyperparams fast_hyper() {
    Hyperparams h;
    h.problem_dim = 4;
    h.lecture_dim = 3;
    h.response_dim = 3;
    h.hidden_dim = 6;
    h.seq_len = 30;
    h.lambda = 0.0;
    h.learning_rate = 0.03;
    h.epochs = 8;
    h.batch_size = 16;
    return h;
}

}  // namespace

TEST_CASE("evaluate counts emissions and honors the cold-start flag") {
    const Dataset ds = signal_dataset(3, 6);
    Hyperparams h = fast_hyper();
    const ModelParams p = init_params(h, ds.problem_count(), ds.lecture_count(), 1);
    const auto students = ds.student_ids();
    const EvalResult all = evaluate(p, ds, students, h, false);
    const EvalResult warm = evaluate(p, ds, students, h, true);

    std::size_t expected = 0, cold = 0;
    for (const auto& seq : ds.sequences) {
        for (const auto& chunk : pad_truncate(seq, h.seq_len)) {
            bool first_real = true;
            for (const auto& a : chunk.activities) {
                if (a.padding) continue;
                if (a.type == 0) {
                    ++expected;
                    if (first_real) ++cold;
                }
                first_real = false;
            }
        }
    }
    CHECK(all.n_predictions == expected);
    CHECK(warm.n_predictions == expected - cold);
}

TEST_CASE("cross_validate learns above chance on a signal dataset") {
    const Dataset ds = signal_dataset(17);
    const Hyperparams h = fast_hyper();
    const CrossValResult cv = cross_validate(ds, h, 5, 9);

    double mean = 0.0, sd = 0.0;
    for (const auto& s : cv.summary) {
        if (s.metric == "auc") {
            mean = s.mean;
            sd = s.stddev;
        }
    }
    CHECK(mean > 0.5 + 3.0 * sd);

    // Deterministic repeat.
    const CrossValResult again = cross_validate(ds, h, 5, 9);
    REQUIRE(cv.folds.size() == again.folds.size());
    for (std::size_t i = 0; i < cv.folds.size(); ++i) {
        CHECK(cv.folds[i].value == again.folds[i].value);
    }
}

TEST_CASE("cross_validate is near chance on label-shuffled data") {
    Dataset ds = signal_dataset(23);
    // Shuffle responses across all assessed activities, breaking the signal.
    std::vector<double> responses;
    for (auto& seq : ds.sequences) {
        for (auto& a : seq.activities) {
            if (a.response) responses.push_back(*a.response);
        }
    }
    Rng rng(99);
    rng.shuffle(responses);
    std::size_t k = 0;
    for (auto& seq : ds.sequences) {
        for (auto& a : seq.activities) {
            if (a.response) a.response = responses[k++];
        }
    }
    const CrossValResult cv = cross_validate(ds, fast_hyper(), 5, 9);
    for (const auto& s : cv.summary) {
        if (s.metric == "auc") CHECK(s.mean == doctest::Approx(0.5).epsilon(0.1));
    }
}

TEST_CASE("cross_validate never evaluates a student it trained on") {
    const Dataset ds = signal_dataset(29, 15);
    const auto folds = stratified_folds(ds, 5, 13);
    std::set<std::string> all;
    for (const auto& f : folds) {
        std::set<std::string> train(f.train_students.begin(), f.train_students.end());
        for (const auto& s : f.test_students) {
            CHECK(train.count(s) == 0);
            all.insert(s);
        }
        CHECK(f.train_students.size() + f.test_students.size() == ds.student_count());
    }
    CHECK(all.size() == ds.student_count());
}

TEST_CASE("metrics report is machine-parseable with summary rows") {
    CrossValResult cv;
    cv.folds = {{0, "auc", 0.75, 100}, {1, "auc", 0.7, 90}};
    cv.summary = {{"auc", 0.725, 0.035}};
    const std::string text = format_metrics_report(cv);
    CHECK(text.find("fold,metric,value,n_predictions\n") == 0);
    CHECK(text.find("0,auc,0.75,100\n") != std::string::npos);
    CHECK(text.find("mean,auc,0.725,\n") != std::string::npos);
    CHECK(text.find("std,auc,0.035,\n") != std::string::npos);
}
