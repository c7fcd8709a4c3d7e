#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "lstm_oracle.hpp"
#include "takt/model.hpp"
#include "takt/rng.hpp"
#include "takt/training.hpp"

using namespace takt;
using takt::testing::finite_difference;
using takt::testing::norm_rel_error;

namespace {

Hyperparams small_hyper(std::size_t seq_len = 6) {
    Hyperparams h;
    h.problem_dim = 3;
    h.lecture_dim = 2;
    h.response_dim = 2;
    h.hidden_dim = 4;
    h.seq_len = seq_len;
    h.lambda = 0.01;
    return h;
}

Activity problem(std::size_t id, double r, std::int64_t t) {
    Activity a;
    a.type = 0;
    a.material = id;
    a.response = r;
    a.time_index = t;
    a.ordinal = t;
    return a;
}

Activity lecture(std::size_t id, std::int64_t t) {
    Activity a;
    a.type = 1;
    a.material = id;
    a.time_index = t;
    a.ordinal = t;
    return a;
}

}  // namespace

TEST_CASE("transition indicators select exactly one permutation") {
    const TransitionIndicators ql = transition_indicators(0, 1);
    CHECK(ql.ql == 1);
    CHECK(ql.qq + ql.lq + ql.ll == 0);

    const TransitionIndicators qq = transition_indicators(0, 0);
    CHECK(qq.qq == 1);

    for (int dp : {0, 1}) {
        for (int dc : {0, 1}) {
            const TransitionIndicators s = transition_indicators(dp, dc);
            CHECK(s.qq + s.ql + s.lq + s.ll == 1);
        }
    }
    CHECK(active_transition(1, 0) == Transition::LQ);
    CHECK(active_transition(1, 1) == Transition::LL);
    CHECK_THROWS_AS(transition_indicators(2, 0), DomainError);
    CHECK_THROWS_AS(transition_indicators(0, -1), DomainError);
}

TEST_CASE("embed_activity: binary lookup and numeric linear mapping") {
    const Hyperparams hyper = small_hyper();
    ModelParams params = init_params(hyper, 4, 3, 11);
    Tape tape;

    Tensor x = embed_activity(tape, problem(2, 0.0, 0), params, ResponseMode::Binary);
    CHECK(x.size() == hyper.problem_dim + hyper.response_dim);
    for (std::size_t j = 0; j < hyper.response_dim; ++j) {
        CHECK(x.at(hyper.problem_dim + j) == params.response_emb.at(0, j));
    }

    Tensor lec = embed_activity(tape, lecture(1, 0), params, ResponseMode::Binary);
    CHECK(lec.size() == hyper.lecture_dim);

    Hyperparams numeric_hyper = hyper;
    numeric_hyper.response_mode = ResponseMode::Numeric;
    ModelParams nparams = init_params(numeric_hyper, 4, 3, 11);
    Tensor zero_tail = embed_activity(tape, problem(0, 0.0, 0), nparams, ResponseMode::Numeric);
    for (std::size_t j = 0; j < numeric_hyper.response_dim; ++j) {
        CHECK(zero_tail.at(numeric_hyper.problem_dim + j) == 0.0);
    }
    Tensor half = embed_activity(tape, problem(0, 0.5, 0), nparams, ResponseMode::Numeric);
    Tensor full = embed_activity(tape, problem(0, 1.0, 0), nparams, ResponseMode::Numeric);
    for (std::size_t j = 0; j < numeric_hyper.response_dim; ++j) {
        CHECK(full.at(numeric_hyper.problem_dim + j) ==
              doctest::Approx(2.0 * half.at(numeric_hyper.problem_dim + j)));
    }

    CHECK_THROWS_AS(embed_activity(tape, problem(99, 1.0, 0), params, ResponseMode::Binary),
                    IndexError);
    CHECK_THROWS_AS(embed_activity(tape, lecture(99, 0), params, ResponseMode::Binary),
                    IndexError);
    CHECK_THROWS_AS(embed_activity(tape, problem(0, 1.5, 0), nparams, ResponseMode::Numeric),
                    DomainError);
    CHECK_THROWS_AS(embed_activity(tape, problem(0, 0.5, 0), params, ResponseMode::Binary),
                    DomainError);
}

TEST_CASE("zero state makes the first step invariant to d_prev") {
    const Hyperparams hyper = small_hyper();
    ModelParams params = init_params(hyper, 4, 3, 5);
    Tape tape;
    CellState zero = initial_state(hyper.hidden_dim);

    Tensor xq = embed_activity(tape, problem(1, 1.0, 0), params, ResponseMode::Binary);
    const CellState a = cell_step(tape, xq, 0, 0, zero, params);
    const CellState b = cell_step(tape, xq, 1, 0, zero, params);
    CHECK(a.h.values() == b.h.values());
    CHECK(a.m.values() == b.m.values());

    Tensor xl = embed_activity(tape, lecture(0, 0), params, ResponseMode::Binary);
    const CellState c = cell_step(tape, xl, 0, 1, zero, params);
    const CellState d = cell_step(tape, xl, 1, 1, zero, params);
    CHECK(c.h.values() == d.h.values());
    CHECK(c.m.values() == d.m.values());
}

TEST_CASE("gate ranges hold on random steps") {
    const Hyperparams hyper = small_hyper();
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        ModelParams params = init_params(hyper, 4, 3, 100 + trial);
        Tape tape;
        CellState state = initial_state(hyper.hidden_dim);
        int d_prev = 0;
        for (int step = 0; step < 8; ++step) {
            const int d_curr = rng.bernoulli(0.5) ? 1 : 0;
            Activity act = d_curr == 0
                ? problem(rng.uniform_int(4), rng.bernoulli(0.5) ? 1.0 : 0.0, step)
                : lecture(rng.uniform_int(3), step);
            Tensor x = embed_activity(tape, act, params, ResponseMode::Binary);
            state = cell_step(tape, x, step == 0 ? d_curr : d_prev, d_curr, state, params);
            for (double v : state.h.values()) {
                CHECK(v > -1.0);
                CHECK(v < 1.0);
            }
            d_prev = d_curr;
        }
    }
}

TEST_CASE("only the active transfer matrix influences a step") {
    const Hyperparams hyper = small_hyper();
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        ModelParams params = init_params(hyper, 4, 3, 400 + trial);
        CellState state = initial_state(hyper.hidden_dim);
        for (double& v : state.h.values_mut()) v = rng.normal(0.0, 0.5);
        for (double& v : state.m.values_mut()) v = rng.normal(0.0, 0.5);

        const int d_prev = rng.bernoulli(0.5) ? 1 : 0;
        const int d_curr = rng.bernoulli(0.5) ? 1 : 0;
        const Transition active = active_transition(d_prev, d_curr);
        Activity act = d_curr == 0 ? problem(1, 1.0, 0) : lecture(1, 0);

        auto run = [&](const ModelParams& p) {
            Tape tape(false);
            Tensor x = embed_activity(tape, act, p, ResponseMode::Binary);
            return cell_step(tape, x, d_prev, d_curr, state, p).h.values();
        };
        const auto baseline = run(params);

        ModelParams zeroed_inactive = params.clone();
        for (auto& gate : zeroed_inactive.gates) {
            for (std::size_t t = 0; t < 4; ++t) {
                if (static_cast<Transition>(t) == active) continue;
                for (double& v : gate.transfer[t].values_mut()) v = 0.0;
            }
        }
        CHECK(run(zeroed_inactive) == baseline);  // bit-identical

        ModelParams zeroed_active = params.clone();
        for (auto& gate : zeroed_active.gates) {
            for (double& v : gate.transfer[static_cast<std::size_t>(active)].values_mut()) {
                v = 0.0;
            }
        }
        CHECK(run(zeroed_active) != baseline);
    }
}

TEST_CASE("tied transfer matrices reduce the cell to a plain LSTM") {
    Hyperparams hyper = small_hyper();
    ModelParams params = init_params(hyper, 4, 3, 21);
    // Tie all four transfer matrices per gate.
    for (auto& gate : params.gates) {
        for (std::size_t t = 1; t < 4; ++t) {
            gate.transfer[t].values_mut() = gate.transfer[0].values();
        }
    }

    std::array<Tensor, 4> input_map, recurrent, bias;
    for (std::size_t g = 0; g < 4; ++g) {
        input_map[g] = params.gates[g].proj_q;
        recurrent[g] = params.gates[g].transfer[0];
        bias[g] = params.gates[g].bias;
    }

    Rng rng(8);
    testing::PlainState oracle = testing::plain_zero_state(hyper.hidden_dim);
    CellState state = initial_state(hyper.hidden_dim);
    Tape tape(false);
    for (int step = 0; step < 10; ++step) {
        Activity act = problem(rng.uniform_int(4), rng.bernoulli(0.5) ? 1.0 : 0.0, step);
        Tensor x = embed_activity(tape, act, params, ResponseMode::Binary);
        state = cell_step(tape, x, 0, 0, state, params);
        oracle = testing::plain_lstm_step(x.values(), input_map, recurrent, bias, oracle);
        for (std::size_t j = 0; j < hyper.hidden_dim; ++j) {
            CHECK(std::abs(state.h.at(j) - oracle.h[j]) < 1e-12);
            CHECK(std::abs(state.m.at(j) - oracle.m[j]) < 1e-12);
        }
    }
}

TEST_CASE("tied-ablation params behave like four equal matrices") {
    Hyperparams hyper = small_hyper();
    hyper.tied_transfer = true;
    ModelParams tied = init_params(hyper, 4, 3, 33);

    Hyperparams full_hyper = small_hyper();
    ModelParams full = init_params(full_hyper, 4, 3, 999);
    // Copy the tied model's unique tensors into the untied layout.
    full.problem_emb.values_mut() = tied.problem_emb.values();
    full.lecture_emb.values_mut() = tied.lecture_emb.values();
    full.response_emb.values_mut() = tied.response_emb.values();
    for (std::size_t g = 0; g < 4; ++g) {
        full.gates[g].proj_q.values_mut() = tied.gates[g].proj_q.values();
        full.gates[g].proj_l.values_mut() = tied.gates[g].proj_l.values();
        full.gates[g].bias.values_mut() = tied.gates[g].bias.values();
        for (std::size_t t = 0; t < 4; ++t) {
            full.gates[g].transfer[t].values_mut() = tied.gates[g].transfer[0].values();
        }
    }
    full.predict_weight.values_mut() = tied.predict_weight.values();
    full.predict_bias.values_mut() = tied.predict_bias.values();

    // The tied model lists each shared matrix once.
    CHECK(tied.named_parameters().size() == full.named_parameters().size() - 12);

    StudentSequence seq{"s", {problem(0, 1.0, 0), lecture(1, 1), problem(2, 0.0, 2),
                              lecture(0, 3), lecture(2, 4), problem(1, 1.0, 5)}};
    Tape t1(false), t2(false);
    const ForwardResult a = forward_sequence(t1, seq, tied, hyper);
    const ForwardResult b = forward_sequence(t2, seq, full, full_hyper);
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
        CHECK(a.mask[i] == b.mask[i]);
        if (a.mask[i]) CHECK(a.predictions[i].value() == doctest::Approx(b.predictions[i].value()));
    }
}

TEST_CASE("predict matches the closed form") {
    const Hyperparams hyper = small_hyper();
    ModelParams params = init_params(hyper, 4, 3, 77);
    Tape tape;
    Tensor h = Tensor::zeros({hyper.hidden_dim});

    for (double& v : params.predict_weight.values_mut()) v = 0.0;
    params.predict_bias.values_mut()[0] = 0.0;
    CHECK(predict(tape, h, 0, params).value() == doctest::Approx(0.5));

    params.predict_bias.values_mut()[0] = 40.0;
    CHECK(std::abs(predict(tape, h, 0, params).value() - 1.0) < 1e-12);

    // Random case against a hand-rolled dot-product-and-sigmoid oracle.
    Rng rng(5);
    ModelParams rparams = init_params(hyper, 4, 3, 55);
    Tensor hr = Tensor::zeros({hyper.hidden_dim});
    for (double& v : hr.values_mut()) v = rng.normal(0.0, 1.0);
    const std::size_t q = 3;
    std::vector<double> q_row(hyper.problem_dim);
    for (std::size_t j = 0; j < hyper.problem_dim; ++j) q_row[j] = rparams.problem_emb.at(q, j);
    const double expect = testing::plain_predict(hr.values(), q_row, rparams.predict_weight,
                                                 rparams.predict_bias.value());
    CHECK(std::abs(predict(tape, hr, q, rparams).value() - expect) < 1e-12);

    CHECK_THROWS_AS(predict(tape, h, 9, params), IndexError);
}

TEST_CASE("forward_sequence edge cases") {
    const Hyperparams hyper = small_hyper(4);
    ModelParams params = init_params(hyper, 4, 3, 2);

    StudentSequence padded{"s", {}};
    for (int t = 0; t < 4; ++t) {
        Activity a;
        a.padding = true;
        padded.activities.push_back(a);
    }
    Tape tape;
    const ForwardResult none = forward_sequence(tape, padded, params, hyper);
    CHECK(none.emission_count() == 0);
    for (auto m : none.mask) CHECK(m == 0);

    StudentSequence lectures{"s", {lecture(0, 0), lecture(1, 1), lecture(2, 2), lecture(0, 3)}};
    const ForwardResult quiet = forward_sequence(tape, lectures, params, hyper);
    CHECK(quiet.emission_count() == 0);

    StudentSequence wrong_len{"s", {lecture(0, 0)}};
    CHECK_THROWS_AS(forward_sequence(tape, wrong_len, params, hyper), ValidationError);
}

TEST_CASE("forward_sequence Q,L,Q emits two predictions matching a manual trace") {
    Hyperparams hyper = small_hyper(3);
    ModelParams params = init_params(hyper, 4, 3, 13);
    StudentSequence seq{"s", {problem(1, 1.0, 0), lecture(0, 1), problem(0, 0.0, 2)}};

    Tape tape;
    const ForwardResult out = forward_sequence(tape, seq, params, hyper);
    CHECK(out.emission_count() == 2);
    CHECK(out.mask == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(out.cold_start == std::vector<std::uint8_t>{1, 0, 0});
    CHECK(out.targets[0] == 1.0);
    CHECK(out.targets[2] == 0.0);

    // Manual step-by-step trace with the plain reference cell.
    auto gate_tensors = [&](auto pick_input, auto pick_recurrent) {
        std::array<Tensor, 4> input_map, recurrent, bias;
        for (std::size_t g = 0; g < 4; ++g) {
            input_map[g] = pick_input(params.gates[g]);
            recurrent[g] = pick_recurrent(params.gates[g]);
            bias[g] = params.gates[g].bias;
        }
        return std::make_tuple(input_map, recurrent, bias);
    };

    std::vector<double> q1_row(hyper.problem_dim), q0_row(hyper.problem_dim);
    for (std::size_t j = 0; j < hyper.problem_dim; ++j) {
        q1_row[j] = params.problem_emb.at(1, j);
        q0_row[j] = params.problem_emb.at(0, j);
    }
    // Step 1: assessed, cold-start prediction from h_0 = 0.
    testing::PlainState st = testing::plain_zero_state(hyper.hidden_dim);
    const double p1 = testing::plain_predict(st.h, q1_row, params.predict_weight,
                                             params.predict_bias.value());
    CHECK(std::abs(out.predictions[0].value() - p1) < 1e-12);

    std::vector<double> x1 = q1_row;
    for (std::size_t j = 0; j < hyper.response_dim; ++j) x1.push_back(params.response_emb.at(1, j));
    {
        auto [im, rec, b] = gate_tensors([](const GateParams& g) { return g.proj_q; },
                                         [](const GateParams& g) { return g.transfer[0]; });  // QQ
        st = testing::plain_lstm_step(x1, im, rec, b, st);
    }
    // Step 2: lecture, previous type Q -> transition QL.
    std::vector<double> x2(hyper.lecture_dim);
    for (std::size_t j = 0; j < hyper.lecture_dim; ++j) x2[j] = params.lecture_emb.at(0, j);
    {
        auto [im, rec, b] = gate_tensors([](const GateParams& g) { return g.proj_l; },
                                         [](const GateParams& g) { return g.transfer[1]; });  // QL
        st = testing::plain_lstm_step(x2, im, rec, b, st);
    }
    // Step 3: assessed after a lecture -> prediction from h after L, transition LQ.
    const double p3 = testing::plain_predict(st.h, q0_row, params.predict_weight,
                                             params.predict_bias.value());
    CHECK(std::abs(out.predictions[2].value() - p3) < 1e-12);
}

TEST_CASE("loss closed forms") {
    const Hyperparams hyper = small_hyper();
    ModelParams params = init_params(hyper, 4, 3, 3);

    {
        // p == target with lambda = 0 -> zero within clamp tolerance.
        Tape tape;
        Tensor leaf = Tensor::scalar(0.0, true);
        std::vector<Tensor> preds = {add(tape, leaf, 1.0), add(tape, leaf, 0.0)};
        std::vector<double> targets = {1.0, 0.0};
        std::vector<std::uint8_t> mask = {1, 1};
        CHECK(std::abs(loss(tape, preds, targets, mask, params, 0.0).value()) < 1e-10);
    }
    {
        // Single entry p = 0.5, r = 1 -> ln 2.
        Tape tape;
        Tensor leaf = Tensor::scalar(0.0, true);
        std::vector<Tensor> preds = {add(tape, leaf, 0.5)};
        CHECK(loss(tape, preds, {1.0}, {1}, params, 0.0).value() ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    {
        // lambda > 0 with no data term -> lambda * sum of squared parameters.
        Tape tape;
        const double lambda = 0.37;
        const double expect = lambda * params.squared_norm();
        CHECK(loss(tape, {}, {}, {}, params, lambda).value() == doctest::Approx(expect));
    }
    {
        // Masked-out entries contribute nothing, in any permutation.
        Tape tape;
        Tensor leaf = Tensor::scalar(0.0, true);
        std::vector<Tensor> preds = {add(tape, leaf, 0.3), add(tape, leaf, 0.9),
                                     add(tape, leaf, 0.2)};
        const double a = loss(tape, preds, {1, 1, 0}, {1, 0, 1}, params, 0.0).value();
        Tape tape2;
        Tensor leaf2 = Tensor::scalar(0.0, true);
        std::vector<Tensor> preds2 = {add(tape2, leaf2, 0.3), add(tape2, leaf2, 0.1),
                                      add(tape2, leaf2, 0.2)};
        const double b = loss(tape2, preds2, {1, 0.6, 0}, {1, 0, 1}, params, 0.0).value();
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
    {
        // p numerically 1 with target 0 stays finite through the clamp.
        Tape tape;
        Tensor leaf = Tensor::scalar(0.0, true);
        std::vector<Tensor> preds = {add(tape, leaf, 1.0)};
        const double v = loss(tape, preds, {0.0}, {1}, params, 0.0).value();
        CHECK(std::isfinite(v));
        CHECK(v == doctest::Approx(-std::log(kProbClamp)));
    }
}

namespace {

StudentSequence mixed_sequence() {
    // Covers all four transitions: QQ, QL, LL, LQ.
    return StudentSequence{"s", {problem(0, 1.0, 0), problem(1, 0.0, 1), lecture(0, 2),
                                 lecture(1, 3), problem(2, 1.0, 4), lecture(2, 5)}};
}

double model_loss_value(const ModelParams& params, const Hyperparams& hyper,
                        const StudentSequence& seq) {
    Tape tape;
    const ForwardResult out = forward_sequence(tape, seq, params, hyper);
    return loss(tape, out.predictions, out.targets, out.mask, params, hyper.lambda).value();
}

}  // namespace

TEST_CASE("full-model gradients match finite differences on a mixed sequence") {
    const Hyperparams hyper = small_hyper(6);
    ModelParams params = init_params(hyper, 4, 3, 1234);
    const StudentSequence seq = mixed_sequence();

    Tape tape;
    const ForwardResult out = forward_sequence(tape, seq, params, hyper);
    Tensor l = loss(tape, out.predictions, out.targets, out.mask, params, hyper.lambda);
    params.zero_grad();
    tape.backward(l);

    auto forward = [&] { return model_loss_value(params, hyper, seq); };
    for (const auto& nt : params.named_parameters()) {
        const auto fd = finite_difference(forward, nt.tensor);
        const double err = norm_rel_error(nt.tensor.grad(), fd);
        INFO("parameter ", nt.name);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("loss decreases under a small gradient step on 100 random configs") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Hyperparams hyper = small_hyper(6);
        hyper.lambda = seed % 2 == 0 ? 0.0 : 0.01;
        ModelParams params = init_params(hyper, 4, 3, seed);
        const StudentSequence seq = mixed_sequence();

        Tape tape;
        const ForwardResult out = forward_sequence(tape, seq, params, hyper);
        Tensor l = loss(tape, out.predictions, out.targets, out.mask, params, hyper.lambda);
        const double before = l.value();
        params.zero_grad();
        tape.backward(l);

        const double eta = 1e-5;
        for (auto& t : params.parameters()) {
            auto& v = t.values_mut();
            const auto& g = t.grad();
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= eta * g[i];
        }
        const double after = model_loss_value(params, hyper, seq);
        CHECK(after < before);
    }
}
