#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "takt/data.hpp"
#include "takt/tensor.hpp"

namespace takt {

// Transition between consecutive material types. Q = assessed (type 0),
// L = non-assessed (type 1); the first letter is the previous step's type.
enum class Transition { QQ = 0, QL = 1, LQ = 2, LL = 3 };

enum class GateKind { Input = 0, Candidate = 1, Forget = 2, Output = 3 };

const char* transition_name(Transition t);
const char* gate_name(GateKind g);
std::optional<Transition> transition_from_name(const std::string& name);
std::optional<GateKind> gate_from_name(const std::string& name);

struct Hyperparams {
    std::size_t problem_dim = 8;    // latent size of assessed materials
    std::size_t lecture_dim = 8;    // latent size of non-assessed materials
    std::size_t response_dim = 8;   // latent size of the response embedding
    std::size_t hidden_dim = 8;     // knowledge-state size
    std::size_t seq_len = 50;       // fixed length sequences are padded/truncated to
    double lambda = 0.01;           // L2 regularization weight
    ResponseMode response_mode = ResponseMode::Binary;
    double learning_rate = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double clip_norm = 5.0;
    std::uint64_t seed = 0;
    bool tied_transfer = false;     // ablation: one shared transfer matrix per gate

    void validate() const;  // throws ValidationError
};

// One gate's parameters. proj_q maps an assessed activity embedding
// (problem_dim + response_dim), proj_l a lecture embedding (lecture_dim);
// transfer[t] is the hidden-to-gate map active for transition t. Under the
// tied ablation all four transfer entries alias one tensor.
struct GateParams {
    Tensor proj_q;
    Tensor proj_l;
    std::array<Tensor, 4> transfer;
    Tensor bias;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct ModelParams {
    std::size_t problem_count = 0;
    std::size_t lecture_count = 0;
    ResponseMode mode = ResponseMode::Binary;
    bool tied_transfer = false;

    Tensor problem_emb;   // [Q x problem_dim]
    Tensor lecture_emb;   // [L x lecture_dim]
    Tensor response_emb;  // binary: [2 x response_dim]; numeric: [response_dim]
    std::array<GateParams, 4> gates;  // input, candidate, forget, output
    Tensor predict_weight;  // [hidden_dim + problem_dim]
    Tensor predict_bias;    // scalar

    // Unique learnable tensors in a fixed order (aliases under the tied
    // ablation appear once).
    std::vector<NamedTensor> named_parameters() const;
    std::vector<Tensor> parameters() const;

    void zero_grad();
    ModelParams clone() const;  // deep copy
    double squared_norm() const;
};

// Indicator set for the four transition permutations; exactly one is 1.
struct TransitionIndicators {
    int qq = 0, ql = 0, lq = 0, ll = 0;
};

// d_prev/d_curr are material-type flags (0 assessed, 1 non-assessed).
TransitionIndicators transition_indicators(int d_prev, int d_curr);
Transition active_transition(int d_prev, int d_curr);

struct CellState {
    Tensor h;  // hidden knowledge state, [hidden_dim]
    Tensor m;  // memory cell, [hidden_dim]
};

CellState initial_state(std::size_t hidden_dim);

// Embedding of one activity: assessed -> [problem_dim + response_dim]
// (problem row concatenated with the response embedding), non-assessed ->
// [lecture_dim] (lecture row).
Tensor embed_activity(Tape& tape, const Activity& activity, const ModelParams& params,
                      ResponseMode mode);

// One recurrent update. The gate preactivations use the current-type input
// projection and the single transfer matrix selected by (d_prev, d_curr);
// the inactive transfer matrices do not enter the graph (their indicator
// coefficient is zero, so neither values nor gradients are affected).
CellState cell_step(Tape& tape, const Tensor& x, int d_prev, int d_curr,
                    const CellState& state, const ModelParams& params);

// P(next response correct) = sigmoid(w . [h ++ problem_emb[q]] + b).
Tensor predict(Tape& tape, const Tensor& h, std::size_t q_next_id, const ModelParams& params);

// Per-step outputs of one sequence pass. All vectors have length seq_len and
// are aligned by step: mask[t] marks the emission points (assessed,
// non-padding steps), predictions[t] is defined exactly there, and
// cold_start[t] flags emissions computed from the zero initial state.
struct ForwardResult {
    std::vector<Tensor> predictions;
    std::vector<double> targets;
    std::vector<std::uint8_t> mask;
    std::vector<std::uint8_t> cold_start;

    std::size_t emission_count() const;
};

ForwardResult forward_sequence(Tape& tape, const StudentSequence& seq,
                               const ModelParams& params, const Hyperparams& hyper);

// Regularized binary cross-entropy over the masked entries:
//   -sum_masked [r log p + (1-r) log(1-p)] + lambda * ||theta||^2.
// Predictions are clamped to [1e-12, 1 - 1e-12] before the logs.
Tensor loss(Tape& tape, const std::vector<Tensor>& predictions,
            const std::vector<double>& targets, const std::vector<std::uint8_t>& mask,
            const ModelParams& params, double lambda);

constexpr double kProbClamp = 1e-12;

}  // namespace takt
