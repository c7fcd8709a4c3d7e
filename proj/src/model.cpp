#include "takt/model.hpp"

#include <cmath>
#include <unordered_set>

namespace takt {

const char* transition_name(Transition t) {
    switch (t) {
        case Transition::QQ: return "QQ";
        case Transition::QL: return "QL";
        case Transition::LQ: return "LQ";
        case Transition::LL: return "LL";
    }
    return "?";
}

const char* gate_name(GateKind g) {
    switch (g) {
        case GateKind::Input: return "input";
        case GateKind::Candidate: return "candidate";
        case GateKind::Forget: return "forget";
        case GateKind::Output: return "output";
    }
    return "?";
}

std::optional<Transition> transition_from_name(const std::string& name) {
    if (name == "QQ") return Transition::QQ;
    if (name == "QL") return Transition::QL;
    if (name == "LQ") return Transition::LQ;
    if (name == "LL") return Transition::LL;
    return std::nullopt;
}

std::optional<GateKind> gate_from_name(const std::string& name) {
    if (name == "input" || name == "i") return GateKind::Input;
    if (name == "candidate" || name == "g") return GateKind::Candidate;
    if (name == "forget" || name == "f") return GateKind::Forget;
    if (name == "output" || name == "o") return GateKind::Output;
    return std::nullopt;
}

void Hyperparams::validate() const {
    if (problem_dim < 1 || lecture_dim < 1 || response_dim < 1 || hidden_dim < 1) {
        throw ValidationError("hyperparams: all latent dimensions must be >= 1");
    }
    if (seq_len < 1) throw ValidationError("hyperparams: seq_len must be >= 1");
    if (lambda < 0.0) throw ValidationError("hyperparams: lambda must be >= 0");
    if (learning_rate <= 0.0) throw ValidationError("hyperparams: learning_rate must be > 0");
    if (epochs < 1) throw ValidationError("hyperparams: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("hyperparams: batch_size must be >= 1");
    if (clip_norm <= 0.0) throw ValidationError("hyperparams: clip_norm must be > 0");
}

std::vector<NamedTensor> ModelParams::named_parameters() const {
    std::vector<NamedTensor> out;
    out.push_back({"problem_emb", problem_emb});
    out.push_back({"lecture_emb", lecture_emb});
    out.push_back({"response_emb", response_emb});
    static const char* kTransitionKey[4] = {"transfer_qq", "transfer_ql", "transfer_lq",
                                            "transfer_ll"};
    for (int g = 0; g < 4; ++g) {
        const std::string prefix = gate_name(static_cast<GateKind>(g));
        const GateParams& gp = gates[static_cast<std::size_t>(g)];
        out.push_back({prefix + ".proj_q", gp.proj_q});
        out.push_back({prefix + ".proj_l", gp.proj_l});
        if (tied_transfer) {
            out.push_back({prefix + ".transfer", gp.transfer[0]});
        } else {
            for (int t = 0; t < 4; ++t) {
                out.push_back({prefix + "." + kTransitionKey[t],
                               gp.transfer[static_cast<std::size_t>(t)]});
            }
        }
        out.push_back({prefix + ".bias", gp.bias});
    }
    out.push_back({"predict.weight", predict_weight});
    out.push_back({"predict.bias", predict_bias});
    return out;
}

std::vector<Tensor> ModelParams::parameters() const {
    std::vector<Tensor> out;
    for (auto& nt : named_parameters()) out.push_back(nt.tensor);
    return out;
}

void ModelParams::zero_grad() {
    for (auto& t : parameters()) t.zero_grad();
}

ModelParams ModelParams::clone() const {
    ModelParams c;
    c.problem_count = problem_count;
    c.lecture_count = lecture_count;
    c.mode = mode;
    c.tied_transfer = tied_transfer;
    c.problem_emb = problem_emb.clone();
    c.lecture_emb = lecture_emb.clone();
    c.response_emb = response_emb.clone();
    for (std::size_t g = 0; g < 4; ++g) {
        c.gates[g].proj_q = gates[g].proj_q.clone();
        c.gates[g].proj_l = gates[g].proj_l.clone();
        c.gates[g].bias = gates[g].bias.clone();
        if (tied_transfer) {
            Tensor shared = gates[g].transfer[0].clone();
            for (auto& t : c.gates[g].transfer) t = shared;
        } else {
            for (std::size_t t = 0; t < 4; ++t) c.gates[g].transfer[t] = gates[g].transfer[t].clone();
        }
    }
    c.predict_weight = predict_weight.clone();
    c.predict_bias = predict_bias.clone();
    return c;
}

double ModelParams::squared_norm() const {
    double s = 0.0;
    for (const auto& t : parameters()) {
        for (double v : t.values()) s += v * v;
    }
    return s;
}

TransitionIndicators transition_indicators(int d_prev, int d_curr) {
    if ((d_prev != 0 && d_prev != 1) || (d_curr != 0 && d_curr != 1)) {
        throw DomainError("transition_indicators: type flags must be 0 or 1, got (" +
                          std::to_string(d_prev) + ", " + std::to_string(d_curr) + ")");
    }
    TransitionIndicators s;
    s.qq = (1 - d_curr) * (1 - d_prev);
    s.ql = d_curr * (1 - d_prev);
    s.lq = (1 - d_curr) * d_prev;
    s.ll = d_curr * d_prev;
    return s;
}

Transition active_transition(int d_prev, int d_curr) {
    const TransitionIndicators s = transition_indicators(d_prev, d_curr);
    if (s.qq) return Transition::QQ;
    if (s.ql) return Transition::QL;
    if (s.lq) return Transition::LQ;
    return Transition::LL;
}

CellState initial_state(std::size_t hidden_dim) {
    return CellState{Tensor::zeros({hidden_dim}), Tensor::zeros({hidden_dim})};
}

Tensor embed_activity(Tape& tape, const Activity& activity, const ModelParams& params,
                      ResponseMode mode) {
    if (activity.type != 0 && activity.type != 1) {
        throw ValidationError("activity type must be 0 or 1, got " +
                              std::to_string(activity.type));
    }
    if (activity.type == 1) {
        if (activity.material >= params.lecture_count) {
            throw IndexError("lecture id " + std::to_string(activity.material) +
                             " out of range for vocabulary of " +
                             std::to_string(params.lecture_count));
        }
        return gather_rows(tape, params.lecture_emb, activity.material);
    }
    if (activity.material >= params.problem_count) {
        throw IndexError("problem id " + std::to_string(activity.material) +
                         " out of range for vocabulary of " +
                         std::to_string(params.problem_count));
    }
    if (!activity.response.has_value()) {
        throw ValidationError("assessed activity is missing a response");
    }
    const double r = *activity.response;
    Tensor problem = gather_rows(tape, params.problem_emb, activity.material);
    Tensor response;
    if (mode == ResponseMode::Binary) {
        if (r != 0.0 && r != 1.0) {
            throw DomainError("binary response must be 0 or 1, got " + std::to_string(r));
        }
        response = gather_rows(tape, params.response_emb, static_cast<std::size_t>(r));
    } else {
        if (r < 0.0 || r > 1.0) {
            throw DomainError("numeric response must lie in [0,1], got " + std::to_string(r));
        }
        response = scale(tape, params.response_emb, r);
    }
    return concat(tape, problem, response);
}

CellState cell_step(Tape& tape, const Tensor& x, int d_prev, int d_curr,
                    const CellState& state, const ModelParams& params) {
    const Transition tr = active_transition(d_prev, d_curr);
    const std::size_t expected = d_curr == 0
        ? params.gates[0].proj_q.rows()
        : params.gates[0].proj_l.rows();
    if (x.rank() != 1 || x.size() != expected) {
        throw DimensionError("cell_step: activity embedding " + x.shape_str() +
                             " does not match expected length " + std::to_string(expected) +
                             " for type " + std::to_string(d_curr));
    }

    std::array<Tensor, 4> pre;
    for (std::size_t g = 0; g < 4; ++g) {
        const GateParams& gp = params.gates[g];
        const Tensor& proj = d_curr == 0 ? gp.proj_q : gp.proj_l;
        Tensor a = vecmat(tape, x, proj);
        a = add(tape, a, vecmat(tape, state.h, gp.transfer[static_cast<std::size_t>(tr)]));
        pre[g] = add(tape, a, gp.bias);
    }

    Tensor in_gate = sigmoid(tape, pre[0]);
    Tensor cand = tanh(tape, pre[1]);
    Tensor forget = sigmoid(tape, pre[2]);
    Tensor out_gate = sigmoid(tape, pre[3]);

    Tensor m = add(tape, hadamard(tape, forget, state.m), hadamard(tape, in_gate, cand));
    Tensor h = hadamard(tape, out_gate, tanh(tape, m));
    return CellState{h, m};
}

Tensor predict(Tape& tape, const Tensor& h, std::size_t q_next_id, const ModelParams& params) {
    if (q_next_id >= params.problem_count) {
        throw IndexError("problem id " + std::to_string(q_next_id) +
                         " out of range for vocabulary of " + std::to_string(params.problem_count));
    }
    Tensor q = gather_rows(tape, params.problem_emb, q_next_id);
    Tensor z = dot(tape, params.predict_weight, concat(tape, h, q));
    z = add(tape, z, params.predict_bias);
    return sigmoid(tape, z);
}

std::size_t ForwardResult::emission_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m;
    return n;
}

ForwardResult forward_sequence(Tape& tape, const StudentSequence& seq,
                               const ModelParams& params, const Hyperparams& hyper) {
    if (seq.activities.size() != hyper.seq_len) {
        throw ValidationError("sequence for student '" + seq.student_id + "' has length " +
                              std::to_string(seq.activities.size()) +
                              "; pad or truncate to seq_len=" + std::to_string(hyper.seq_len));
    }
    ForwardResult res;
    res.predictions.resize(hyper.seq_len);
    res.targets.assign(hyper.seq_len, 0.0);
    res.mask.assign(hyper.seq_len, 0);
    res.cold_start.assign(hyper.seq_len, 0);

    CellState state = initial_state(hyper.hidden_dim);
    int d_prev = 0;
    bool any_step = false;
    for (std::size_t t = 0; t < hyper.seq_len; ++t) {
        const Activity& act = seq.activities[t];
        if (act.padding) continue;  // padding updates nothing and emits nothing
        if (act.type != 0 && act.type != 1) {
            throw ValidationError("activity type must be 0 or 1, got " +
                                  std::to_string(act.type));
        }
        if (act.type == 0) {
            if (!act.response.has_value()) {
                throw ValidationError("assessed activity at step " + std::to_string(t) +
                                      " is missing a response");
            }
            res.predictions[t] = predict(tape, state.h, act.material, params);
            res.targets[t] = *act.response;
            res.mask[t] = 1;
            res.cold_start[t] = any_step ? 0 : 1;
        }
        Tensor x = embed_activity(tape, act, params, hyper.response_mode);
        // The first real step has no predecessor; the self-transition
        // convention is inert because h_0 = 0 annihilates the transfer term.
        const int dp = any_step ? d_prev : act.type;
        state = cell_step(tape, x, dp, act.type, state, params);
        d_prev = act.type;
        any_step = true;
    }
    return res;
}

Tensor loss(Tape& tape, const std::vector<Tensor>& predictions,
            const std::vector<double>& targets, const std::vector<std::uint8_t>& mask,
            const ModelParams& params, double lambda) {
    if (predictions.size() != targets.size() || targets.size() != mask.size()) {
        throw DimensionError("loss: predictions (" + std::to_string(predictions.size()) +
                             "), targets (" + std::to_string(targets.size()) + ") and mask (" +
                             std::to_string(mask.size()) + ") lengths differ");
    }
    Tensor data_term;  // sum of r log p + (1-r) log(1-p) over masked entries
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double r = targets[i];
        if (r < 0.0 || r > 1.0) {
            throw DomainError("target " + std::to_string(r) + " outside [0,1]");
        }
        Tensor p = clamp(tape, predictions[i], kProbClamp, 1.0 - kProbClamp);
        Tensor term = scale(tape, log(tape, p), r);
        term = add(tape, term, scale(tape, log(tape, sub(tape, 1.0, p)), 1.0 - r));
        data_term = data_term.defined() ? add(tape, data_term, term) : term;
    }

    Tensor total = data_term.defined() ? scale(tape, data_term, -1.0) : Tensor();
    if (lambda != 0.0) {
        Tensor reg;
        for (const auto& p : params.parameters()) {
            Tensor sq = sum_squares(tape, p);
            reg = reg.defined() ? add(tape, reg, sq) : sq;
        }
        reg = scale(tape, reg, lambda);
        total = total.defined() ? add(tape, total, reg) : reg;
    }
    // No masked entries and lambda == 0: the loss is identically zero and
    // carries no gradient.
    return total.defined() ? total : Tensor::scalar(0.0);
}

}  // namespace takt
