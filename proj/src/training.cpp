#include "takt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "takt/evaluation.hpp"
#include "takt/rng.hpp"

namespace takt {

namespace {

using json = nlohmann::json;

// Allocates every tensor with the shapes implied by (hyper, Q, L); values 0.
ModelParams make_params(const Hyperparams& hyper, std::size_t problem_count,
                        std::size_t lecture_count) {
    hyper.validate();
    if (problem_count < 1) {
        throw ValidationError("init_params: need at least one assessed material");
    }
    ModelParams p;
    p.problem_count = problem_count;
    p.lecture_count = lecture_count;
    p.mode = hyper.response_mode;
    p.tied_transfer = hyper.tied_transfer;

    const std::size_t dq = hyper.problem_dim;
    const std::size_t dl = hyper.lecture_dim;
    const std::size_t dr = hyper.response_dim;
    const std::size_t dh = hyper.hidden_dim;

    p.problem_emb = Tensor::zeros({problem_count, dq}, true);
    // A lecture-free dataset still needs a well-formed [L x d] table; keep one
    // unused row so shapes stay rank-2.
    p.lecture_emb = Tensor::zeros({std::max<std::size_t>(lecture_count, 1), dl}, true);
    if (hyper.response_mode == ResponseMode::Binary) {
        p.response_emb = Tensor::zeros({2, dr}, true);
    } else {
        p.response_emb = Tensor::zeros({dr}, true);
    }
    for (auto& gate : p.gates) {
        gate.proj_q = Tensor::zeros({dq + dr, dh}, true);
        gate.proj_l = Tensor::zeros({dl, dh}, true);
        gate.bias = Tensor::zeros({dh}, true);
        if (hyper.tied_transfer) {
            Tensor shared = Tensor::zeros({dh, dh}, true);
            for (auto& t : gate.transfer) t = shared;
        } else {
            for (auto& t : gate.transfer) t = Tensor::zeros({dh, dh}, true);
        }
    }
    p.predict_weight = Tensor::zeros({dh + dq}, true);
    p.predict_bias = Tensor::zeros({1}, true);
    return p;
}

}  // namespace

ModelParams init_params(const Hyperparams& hyper, std::size_t problem_count,
                        std::size_t lecture_count, std::uint64_t seed) {
    ModelParams p = make_params(hyper, problem_count, lecture_count);
    Rng rng(seed);
    for (auto& nt : p.named_parameters()) {
        for (double& v : nt.tensor.values_mut()) v = rng.normal(0.0, 0.2);
    }
    return p;
}

AdamState make_adam_state(const ModelParams& params) {
    AdamState s;
    for (const auto& t : params.parameters()) {
        s.m.emplace_back(t.size(), 0.0);
        s.v.emplace_back(t.size(), 0.0);
    }
    return s;
}

double clip_global_norm(std::vector<Tensor>& params, double threshold) {
    if (threshold <= 0.0) throw ValidationError("clip_global_norm: threshold must be > 0");
    double sq = 0.0;
    for (auto& p : params) {
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > threshold) {
        const double factor = threshold / norm;
        for (auto& p : params) {
            for (double& g : p.grad_mut()) g *= factor;
        }
    }
    return norm;
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double learning_rate) {
    if (params.size() != state.m.size()) {
        throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                             " tensors, got " + std::to_string(params.size()));
    }
    state.step += 1;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& values = params[i].values_mut();
        const auto& grad = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (grad.size() != m.size()) {
            throw DimensionError("adam_step: tensor " + std::to_string(i) + " has " +
                                 std::to_string(grad.size()) + " entries, state has " +
                                 std::to_string(m.size()));
        }
        for (std::size_t j = 0; j < grad.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * grad[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * grad[j] * grad[j];
            const double m_hat = m[j] / b1t;
            const double v_hat = v[j] / b2t;
            values[j] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

namespace {

std::vector<StudentSequence> chunked_sequences(const Dataset& dataset,
                                               const std::vector<std::string>& students,
                                               std::size_t seq_len) {
    std::vector<StudentSequence> chunks;
    for (const auto& id : students) {
        const StudentSequence* seq = dataset.find_student(id);
        if (!seq) throw ValidationError("unknown student id '" + id + "'");
        for (auto& c : pad_truncate(*seq, seq_len)) chunks.push_back(std::move(c));
    }
    return chunks;
}

}  // namespace

TrainResult train(const Dataset& dataset, const std::vector<std::string>& train_students,
                  const Hyperparams& hyper,
                  const std::optional<std::vector<std::string>>& valid_students) {
    hyper.validate();
    if (hyper.response_mode != dataset.mode) {
        throw ValidationError(std::string("train: hyperparams expect ") +
                              response_mode_name(hyper.response_mode) + " responses but dataset is " +
                              response_mode_name(dataset.mode));
    }
    const auto chunks = chunked_sequences(dataset, train_students, hyper.seq_len);
    if (chunks.empty()) throw ValidationError("train: empty training split");

    ModelParams params = init_params(hyper, dataset.problem_count(),
                                     dataset.lecture_count(), hyper.seed);
    std::vector<Tensor> tensors = params.parameters();
    AdamState opt = make_adam_state(params);
    Rng shuffler(hyper.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainHistory history;
    std::optional<double> best_metric;
    ModelParams best_params;

    std::vector<std::size_t> order(chunks.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffler.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
            const std::size_t end = std::min(order.size(), start + hyper.batch_size);
            Tape tape;
            std::vector<Tensor> preds;
            std::vector<double> targets;
            std::vector<std::uint8_t> mask;
            for (std::size_t i = start; i < end; ++i) {
                const ForwardResult out = forward_sequence(tape, chunks[order[i]], params, hyper);
                for (std::size_t t = 0; t < out.mask.size(); ++t) {
                    if (!out.mask[t]) continue;
                    preds.push_back(out.predictions[t]);
                    targets.push_back(out.targets[t]);
                    mask.push_back(1);
                }
            }
            if (preds.empty() && hyper.lambda == 0.0) continue;  // nothing to learn from
            Tensor batch_loss = loss(tape, preds, targets, mask, params, hyper.lambda);
            const double lv = batch_loss.value();
            if (!std::isfinite(lv)) {
                throw Error("training diverged: non-finite loss in epoch " +
                            std::to_string(epoch + 1));
            }
            loss_sum += lv;
            ++batches;
            params.zero_grad();
            tape.backward(batch_loss);
            clip_global_norm(tensors, hyper.clip_norm);
            adam_step(tensors, opt, hyper.learning_rate);
            params.zero_grad();
        }

        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
        if (valid_students.has_value() && !valid_students->empty()) {
            const EvalResult ev = evaluate(params, dataset, *valid_students, hyper);
            // AUC when defined (binary data with both classes), otherwise
            // 1 - RMSE; both are higher-is-better.
            const double metric = ev.auc.has_value() ? *ev.auc : 1.0 - ev.rmse;
            stats.valid_metric = metric;
            if (!best_metric.has_value() || metric > *best_metric) {
                best_metric = metric;
                best_params = params.clone();
            }
        }
        stats.wall_time_sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.epochs.push_back(stats);
    }

    TrainResult result;
    result.params = best_metric.has_value() ? std::move(best_params) : std::move(params);
    result.history = std::move(history);
    return result;
}

// --- checkpoint io ---------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "takt-checkpoint";
constexpr int kCheckpointVersion = 1;

json hyper_to_json(const Hyperparams& h) {
    return json{{"problem_dim", h.problem_dim},
                {"lecture_dim", h.lecture_dim},
                {"response_dim", h.response_dim},
                {"hidden_dim", h.hidden_dim},
                {"seq_len", h.seq_len},
                {"lambda", h.lambda},
                {"response_mode", response_mode_name(h.response_mode)},
                {"learning_rate", h.learning_rate},
                {"epochs", h.epochs},
                {"batch_size", h.batch_size},
                {"clip_norm", h.clip_norm},
                {"seed", h.seed},
                {"tied_transfer", h.tied_transfer}};
}

Hyperparams hyper_from_json(const json& j) {
    Hyperparams h;
    h.problem_dim = j.at("problem_dim").get<std::size_t>();
    h.lecture_dim = j.at("lecture_dim").get<std::size_t>();
    h.response_dim = j.at("response_dim").get<std::size_t>();
    h.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    h.seq_len = j.at("seq_len").get<std::size_t>();
    h.lambda = j.at("lambda").get<double>();
    const auto mode = response_mode_from_name(j.at("response_mode").get<std::string>());
    if (!mode) throw ValidationError("checkpoint: unknown response_mode");
    h.response_mode = *mode;
    h.learning_rate = j.at("learning_rate").get<double>();
    h.epochs = j.at("epochs").get<std::size_t>();
    h.batch_size = j.at("batch_size").get<std::size_t>();
    h.clip_norm = j.at("clip_norm").get<double>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.tied_transfer = j.value("tied_transfer", false);
    return h;
}

}  // namespace

std::string format_checkpoint(const ModelParams& params, const Hyperparams& hyper) {
    json tensors = json::object();
    for (const auto& nt : params.named_parameters()) {
        tensors[nt.name] = json{{"shape", nt.tensor.shape()}, {"values", nt.tensor.values()}};
    }
    const json doc = {{"format", kCheckpointFormat},
                      {"version", kCheckpointVersion},
                      {"hyper", hyper_to_json(hyper)},
                      {"problem_count", params.problem_count},
                      {"lecture_count", params.lecture_count},
                      {"tensors", tensors}};
    return doc.dump(2) + "\n";
}

void save_checkpoint(const ModelParams& params, const Hyperparams& hyper,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out << format_checkpoint(params, hyper);
    if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

std::pair<ModelParams, Hyperparams> parse_checkpoint(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    if (doc.value("format", "") != kCheckpointFormat) {
        throw ValidationError("checkpoint: missing or unknown format marker");
    }
    if (doc.value("version", -1) != kCheckpointVersion) {
        throw ValidationError("checkpoint: unsupported version");
    }
    const Hyperparams hyper = hyper_from_json(doc.at("hyper"));
    const auto problem_count = doc.at("problem_count").get<std::size_t>();
    const auto lecture_count = doc.at("lecture_count").get<std::size_t>();
    ModelParams params = make_params(hyper, problem_count, lecture_count);
    const json& tensors = doc.at("tensors");
    for (auto& nt : params.named_parameters()) {
        if (!tensors.contains(nt.name)) {
            throw ValidationError("checkpoint: missing tensor '" + nt.name + "'");
        }
        const json& tj = tensors.at(nt.name);
        const auto shape = tj.at("shape").get<std::vector<std::size_t>>();
        if (shape != nt.tensor.shape()) {
            throw ValidationError("checkpoint: tensor '" + nt.name + "' has unexpected shape");
        }
        auto values = tj.at("values").get<std::vector<double>>();
        if (values.size() != nt.tensor.size()) {
            throw ValidationError("checkpoint: tensor '" + nt.name + "' has wrong value count");
        }
        nt.tensor.values_mut() = std::move(values);
    }
    return {std::move(params), hyper};
}

std::pair<ModelParams, Hyperparams> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_checkpoint(buf.str());
}

}  // namespace takt
