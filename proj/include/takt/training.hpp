#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "takt/data.hpp"
#include "takt/model.hpp"

namespace takt {

// Adam accumulators; one m/v pair per entry of ModelParams::parameters(),
// in the same order.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

AdamState make_adam_state(const ModelParams& params);

// Every learnable tensor i.i.d. Normal(0, 0.2^2), deterministic under seed.
ModelParams init_params(const Hyperparams& hyper, std::size_t problem_count,
                        std::size_t lecture_count, std::uint64_t seed);

// Scales all gradients by threshold/norm when the global L2 norm exceeds the
// threshold; returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& params, double threshold);

// One bias-corrected Adam update, reading each tensor's grad buffer.
void adam_step(std::vector<Tensor>& params, AdamState& state, double learning_rate);

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean batch objective of the epoch
    std::optional<double> valid_metric;
    double wall_time_sec = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

struct TrainResult {
    ModelParams params;
    TrainHistory history;
};

// Minibatch training of the regularized cross-entropy objective on the given
// students' sequences (padded/truncated to hyper.seq_len). When a validation
// split is supplied, the returned parameters are the snapshot with the best
// validation metric (AUC for binary data, RMSE for numeric); otherwise the
// final epoch's parameters. Throws Error when the loss turns non-finite,
// naming the offending epoch.
TrainResult train(const Dataset& dataset, const std::vector<std::string>& train_students,
                  const Hyperparams& hyper,
                  const std::optional<std::vector<std::string>>& valid_students = std::nullopt);

// Checkpoint container: versioned JSON with hyperparameters, vocabulary
// sizes, and every named tensor (shape + row-major values).
void save_checkpoint(const ModelParams& params, const Hyperparams& hyper,
                     const std::string& path);
std::string format_checkpoint(const ModelParams& params, const Hyperparams& hyper);
std::pair<ModelParams, Hyperparams> load_checkpoint(const std::string& path);
std::pair<ModelParams, Hyperparams> parse_checkpoint(const std::string& text);

}  // namespace takt
