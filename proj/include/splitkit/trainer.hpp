#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitkit/data.hpp"
#include "splitkit/forward.hpp"
#include "splitkit/model.hpp"

namespace splitkit {

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 3e-5;
    double epsilon = 0.1;  // label smoothing
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    // LR decays by lr_factor at floor(fraction * epochs) for each fraction.
    std::vector<double> milestones = {0.5, 0.75};
    double lr_factor = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochStats {
    double loss = 0.0;
    double val_accuracy = 0.0;
    double lr = 0.0;
};

struct TrainReport {
    double final_train_loss = 0.0;
    double best_val_accuracy = 0.0;
    std::vector<EpochStats> epoch_log;
};

// Learning rate for a 0-based epoch index under the milestone schedule.
double scheduled_lr(const TrainConfig& config, std::size_t epoch);

struct SgdState {
    std::map<std::string, Tensor> velocity;
};

// Heavy-ball update on every tensor present in grads:
//   v <- momentum * v + (g + weight_decay * theta)
//   theta <- theta - lr * v
// Rejects non-finite gradients without touching parameters.
void sgd_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
              SgdState& state, const TrainConfig& config, double lr);

// Minibatch SGD with label-smoothed cross-entropy.  Only tensors in the
// mask are modified (gradient updates for weights/biases, running-statistic
// updates for batchnorm layers whose statistics the mask covers).  Keeps the
// best-validation parameters; params holds them on return.  Deterministic
// given the config seed.
TrainReport train(const ModelGraph& graph, ParamStore& params,
                  const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, const ParamMask& mask);

// Top-1 accuracy in eval mode.
double evaluate(const ModelGraph& graph, const ParamStore& params,
                const Dataset& dataset);

// Commits train-mode batch statistics into running estimates with
// exponential momentum 0.1, honoring the mask.
void commit_batchnorm_stats(ParamStore& params,
                            const std::vector<BatchNormStats>& stats,
                            const ParamMask& mask);

}  // namespace splitkit
