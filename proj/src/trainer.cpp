#include "splitkit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splitkit/errors.hpp"
#include "splitkit/loss.hpp"
#include "splitkit/rng.hpp"

namespace splitkit {

namespace {
constexpr double kBnMomentum = 0.1;
}

void TrainConfig::validate() const {
    if (lr <= 0.0) throw InvalidArgument("lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw InvalidArgument("momentum must lie in [0, 1)");
    }
    if (epsilon < 0.0 || epsilon >= 1.0) {
        throw InvalidArgument("label smoothing epsilon must lie in [0, 1)");
    }
    if (weight_decay < 0.0) {
        throw InvalidArgument("weight_decay must be nonnegative");
    }
    if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
    if (lr_factor <= 0.0) throw InvalidArgument("lr_factor must be positive");
    for (double m : milestones) {
        if (m <= 0.0 || m >= 1.0) {
            throw InvalidArgument("milestones are epoch fractions in (0, 1)");
        }
    }
}

double scheduled_lr(const TrainConfig& config, std::size_t epoch) {
    std::size_t passed = 0;
    for (double fraction : config.milestones) {
        const auto milestone = static_cast<std::size_t>(
            std::floor(fraction * static_cast<double>(config.epochs)));
        if (epoch >= milestone) ++passed;
    }
    return config.lr * std::pow(config.lr_factor, static_cast<double>(passed));
}

void sgd_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
              SgdState& state, const TrainConfig& config, double lr) {
    for (const auto& [name, grad] : grads) {
        if (!grad.all_finite()) {
            throw NumericError("non-finite gradient for " + name +
                               "; step refused");
        }
    }
    for (const auto& [name, grad] : grads) {
        Tensor& theta = params.at(name);
        if (theta.shape() != grad.shape()) {
            throw ShapeError("gradient shape mismatch for " + name);
        }
        auto [it, inserted] = state.velocity.try_emplace(name, grad.spec());
        Tensor& v = it->second;
        double* vp = v.data();
        double* tp = theta.data();
        const double* gp = grad.data();
        const std::size_t n = grad.numel();
        for (std::size_t i = 0; i < n; ++i) {
            vp[i] = config.momentum * vp[i] +
                    (gp[i] + config.weight_decay * tp[i]);
            tp[i] -= lr * vp[i];
        }
    }
}

void commit_batchnorm_stats(ParamStore& params,
                            const std::vector<BatchNormStats>& stats,
                            const ParamMask& mask) {
    for (const auto& s : stats) {
        const std::string mean_name = s.layer_name + ".running_mean";
        const std::string var_name = s.layer_name + ".running_var";
        if (!mask.contains(mean_name) || !mask.contains(var_name)) continue;
        Tensor& rm = params.at(mean_name);
        Tensor& rv = params.at(var_name);
        for (std::size_t c = 0; c < s.mean.size(); ++c) {
            rm[c] = (1.0 - kBnMomentum) * rm[c] + kBnMomentum * s.mean[c];
            rv[c] = (1.0 - kBnMomentum) * rv[c] + kBnMomentum * s.var[c];
        }
    }
}

namespace {

// Gradient-trainable tensors (weights/biases) the mask selects.
ParamMask gradient_mask(const ModelGraph& graph, const ParamMask& mask) {
    ParamMask out;
    for (const auto& name : trainable_param_names(graph)) {
        if (mask.contains(name)) out.names.insert(name);
    }
    return out;
}

}  // namespace

double evaluate(const ModelGraph& graph, const ParamStore& params,
                const Dataset& dataset) {
    dataset.validate();
    const std::size_t n = dataset.samples();
    constexpr std::size_t kEvalBatch = 256;

    std::size_t correct = 0;
    ForwardOptions options;
    options.mode = Mode::Eval;
    options.keep_activations = false;
    for (std::size_t start = 0; start < n; start += kEvalBatch) {
        const std::size_t stop = std::min(start + kEvalBatch, n);
        std::vector<std::size_t> indices(stop - start);
        std::iota(indices.begin(), indices.end(), start);
        const Tensor batch = assemble_batch(dataset, indices);
        const ForwardResult result = forward(graph, params, batch, options);
        const auto preds = predict_classes(result.logits());
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i] == dataset.labels[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

TrainReport train(const ModelGraph& graph, ParamStore& params,
                  const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, const ParamMask& mask) {
    config.validate();
    train_set.validate();
    val_set.validate();
    if (mask.empty()) {
        throw InvalidArgument("train: empty mask, nothing to train");
    }
    const ParamMask grad_mask = gradient_mask(graph, mask);
    if (grad_mask.names.empty()) {
        throw InvalidArgument("train: mask selects no trainable tensors");
    }

    TrainReport report;
    if (config.epochs == 0) return report;

    const LossSpec loss{LossSpec::Kind::LabelSmoothedCE, config.epsilon};
    SgdState state;
    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    std::vector<std::size_t> order(train_set.samples());
    std::iota(order.begin(), order.end(), 0);

    ParamStore best_params = params;
    double best_val = -1.0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = scheduled_lr(config, epoch);
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += config.batch_size) {
            const std::size_t stop =
                std::min(start + config.batch_size, order.size());
            const std::vector<std::size_t> indices(order.begin() + start,
                                                   order.begin() + stop);
            const Tensor batch = assemble_batch(train_set, indices);
            const auto targets = gather_labels(train_set, indices);

            GradResult grads;
            try {
                grads = loss_and_grads(graph, params, batch, targets, loss,
                                       grad_mask);
            } catch (const NumericError& e) {
                throw NumericError(
                    std::string("training diverged at epoch ") +
                    std::to_string(epoch) + ": " + e.what());
            }
            if (!std::isfinite(grads.loss)) {
                throw NumericError("training diverged at epoch " +
                                   std::to_string(epoch) +
                                   ": non-finite loss");
            }
            sgd_step(params, grads.grads, state, config, lr);
            commit_batchnorm_stats(params, grads.bn_stats, mask);
            loss_sum += grads.loss;
            ++batches;
        }

        const double epoch_loss = loss_sum / static_cast<double>(batches);
        const double val_accuracy = evaluate(graph, params, val_set);
        report.epoch_log.push_back({epoch_loss, val_accuracy, lr});
        report.final_train_loss = epoch_loss;
        if (val_accuracy > best_val) {
            best_val = val_accuracy;
            best_params = params;
        }
    }

    report.best_val_accuracy = best_val;
    params = std::move(best_params);
    return report;
}

}  // namespace splitkit
