#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "splitkit/model.hpp"
#include "splitkit/tensor.hpp"

namespace splitkit {

enum class Mode { Train, Eval };

// Batch statistics a train-mode forward computed for one batchnorm layer.
// The trainer folds them into the running statistics; forward itself never
// mutates parameters.
struct BatchNormStats {
    std::string layer_name;
    std::vector<double> mean;
    std::vector<double> var;
};

// Per-layer auxiliary data kept for the backward pass.
struct LayerCacheData {
    std::vector<std::uint32_t> pool_argmax;
    std::vector<double> bn_mean;
    std::vector<double> bn_var;
    std::vector<Tensor> inner_acts;
    std::vector<LayerCacheData> inner_caches;
};

struct ForwardOptions {
    Mode mode = Mode::Eval;
    // Retain every layer output (true) or only the final output (false).
    bool keep_activations = true;
    // Retain the auxiliary data backward needs.
    bool build_cache = false;
};

struct ForwardResult {
    // All layer outputs when keep_activations, else just the final output.
    std::vector<Tensor> activations;
    std::vector<LayerCacheData> caches;
    std::vector<BatchNormStats> bn_stats;

    const Tensor& logits() const { return activations.back(); }
};

// Runs the graph on a batched input (leading batch dimension prepended to
// graph.input_spec).  Eval mode is deterministic given inputs and params.
// Throws NumericError naming the layer that produced a non-finite value.
ForwardResult forward(const ModelGraph& graph, const ParamStore& params,
                      const Tensor& x, const ForwardOptions& options = {});

// Set of parameter tensors a caller may read gradients for or mutate.
struct ParamMask {
    bool all = false;
    std::set<std::string> names;

    static ParamMask everything();
    static ParamMask of(const std::vector<std::string>& names);

    bool contains(const std::string& name) const {
        return all || names.count(name) > 0;
    }
    bool empty() const { return !all && names.empty(); }
};

struct LossSpec {
    enum class Kind { LabelSmoothedCE, SquaredError };
    Kind kind = Kind::LabelSmoothedCE;
    double epsilon = 0.1;
};

struct GradResult {
    double loss = 0.0;
    // Gradients for trainable tensors selected by the mask, nothing else.
    std::map<std::string, Tensor> grads;
    // d loss / d input, when requested.
    Tensor input_grad;
    std::vector<BatchNormStats> bn_stats;
};

// Full forward + backward.  Gradients are computed for masked trainable
// tensors only; every other tensor is left untouched.  want_input_grad adds
// the gradient with respect to x (used to train additive noise at a cut).
GradResult backprop(const ModelGraph& graph, const ParamStore& params,
                    const Tensor& x, const std::vector<int>& targets,
                    const LossSpec& loss, const ParamMask& mask,
                    bool want_input_grad, Mode mode);

// backprop in train mode; rejects an empty mask (nothing to train).
GradResult loss_and_grads(const ModelGraph& graph, const ParamStore& params,
                          const Tensor& x, const std::vector<int>& targets,
                          const LossSpec& loss, const ParamMask& mask);

}  // namespace splitkit
