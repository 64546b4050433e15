#include "splitkit/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "splitkit/errors.hpp"
#include "splitkit/forward.hpp"
#include "splitkit/loss.hpp"
#include "splitkit/rng.hpp"

namespace splitkit {

namespace {

constexpr std::size_t kEvalBatch = 256;
constexpr std::size_t kActivationCacheBytes = 64ull << 20;

std::vector<std::size_t> index_range(std::size_t begin, std::size_t end) {
    std::vector<std::size_t> out(end - begin);
    std::iota(out.begin(), out.end(), begin);
    return out;
}

Tensor run_eval(const ModelGraph& graph, const ParamStore& params,
                const Tensor& x) {
    ForwardOptions opts;
    opts.mode = Mode::Eval;
    opts.keep_activations = false;
    return forward(graph, params, x, opts).logits();
}

void prefix_names(std::vector<LayerSpec>& layers, const std::string& prefix) {
    for (LayerSpec& layer : layers) {
        layer.name = prefix + layer.name;
        prefix_names(layer.body, prefix);
    }
}

// Clean edge activations for a dataset, precomputed when they fit in a
// fixed memory budget, recomputed per batch otherwise.
class ActivationSource {
public:
    ActivationSource(const ModelGraph& edge, const ParamStore& edge_params,
                     const Dataset& dataset, const TensorSpec& interface_spec)
        : edge_(edge), params_(edge_params), dataset_(dataset),
          per_shape_(interface_spec.shape),
          per_(TensorSpec{interface_spec.shape, Dtype::Float64}.numel()) {
        std::size_t n = dataset.samples();
        cached_ = n * per_ * sizeof(double) <= kActivationCacheBytes;
        if (!cached_) return;
        std::vector<std::size_t> shape = per_shape_;
        shape.insert(shape.begin(), n);
        acts_ = Tensor(shape);
        for (std::size_t begin = 0; begin < n; begin += kEvalBatch) {
            std::size_t end = std::min(begin + kEvalBatch, n);
            std::vector<std::size_t> chunk = index_range(begin, end);
            Tensor a = run_eval(edge_, params_,
                                assemble_batch(dataset_, chunk));
            std::memcpy(acts_.data() + begin * per_, a.data(),
                        a.numel() * sizeof(double));
        }
    }

    Tensor batch(const std::vector<std::size_t>& indices) const {
        if (!cached_) {
            return run_eval(edge_, params_, assemble_batch(dataset_, indices));
        }
        std::vector<std::size_t> shape = per_shape_;
        shape.insert(shape.begin(), indices.size());
        Tensor out(shape);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            std::memcpy(out.data() + i * per_,
                        acts_.data() + indices[i] * per_,
                        per_ * sizeof(double));
        }
        return out;
    }

private:
    const ModelGraph& edge_;
    const ParamStore& params_;
    const Dataset& dataset_;
    std::vector<std::size_t> per_shape_;
    std::size_t per_;
    bool cached_ = false;
    Tensor acts_;
};

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
    std::vector<int> pred = predict_classes(logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == labels[i]) ++correct;
    }
    return correct;
}

}  // namespace

std::string head_kind_name(HeadKind kind) {
    switch (kind) {
        case HeadKind::Mirror: return "mirror";
        case HeadKind::Mlp: return "mlp";
    }
    throw InvalidArgument("unknown head kind");
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "mirror") return HeadKind::Mirror;
    if (name == "mlp") return HeadKind::Mlp;
    throw InvalidArgument("unknown head kind '" + name + "'");
}

AttackerHead make_attacker_head(const SplitModel& split,
                                std::size_t attacker_classes, HeadKind kind,
                                std::uint64_t seed) {
    if (attacker_classes < 2) {
        throw InvalidArgument("attacker task needs at least 2 classes");
    }
    TensorSpec interface{split.interface_spec.shape, Dtype::Float64};
    std::vector<LayerSpec> layers;
    if (kind == HeadKind::Mirror) {
        layers = split.cloud.layers;
        prefix_names(layers, "head_");
        if (layers.empty() || layers.back().kind != LayerKind::Linear) {
            throw InvalidArgument(
                "mirror head requires a cloud half ending in a linear layer");
        }
        layers.back().out_features = attacker_classes;
    } else {
        layers.push_back(make_flatten("head_flatten"));
        layers.push_back(
            make_linear("head_fc1", interface.numel(), 256));
        layers.push_back(make_relu("head_relu"));
        layers.push_back(make_linear("head_fc2", 256, attacker_classes));
    }
    BuiltModel built =
        build_model(std::move(layers), interface, attacker_classes, seed);
    AttackerHead head;
    head.graph = std::move(built.graph);
    head.params = std::move(built.params);
    head.arch = head_kind_name(kind);
    return head;
}

JointModel build_joint(const SplitModel& split, const Defense& defense,
                       AttackerHead head) {
    if (head.graph.input_spec.shape != split.interface_spec.shape) {
        throw ShapeError("attacker head expects input " +
                         shape_to_string(head.graph.input_spec.shape) +
                         " but the cut interface is " +
                         shape_to_string(split.interface_spec.shape));
    }
    validate_graph(head.graph);
    JointModel joint;
    joint.edge = split.edge;
    joint.edge_params = split.edge_params;
    joint.defense = defense;
    joint.head = std::move(head);
    joint.interface_spec = split.interface_spec;
    return joint;
}

std::string frozen_digest(const JointModel& joint) {
    ParamStore merged = joint.edge_params;
    ParamStore noise = defense_params(joint.defense);
    for (const auto& [name, tensor] : noise.tensors) {
        merged.tensors["frozen." + name] = tensor;
    }
    return params_digest(merged);
}

AttackOutcome train_attack(JointModel& joint, const Dataset& train_set,
                           const Dataset& val_set, const TrainConfig& config) {
    config.validate();
    train_set.validate();
    val_set.validate();
    std::size_t classes = joint.head.graph.num_classes;
    if (train_set.task.num_classes != classes ||
        val_set.task.num_classes != classes) {
        throw InvalidArgument("attacker dataset class count does not match "
                              "the head output size");
    }

    AttackOutcome out;
    out.frozen_digest_before = frozen_digest(joint);

    ActivationSource train_acts(joint.edge, joint.edge_params, train_set,
                                joint.interface_spec);
    ActivationSource val_acts(joint.edge, joint.edge_params, val_set,
                              joint.interface_spec);

    auto validation_accuracy = [&](const ParamStore& head_params) {
        std::size_t n = val_set.samples();
        std::size_t correct = 0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < n;
             begin += kEvalBatch, ++batch_index) {
            std::size_t end = std::min(begin + kEvalBatch, n);
            std::vector<std::size_t> chunk = index_range(begin, end);
            Tensor defended = apply_defense(
                joint.defense, val_acts.batch(chunk),
                derive_seed(config.seed, "attack_val_noise",
                            std::to_string(batch_index)));
            correct += count_correct(run_eval(joint.head.graph, head_params,
                                              defended),
                                     gather_labels(val_set, chunk));
        }
        return static_cast<double>(correct) / static_cast<double>(n);
    };

    if (config.epochs == 0) {
        out.best_val_accuracy = validation_accuracy(joint.head.params);
        out.frozen_digest_after = frozen_digest(joint);
        return out;
    }

    ParamMask mask = ParamMask::of(all_param_names(joint.head.graph));
    LossSpec loss{LossSpec::Kind::LabelSmoothedCE, config.epsilon};
    SgdState state;
    Rng shuffle_rng(derive_seed(config.seed, "attack_shuffle"));
    std::vector<std::size_t> order = index_range(0, train_set.samples());

    ParamStore best_params = joint.head.params;
    double best_acc = -1.0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double lr = scheduled_lr(config, epoch);
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < train_set.samples();
             begin += config.batch_size, ++batches) {
            std::size_t end =
                std::min(begin + config.batch_size, train_set.samples());
            std::vector<std::size_t> chunk(order.begin() + begin,
                                           order.begin() + end);
            Tensor defended = apply_defense(
                joint.defense, train_acts.batch(chunk),
                derive_seed(config.seed, "attack_noise",
                            std::to_string(epoch) + "_" +
                                std::to_string(batches)));
            GradResult gr =
                loss_and_grads(joint.head.graph, joint.head.params, defended,
                               gather_labels(train_set, chunk), loss, mask);
            if (!std::isfinite(gr.loss)) {
                throw NumericError("attack training diverged at epoch " +
                                   std::to_string(epoch));
            }
            loss_sum += gr.loss;
            sgd_step(joint.head.params, gr.grads, state, config, lr);
            commit_batchnorm_stats(joint.head.params, gr.bn_stats, mask);
        }
        double val_acc = validation_accuracy(joint.head.params);
        if (val_acc > best_acc) {
            best_acc = val_acc;
            best_params = joint.head.params;
        }
        out.epoch_log.push_back(
            EpochStats{loss_sum / static_cast<double>(batches), val_acc, lr});
    }
    joint.head.params = std::move(best_params);
    out.best_val_accuracy = best_acc;
    out.frozen_digest_after = frozen_digest(joint);
    return out;
}

double joint_accuracy(const JointModel& joint, const Dataset& dataset,
                      std::uint64_t noise_seed) {
    dataset.validate();
    std::size_t n = dataset.samples();
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += kEvalBatch, ++batch_index) {
        std::size_t end = std::min(begin + kEvalBatch, n);
        std::vector<std::size_t> chunk = index_range(begin, end);
        Tensor acts = run_eval(joint.edge, joint.edge_params,
                               assemble_batch(dataset, chunk));
        Tensor defended = apply_defense(
            joint.defense, acts,
            derive_seed(noise_seed, "joint_batch", std::to_string(batch_index)));
        correct += count_correct(run_eval(joint.head.graph, joint.head.params,
                                          defended),
                                 gather_labels(dataset, chunk));
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

BuiltModel compose_unconstrained(const JointModel& joint,
                                 const TensorSpec& raw_input_spec,
                                 std::uint64_t seed) {
    std::vector<LayerSpec> layers = joint.edge.layers;
    layers.insert(layers.end(), joint.head.graph.layers.begin(),
                  joint.head.graph.layers.end());
    return build_model(std::move(layers), raw_input_spec,
                       joint.head.graph.num_classes, seed);
}

namespace {

void append_layer_signature(const LayerSpec& layer, std::string& out) {
    switch (layer.kind) {
        case LayerKind::Conv2d:
            out += "conv2d(" + std::to_string(layer.in_channels) + "," +
                   std::to_string(layer.out_channels) + ",k" +
                   std::to_string(layer.kernel) + ",s" +
                   std::to_string(layer.stride) + ",p" +
                   std::to_string(layer.padding) + ")";
            return;
        case LayerKind::Linear:
            out += "linear(" + std::to_string(layer.in_features) + "," +
                   std::to_string(layer.out_features) + ")";
            return;
        case LayerKind::Relu:
            out += "relu";
            return;
        case LayerKind::MaxPool2d:
            out += "maxpool(" + std::to_string(layer.pool) + ")";
            return;
        case LayerKind::BatchNorm2d:
            out += "batchnorm(" + std::to_string(layer.channels) + ")";
            return;
        case LayerKind::Flatten:
            out += "flatten";
            return;
        case LayerKind::ResidualBlock:
            out += "residual[";
            for (std::size_t i = 0; i < layer.body.size(); ++i) {
                if (i) out += ";";
                append_layer_signature(layer.body[i], out);
            }
            out += "]";
            return;
    }
    throw InvalidArgument("unknown layer kind");
}

}  // namespace

std::string arch_signature(const ModelGraph& graph) {
    std::string out = shape_to_string(graph.input_spec.shape) + "|";
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        if (i) out += ";";
        append_layer_signature(graph.layers[i], out);
    }
    out += "|" + std::to_string(graph.num_classes);
    return out;
}

double train_best_baseline(const ModelGraph& graph, ParamStore& params,
                           const Dataset& train_set, const Dataset& val_set,
                           const TrainConfig& config) {
    if (config.epochs == 0) {
        config.validate();
        return evaluate(graph, params, val_set);
    }
    ParamMask mask = ParamMask::of(all_param_names(graph));
    TrainReport report = train(graph, params, train_set, val_set, config, mask);
    return report.best_val_accuracy;
}

double random_baseline(const Dataset& dataset, RandomBaselineMode mode,
                       std::uint64_t seed) {
    if (dataset.labels.empty()) {
        throw InvalidArgument("random baseline needs a labeled dataset");
    }
    std::size_t classes = dataset.task.num_classes;
    if (classes < 2) throw InvalidArgument("task needs at least 2 classes");
    if (mode == RandomBaselineMode::Uniform) {
        return 1.0 / static_cast<double>(classes);
    }
    Rng rng(seed);
    std::size_t correct = 0;
    for (int label : dataset.labels) {
        if (static_cast<std::size_t>(rng.uniform_int(classes)) ==
            static_cast<std::size_t>(label)) {
            ++correct;
        }
    }
    return static_cast<double>(correct) /
           static_cast<double>(dataset.labels.size());
}

}  // namespace splitkit
