#include "splitkit/model.hpp"

#include <cmath>
#include <set>

#include "splitkit/errors.hpp"
#include "splitkit/rng.hpp"

namespace splitkit {

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Linear: return "linear";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::BatchNorm2d: return "batchnorm2d";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::ResidualBlock: return "residual_block";
    }
    throw InvalidArgument("unknown layer kind");
}

LayerSpec make_conv2d(std::string name, std::size_t in_channels,
                      std::size_t out_channels, std::size_t kernel,
                      std::size_t stride, std::size_t padding) {
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.name = std::move(name);
    l.in_channels = in_channels;
    l.out_channels = out_channels;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    return l;
}

LayerSpec make_linear(std::string name, std::size_t in_features,
                      std::size_t out_features) {
    LayerSpec l;
    l.kind = LayerKind::Linear;
    l.name = std::move(name);
    l.in_features = in_features;
    l.out_features = out_features;
    return l;
}

LayerSpec make_relu(std::string name) {
    LayerSpec l;
    l.kind = LayerKind::Relu;
    l.name = std::move(name);
    return l;
}

LayerSpec make_maxpool2d(std::string name, std::size_t pool) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool2d;
    l.name = std::move(name);
    l.pool = pool;
    return l;
}

LayerSpec make_batchnorm2d(std::string name, std::size_t channels) {
    LayerSpec l;
    l.kind = LayerKind::BatchNorm2d;
    l.name = std::move(name);
    l.channels = channels;
    return l;
}

LayerSpec make_flatten(std::string name) {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    l.name = std::move(name);
    return l;
}

LayerSpec make_residual_block(std::string name, std::vector<LayerSpec> body) {
    LayerSpec l;
    l.kind = LayerKind::ResidualBlock;
    l.name = std::move(name);
    l.body = std::move(body);
    return l;
}

namespace {

void validate_layer(const LayerSpec& layer) {
    if (layer.name.empty()) {
        throw InvalidArgument("layer of kind " + layer_kind_name(layer.kind) +
                              " has empty name");
    }
    switch (layer.kind) {
        case LayerKind::Conv2d:
            if (layer.in_channels == 0 || layer.out_channels == 0 ||
                layer.kernel == 0 || layer.stride == 0) {
                throw InvalidArgument("conv2d " + layer.name +
                                      " has incomplete hyperparameters");
            }
            break;
        case LayerKind::Linear:
            if (layer.in_features == 0 || layer.out_features == 0) {
                throw InvalidArgument("linear " + layer.name +
                                      " has incomplete hyperparameters");
            }
            break;
        case LayerKind::MaxPool2d:
            if (layer.pool == 0) {
                throw InvalidArgument("maxpool2d " + layer.name +
                                      " needs a positive window");
            }
            break;
        case LayerKind::BatchNorm2d:
            if (layer.channels == 0) {
                throw InvalidArgument("batchnorm2d " + layer.name +
                                      " needs a positive channel count");
            }
            break;
        case LayerKind::ResidualBlock:
            if (layer.body.empty()) {
                throw InvalidArgument("residual_block " + layer.name +
                                      " has an empty body");
            }
            for (const auto& inner : layer.body) {
                if (inner.kind == LayerKind::ResidualBlock) {
                    throw InvalidArgument("residual_block " + layer.name +
                                          " nests another residual_block");
                }
                validate_layer(inner);
            }
            break;
        case LayerKind::Relu:
        case LayerKind::Flatten:
            break;
    }
}

void require_rank(const LayerSpec& layer, const TensorSpec& in,
                  std::size_t rank) {
    if (in.shape.size() != rank) {
        throw ShapeError(layer.name + " (" + layer_kind_name(layer.kind) +
                         "): expected rank-" + std::to_string(rank) +
                         " input, got " + shape_to_string(in.shape));
    }
}

}  // namespace

TensorSpec infer_output_spec(const LayerSpec& layer, const TensorSpec& in) {
    validate_layer(layer);
    switch (layer.kind) {
        case LayerKind::Conv2d: {
            require_rank(layer, in, 3);
            if (in.shape[0] != layer.in_channels) {
                throw ShapeError(layer.name + ": expects " +
                                 std::to_string(layer.in_channels) +
                                 " input channels, got " +
                                 std::to_string(in.shape[0]));
            }
            const std::size_t h = in.shape[1] + 2 * layer.padding;
            const std::size_t w = in.shape[2] + 2 * layer.padding;
            if (h < layer.kernel || w < layer.kernel) {
                throw ShapeError(layer.name + ": kernel larger than input");
            }
            const std::size_t ho = (h - layer.kernel) / layer.stride + 1;
            const std::size_t wo = (w - layer.kernel) / layer.stride + 1;
            return TensorSpec{{layer.out_channels, ho, wo}, in.dtype};
        }
        case LayerKind::Linear: {
            require_rank(layer, in, 1);
            if (in.shape[0] != layer.in_features) {
                throw ShapeError(layer.name + ": expects " +
                                 std::to_string(layer.in_features) +
                                 " input features, got " +
                                 std::to_string(in.shape[0]));
            }
            return TensorSpec{{layer.out_features}, in.dtype};
        }
        case LayerKind::Relu:
            return in;
        case LayerKind::MaxPool2d: {
            require_rank(layer, in, 3);
            if (in.shape[1] < layer.pool || in.shape[2] < layer.pool) {
                throw ShapeError(layer.name + ": window larger than input");
            }
            const std::size_t ho = (in.shape[1] - layer.pool) / layer.pool + 1;
            const std::size_t wo = (in.shape[2] - layer.pool) / layer.pool + 1;
            return TensorSpec{{in.shape[0], ho, wo}, in.dtype};
        }
        case LayerKind::BatchNorm2d:
            require_rank(layer, in, 3);
            if (in.shape[0] != layer.channels) {
                throw ShapeError(layer.name + ": expects " +
                                 std::to_string(layer.channels) +
                                 " channels, got " +
                                 std::to_string(in.shape[0]));
            }
            return in;
        case LayerKind::Flatten: {
            if (in.shape.empty()) {
                throw ShapeError(layer.name + ": empty input shape");
            }
            return TensorSpec{{in.numel()}, in.dtype};
        }
        case LayerKind::ResidualBlock: {
            TensorSpec cur = in;
            for (const auto& inner : layer.body) {
                cur = infer_output_spec(inner, cur);
            }
            if (cur.shape != in.shape) {
                throw ShapeError(layer.name +
                                 ": residual body output " +
                                 shape_to_string(cur.shape) +
                                 " does not match its input " +
                                 shape_to_string(in.shape));
            }
            return cur;
        }
    }
    throw InvalidArgument("unknown layer kind");
}

namespace {

void collect_names(const LayerSpec& layer, std::set<std::string>& seen) {
    if (!seen.insert(layer.name).second) {
        throw InvalidArgument("duplicate layer name: " + layer.name);
    }
    for (const auto& inner : layer.body) collect_names(inner, seen);
}

}  // namespace

std::vector<TensorSpec> infer_shapes(const ModelGraph& graph) {
    graph.input_spec.validate();
    std::set<std::string> seen;
    std::vector<TensorSpec> specs;
    specs.reserve(graph.layers.size());
    TensorSpec cur = graph.input_spec;
    for (const auto& layer : graph.layers) {
        collect_names(layer, seen);
        cur = infer_output_spec(layer, cur);
        specs.push_back(cur);
    }
    return specs;
}

void validate_graph(const ModelGraph& graph) {
    if (graph.layers.empty()) throw InvalidArgument("graph has no layers");
    if (graph.num_classes < 2) {
        throw InvalidArgument("graph needs at least 2 classes");
    }
    const auto specs = infer_shapes(graph);
    const auto& out = specs.back();
    if (out.shape.size() != 1 || out.shape[0] != graph.num_classes) {
        throw ShapeError("graph output " + shape_to_string(out.shape) +
                         " does not produce " +
                         std::to_string(graph.num_classes) + " logits");
    }
}

namespace {

struct LayerCost {
    std::size_t params = 0;
    std::size_t flops = 0;
};

LayerCost layer_cost(const LayerSpec& layer, const TensorSpec& in,
                     const TensorSpec& out) {
    LayerCost c;
    switch (layer.kind) {
        case LayerKind::Conv2d:
            c.params = layer.out_channels * layer.in_channels * layer.kernel *
                           layer.kernel +
                       layer.out_channels;
            c.flops = 2 * layer.kernel * layer.kernel * layer.in_channels *
                      layer.out_channels * out.shape[1] * out.shape[2];
            break;
        case LayerKind::Linear:
            c.params = layer.in_features * layer.out_features +
                       layer.out_features;
            c.flops = 2 * layer.in_features * layer.out_features;
            break;
        case LayerKind::Relu:
        case LayerKind::MaxPool2d:
            c.flops = out.numel();
            break;
        case LayerKind::BatchNorm2d:
            c.params = 2 * layer.channels;
            c.flops = 2 * out.numel();
            break;
        case LayerKind::Flatten:
            break;
        case LayerKind::ResidualBlock: {
            TensorSpec cur = in;
            for (const auto& inner : layer.body) {
                TensorSpec next = infer_output_spec(inner, cur);
                const LayerCost inner_cost = layer_cost(inner, cur, next);
                c.params += inner_cost.params;
                c.flops += inner_cost.flops;
                cur = next;
            }
            c.flops += out.numel();  // skip-connection addition
            break;
        }
    }
    return c;
}

}  // namespace

std::vector<LayerProfile> profile(const ModelGraph& graph,
                                  const TensorSpec& input_spec) {
    ModelGraph g = graph;
    g.input_spec = input_spec;
    const auto specs = infer_shapes(g);
    std::vector<LayerProfile> out;
    out.reserve(g.layers.size());
    TensorSpec cur = input_spec;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const LayerCost c = layer_cost(g.layers[i], cur, specs[i]);
        out.push_back({g.layers[i].name, c.params, c.flops, specs[i]});
        cur = specs[i];
    }
    return out;
}

std::vector<LayerProfile> profile(const ModelGraph& graph) {
    return profile(graph, graph.input_spec);
}

namespace {

void append_param_names(const LayerSpec& layer, bool include_stats,
                        std::vector<std::string>& out) {
    switch (layer.kind) {
        case LayerKind::Conv2d:
        case LayerKind::Linear:
            out.push_back(layer.name + ".weight");
            out.push_back(layer.name + ".bias");
            break;
        case LayerKind::BatchNorm2d:
            out.push_back(layer.name + ".weight");
            out.push_back(layer.name + ".bias");
            if (include_stats) {
                out.push_back(layer.name + ".running_mean");
                out.push_back(layer.name + ".running_var");
            }
            break;
        case LayerKind::ResidualBlock:
            for (const auto& inner : layer.body) {
                append_param_names(inner, include_stats, out);
            }
            break;
        default:
            break;
    }
}

void init_layer_params(const LayerSpec& layer, Rng& rng, ParamStore& store) {
    switch (layer.kind) {
        case LayerKind::Conv2d: {
            const std::size_t fan_in =
                layer.in_channels * layer.kernel * layer.kernel;
            // Weight bound sqrt(6/fan_in) keeps activation variance steady
            // through deep relu stacks; biases use the tighter classic bound.
            const double w_bound =
                std::sqrt(6.0 / static_cast<double>(fan_in));
            const double b_bound =
                1.0 / std::sqrt(static_cast<double>(fan_in));
            Tensor w({layer.out_channels, layer.in_channels, layer.kernel,
                      layer.kernel});
            for (auto& v : w.values()) v = rng.uniform(-w_bound, w_bound);
            Tensor b({layer.out_channels});
            for (auto& v : b.values()) v = rng.uniform(-b_bound, b_bound);
            store.tensors.emplace(layer.name + ".weight", std::move(w));
            store.tensors.emplace(layer.name + ".bias", std::move(b));
            break;
        }
        case LayerKind::Linear: {
            const double w_bound =
                std::sqrt(6.0 / static_cast<double>(layer.in_features));
            const double b_bound =
                1.0 / std::sqrt(static_cast<double>(layer.in_features));
            Tensor w({layer.out_features, layer.in_features});
            for (auto& v : w.values()) v = rng.uniform(-w_bound, w_bound);
            Tensor b({layer.out_features});
            for (auto& v : b.values()) v = rng.uniform(-b_bound, b_bound);
            store.tensors.emplace(layer.name + ".weight", std::move(w));
            store.tensors.emplace(layer.name + ".bias", std::move(b));
            break;
        }
        case LayerKind::BatchNorm2d: {
            Tensor w({layer.channels});
            w.fill(1.0);
            Tensor b({layer.channels});
            Tensor mean({layer.channels});
            Tensor var({layer.channels});
            var.fill(1.0);
            store.tensors.emplace(layer.name + ".weight", std::move(w));
            store.tensors.emplace(layer.name + ".bias", std::move(b));
            store.tensors.emplace(layer.name + ".running_mean",
                                  std::move(mean));
            store.tensors.emplace(layer.name + ".running_var", std::move(var));
            break;
        }
        case LayerKind::ResidualBlock:
            for (const auto& inner : layer.body) {
                init_layer_params(inner, rng, store);
            }
            break;
        default:
            break;
    }
}

}  // namespace

std::vector<std::string> trainable_param_names(const ModelGraph& graph) {
    std::vector<std::string> names;
    for (const auto& layer : graph.layers) {
        append_param_names(layer, false, names);
    }
    return names;
}

std::vector<std::string> all_param_names(const ModelGraph& graph) {
    std::vector<std::string> names;
    for (const auto& layer : graph.layers) {
        append_param_names(layer, true, names);
    }
    return names;
}

ParamStore init_params(const ModelGraph& graph, std::uint64_t seed) {
    Rng rng(seed);
    ParamStore store;
    for (const auto& layer : graph.layers) {
        init_layer_params(layer, rng, store);
    }
    return store;
}

namespace {

std::vector<LayerSpec> mini5_layers(const TensorSpec& input_spec,
                                    std::size_t num_classes) {
    if (input_spec.shape.size() != 3) {
        throw ShapeError("mini5 expects a C x H x W input, got " +
                         shape_to_string(input_spec.shape));
    }
    const std::size_t in_ch = input_spec.shape[0];
    std::vector<LayerSpec> layers;
    layers.push_back(make_conv2d("conv1", in_ch, 16, 3, 1, 1));
    layers.push_back(make_relu("relu1"));
    layers.push_back(make_maxpool2d("pool1", 2));
    layers.push_back(make_conv2d("conv2", 16, 32, 3, 1, 1));
    layers.push_back(make_relu("relu2"));
    layers.push_back(make_maxpool2d("pool2", 2));
    layers.push_back(make_conv2d("conv3", 32, 64, 3, 1, 1));
    layers.push_back(make_relu("relu3"));
    layers.push_back(make_conv2d("conv4", 64, 64, 3, 1, 1));
    layers.push_back(make_relu("relu4"));
    layers.push_back(make_conv2d("conv5", 64, 64, 3, 1, 1));
    layers.push_back(make_relu("relu5"));
    layers.push_back(make_maxpool2d("pool5", 2));
    layers.push_back(make_flatten("flatten"));

    TensorSpec cur = input_spec;
    for (const auto& l : layers) cur = infer_output_spec(l, cur);
    layers.push_back(make_linear("fc1", cur.shape[0], 128));
    layers.push_back(make_relu("relu6"));
    layers.push_back(make_linear("fc2", 128, num_classes));
    return layers;
}

std::vector<LayerSpec> identity_res_block(const std::string& name,
                                          std::size_t channels) {
    std::vector<LayerSpec> body;
    body.push_back(make_conv2d(name + "_conv1", channels, channels, 3, 1, 1));
    body.push_back(make_batchnorm2d(name + "_bn1", channels));
    body.push_back(make_relu(name + "_relu"));
    body.push_back(make_conv2d(name + "_conv2", channels, channels, 3, 1, 1));
    body.push_back(make_batchnorm2d(name + "_bn2", channels));
    return body;
}

std::vector<LayerSpec> mini_res_layers(const TensorSpec& input_spec,
                                       std::size_t num_classes) {
    if (input_spec.shape.size() != 3) {
        throw ShapeError("mini-res expects a C x H x W input, got " +
                         shape_to_string(input_spec.shape));
    }
    const std::size_t in_ch = input_spec.shape[0];
    std::vector<LayerSpec> layers;
    layers.push_back(make_conv2d("stem_conv", in_ch, 16, 3, 1, 1));
    layers.push_back(make_batchnorm2d("stem_bn", 16));
    layers.push_back(make_relu("stem_relu"));
    layers.push_back(
        make_residual_block("block1", identity_res_block("block1", 16)));
    layers.push_back(make_relu("block1_out_relu"));
    layers.push_back(make_maxpool2d("block1_pool", 2));
    layers.push_back(make_conv2d("stage2_conv", 16, 32, 3, 1, 1));
    layers.push_back(make_batchnorm2d("stage2_bn", 32));
    layers.push_back(make_relu("stage2_relu"));
    layers.push_back(
        make_residual_block("block2", identity_res_block("block2", 32)));
    layers.push_back(make_relu("block2_out_relu"));
    layers.push_back(make_maxpool2d("block2_pool", 2));
    layers.push_back(make_conv2d("stage3_conv", 32, 64, 3, 1, 1));
    layers.push_back(make_batchnorm2d("stage3_bn", 64));
    layers.push_back(make_relu("stage3_relu"));
    layers.push_back(
        make_residual_block("block3", identity_res_block("block3", 64)));
    layers.push_back(make_relu("block3_out_relu"));
    layers.push_back(make_maxpool2d("block3_pool", 2));
    layers.push_back(make_flatten("flatten"));

    TensorSpec cur = input_spec;
    for (const auto& l : layers) cur = infer_output_spec(l, cur);
    layers.push_back(make_linear("fc1", cur.shape[0], 128));
    layers.push_back(make_relu("fc1_relu"));
    layers.push_back(make_linear("fc2", 128, num_classes));
    return layers;
}

std::vector<LayerSpec> mlp_layers(const TensorSpec& input_spec,
                                  std::size_t num_classes) {
    std::vector<LayerSpec> layers;
    TensorSpec cur = input_spec;
    if (cur.shape.size() > 1) {
        layers.push_back(make_flatten("mlp_flatten"));
        cur = TensorSpec{{cur.numel()}, cur.dtype};
    }
    layers.push_back(make_linear("mlp_fc1", cur.shape[0], 256));
    layers.push_back(make_relu("mlp_relu"));
    layers.push_back(make_linear("mlp_fc2", 256, num_classes));
    return layers;
}

}  // namespace

std::vector<LayerSpec> reference_arch_layers(const std::string& arch,
                                             const TensorSpec& input_spec,
                                             std::size_t num_classes) {
    if (arch == "mini5") return mini5_layers(input_spec, num_classes);
    if (arch == "mini-res") return mini_res_layers(input_spec, num_classes);
    if (arch == "mlp") return mlp_layers(input_spec, num_classes);
    throw InvalidArgument("unknown architecture: " + arch);
}

BuiltModel build_model(std::vector<LayerSpec> layers,
                       const TensorSpec& input_spec, std::size_t num_classes,
                       std::uint64_t seed) {
    ModelGraph graph{std::move(layers), input_spec, num_classes};
    validate_graph(graph);
    ParamStore params = init_params(graph, seed);
    return {std::move(graph), std::move(params)};
}

BuiltModel build_model(const std::string& arch, const TensorSpec& input_spec,
                       std::size_t num_classes, std::uint64_t seed) {
    return build_model(reference_arch_layers(arch, input_spec, num_classes),
                       input_spec, num_classes, seed);
}

}  // namespace splitkit
