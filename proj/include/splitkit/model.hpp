#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/checkpoint.hpp"
#include "splitkit/tensor.hpp"

namespace splitkit {

enum class LayerKind {
    Conv2d,
    Linear,
    Relu,
    MaxPool2d,
    BatchNorm2d,
    Flatten,
    ResidualBlock,
};

std::string layer_kind_name(LayerKind kind);

// One layer of a feed-forward graph.  Only the fields for the given kind
// are meaningful; validate_layer enforces completeness.
struct LayerSpec {
    LayerKind kind{};
    std::string name;

    // conv2d
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    // linear
    std::size_t in_features = 0;
    std::size_t out_features = 0;

    // maxpool2d (square window, stride = window)
    std::size_t pool = 0;

    // batchnorm2d
    std::size_t channels = 0;

    // residual_block: inner layers; input and output spec must match
    std::vector<LayerSpec> body;
};

LayerSpec make_conv2d(std::string name, std::size_t in_channels,
                      std::size_t out_channels, std::size_t kernel,
                      std::size_t stride = 1, std::size_t padding = 0);
LayerSpec make_linear(std::string name, std::size_t in_features,
                      std::size_t out_features);
LayerSpec make_relu(std::string name);
LayerSpec make_maxpool2d(std::string name, std::size_t pool);
LayerSpec make_batchnorm2d(std::string name, std::size_t channels);
LayerSpec make_flatten(std::string name);
LayerSpec make_residual_block(std::string name, std::vector<LayerSpec> body);

// Ordered feed-forward model over single-sample input_spec (no batch dim).
struct ModelGraph {
    std::vector<LayerSpec> layers;
    TensorSpec input_spec;
    std::size_t num_classes = 0;
};

// Output spec of a single layer for the given input spec.
TensorSpec infer_output_spec(const LayerSpec& layer, const TensorSpec& in);

// Per-layer output specs; throws ShapeError naming the offending layer if
// the chain is inconsistent.  Also enforces unique layer names.
std::vector<TensorSpec> infer_shapes(const ModelGraph& graph);

void validate_graph(const ModelGraph& graph);

struct LayerProfile {
    std::string name;
    std::size_t params = 0;
    std::size_t flops = 0;
    TensorSpec output_spec;
};

// Cost model per layer: conv = 2*Kh*Kw*Cin*Cout*Hout*Wout, linear = 2*in*out
// (bias excluded from FLOPs, included in params), relu/pool = 1 op per output
// element, batchnorm = 2 ops per element, residual = body + 1 op per element
// for the skip addition.
std::vector<LayerProfile> profile(const ModelGraph& graph);
std::vector<LayerProfile> profile(const ModelGraph& graph,
                                  const TensorSpec& input_spec);

// Fan-in-scaled uniform init for conv/linear weights and biases; batchnorm
// scale 1, shift 0, running mean 0, running var 1.
ParamStore init_params(const ModelGraph& graph, std::uint64_t seed);

// Qualified names of trainable tensors (weights/biases), graph order.
std::vector<std::string> trainable_param_names(const ModelGraph& graph);
// All tensor names including batchnorm running statistics.
std::vector<std::string> all_param_names(const ModelGraph& graph);

struct BuiltModel {
    ModelGraph graph;
    ParamStore params;
};

// Registered reference architectures: "mini5" (five conv cut points, two
// linear layers), "mini-res" (three residual blocks), "mlp" (flatten,
// hidden 256, output).
BuiltModel build_model(const std::string& arch, const TensorSpec& input_spec,
                       std::size_t num_classes, std::uint64_t seed);
BuiltModel build_model(std::vector<LayerSpec> layers,
                       const TensorSpec& input_spec, std::size_t num_classes,
                       std::uint64_t seed);

std::vector<LayerSpec> reference_arch_layers(const std::string& arch,
                                             const TensorSpec& input_spec,
                                             std::size_t num_classes);

}  // namespace splitkit
