#include "splitkit/split.hpp"

#include <algorithm>

#include "splitkit/errors.hpp"

namespace splitkit {

std::vector<CutPoint> enumerate_cutpoints(const ModelGraph& graph) {
    validate_graph(graph);
    const bool has_blocks =
        std::any_of(graph.layers.begin(), graph.layers.end(),
                    [](const LayerSpec& l) {
                        return l.kind == LayerKind::ResidualBlock;
                    });
    std::vector<CutPoint> cuts;
    std::size_t ordinal = 0;
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const LayerKind kind = graph.layers[i].kind;
        if (has_blocks ? kind == LayerKind::ResidualBlock
                       : kind == LayerKind::Conv2d) {
            ++ordinal;
            cuts.push_back(
                {i, (has_blocks ? "block" : "conv") + std::to_string(ordinal)});
        }
    }
    return cuts;
}

std::size_t cut_group_end(const ModelGraph& graph, std::size_t anchor_index) {
    if (anchor_index >= graph.layers.size()) {
        throw InvalidArgument("cut index out of range");
    }
    std::size_t end = anchor_index;
    while (end + 1 < graph.layers.size()) {
        const LayerKind kind = graph.layers[end + 1].kind;
        if (kind == LayerKind::Relu || kind == LayerKind::MaxPool2d ||
            kind == LayerKind::BatchNorm2d) {
            ++end;
        } else {
            break;
        }
    }
    return end;
}

namespace {

void validate_cut(const ModelGraph& graph, const CutPoint& cut) {
    const auto cuts = enumerate_cutpoints(graph);
    const bool known = std::any_of(
        cuts.begin(), cuts.end(), [&](const CutPoint& c) {
            return c.index == cut.index && c.label == cut.label;
        });
    if (!known) {
        throw InvalidArgument("cut " + cut.label + " (index " +
                              std::to_string(cut.index) +
                              ") is not an enumerated cut point");
    }
}

void gather_side_params(const std::vector<LayerSpec>& layers,
                        const ParamStore& params, ParamStore& side) {
    std::vector<std::string> names;
    for (const auto& layer : layers) {
        ModelGraph probe;
        probe.layers = {layer};
        for (const auto& name : all_param_names(probe)) names.push_back(name);
    }
    for (const auto& name : names) {
        side.tensors.emplace(name, params.at(name));
    }
    side.version = params.version;
}

}  // namespace

SplitModel split(const ModelGraph& graph, const ParamStore& params,
                 const CutPoint& cut) {
    validate_cut(graph, cut);
    const auto specs = infer_shapes(graph);
    const std::size_t boundary = cut_group_end(graph, cut.index);
    if (boundary + 1 >= graph.layers.size()) {
        throw InvalidArgument("cut " + cut.label +
                              " leaves an empty cloud half");
    }

    SplitModel out;
    out.cut = cut;
    out.interface_spec = specs[boundary];

    out.edge.layers.assign(graph.layers.begin(),
                           graph.layers.begin() + boundary + 1);
    out.edge.input_spec = graph.input_spec;
    out.edge.num_classes = graph.num_classes;

    out.cloud.layers.assign(graph.layers.begin() + boundary + 1,
                            graph.layers.end());
    out.cloud.input_spec = out.interface_spec;
    out.cloud.num_classes = graph.num_classes;

    gather_side_params(out.edge.layers, params, out.edge_params);
    gather_side_params(out.cloud.layers, params, out.cloud_params);
    return out;
}

EdgeRatios edge_ratio(const ModelGraph& graph, const CutPoint& cut,
                      const TensorSpec& input_spec) {
    validate_cut(graph, cut);
    const auto profiles = profile(graph, input_spec);
    const std::size_t boundary = cut_group_end(graph, cut.index);

    double edge_flops = 0.0, edge_params = 0.0;
    double total_flops = 0.0, total_params = 0.0;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        total_flops += static_cast<double>(profiles[i].flops);
        total_params += static_cast<double>(profiles[i].params);
        if (i <= boundary) {
            edge_flops += static_cast<double>(profiles[i].flops);
            edge_params += static_cast<double>(profiles[i].params);
        }
    }
    EdgeRatios ratios;
    ratios.flops_ratio = total_flops > 0.0 ? edge_flops / total_flops : 0.0;
    ratios.params_ratio =
        total_params > 0.0 ? edge_params / total_params : 0.0;
    return ratios;
}

EdgeRatios edge_ratio(const ModelGraph& graph, const CutPoint& cut) {
    return edge_ratio(graph, cut, graph.input_spec);
}

}  // namespace splitkit
