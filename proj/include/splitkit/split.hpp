#pragma once

#include <string>
#include <vector>

#include "splitkit/model.hpp"

namespace splitkit {

// A legal partition anchor: the index of a conv2d layer or residual_block.
// The edge half extends past the anchor through any directly following
// batchnorm/relu/pool layers, so the transmitted activation is the output
// of the full conv-bn-relu(-pool) group.
struct CutPoint {
    std::size_t index = 0;
    std::string label;
};

inline const char* kCutConvention =
    "cut after the anchor's conv-bn-relu-pool group";

struct SplitModel {
    ModelGraph edge;
    ParamStore edge_params;
    ModelGraph cloud;
    ParamStore cloud_params;
    CutPoint cut;
    TensorSpec interface_spec;
};

// Conv-anchored cuts ("conv1".."convN"); when the graph contains residual
// blocks, cuts are at block boundaries only ("block1".."blockN").  Graphs
// with neither yield an empty list.
std::vector<CutPoint> enumerate_cutpoints(const ModelGraph& graph);

// Index of the last layer on the edge side for the given anchor.
std::size_t cut_group_end(const ModelGraph& graph, std::size_t anchor_index);

SplitModel split(const ModelGraph& graph, const ParamStore& params,
                 const CutPoint& cut);

struct EdgeRatios {
    double flops_ratio = 0.0;
    double params_ratio = 0.0;
};

// Edge-side share of whole-model cost under the profile() conventions.
EdgeRatios edge_ratio(const ModelGraph& graph, const CutPoint& cut);
EdgeRatios edge_ratio(const ModelGraph& graph, const CutPoint& cut,
                      const TensorSpec& input_spec);

}  // namespace splitkit
