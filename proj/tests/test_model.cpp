#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "splitkit/errors.hpp"
#include "splitkit/model.hpp"

using namespace splitkit;

namespace {

std::size_t total(const std::vector<LayerProfile>& profiles,
                  std::size_t LayerProfile::*field) {
    std::size_t sum = 0;
    for (const auto& p : profiles) sum += p.*field;
    return sum;
}

}  // namespace

TEST_CASE("profile: conv cost by hand") {
    ModelGraph graph;
    graph.layers = {make_conv2d("conv", 3, 16, 3, 1, 1)};
    graph.input_spec = TensorSpec{{3, 32, 32}, Dtype::Float64};
    graph.num_classes = 2;

    auto profiles = profile(graph);
    REQUIRE(profiles.size() == 1);
    CHECK(profiles[0].params == 16 * 3 * 9 + 16);  // 448
    CHECK(profiles[0].flops == 2ull * 3 * 16 * 9 * 32 * 32);  // 884736
    CHECK(profiles[0].output_spec.shape ==
          std::vector<std::size_t>{16, 32, 32});
}

TEST_CASE("profile: linear cost by hand") {
    ModelGraph graph;
    graph.layers = {make_linear("fc", 64, 10)};
    graph.input_spec = TensorSpec{{64}, Dtype::Float64};
    graph.num_classes = 10;

    auto profiles = profile(graph);
    REQUIRE(profiles.size() == 1);
    CHECK(profiles[0].params == 650);
    CHECK(profiles[0].flops == 1280);
}

TEST_CASE("profile: relu is parameterless, one op per element") {
    ModelGraph graph;
    graph.layers = {make_relu("r")};
    graph.input_spec = TensorSpec{{4, 5, 5}, Dtype::Float64};
    graph.num_classes = 2;
    auto profiles = profile(graph);
    CHECK(profiles[0].params == 0);
    CHECK(profiles[0].flops == 100);
}

TEST_CASE("profile: pooling, batchnorm, residual conventions") {
    ModelGraph graph;
    graph.layers = {
        make_maxpool2d("pool", 2),
        make_batchnorm2d("bn", 4),
        make_residual_block("res", {make_conv2d("c", 4, 4, 3, 1, 1),
                                    make_relu("cr")}),
    };
    graph.input_spec = TensorSpec{{4, 8, 8}, Dtype::Float64};
    graph.num_classes = 2;

    auto profiles = profile(graph);
    REQUIRE(profiles.size() == 3);
    CHECK(profiles[0].flops == 4 * 4 * 4);  // pooled elements
    CHECK(profiles[1].params == 2 * 4);     // scale and shift
    CHECK(profiles[1].flops == 2 * 4 * 4 * 4);
    // body conv + body relu + skip addition
    const std::size_t body_conv = 2ull * 9 * 4 * 4 * 4 * 4;
    CHECK(profiles[2].flops == body_conv + 64 + 64);
    CHECK(profiles[2].params == 4 * 4 * 9 + 4);
}

TEST_CASE("mini5: registered trunk at 28x28") {
    BuiltModel model =
        build_model("mini5", TensorSpec{{1, 28, 28}, Dtype::Float64}, 10, 1);
    validate_graph(model.graph);

    std::size_t convs = 0, linears = 0;
    for (const auto& layer : model.graph.layers) {
        convs += layer.kind == LayerKind::Conv2d;
        linears += layer.kind == LayerKind::Linear;
    }
    CHECK(convs == 5);
    CHECK(linears == 2);

    auto profiles = profile(model.graph);
    CHECK(total(profiles, &LayerProfile::params) == 172298);

    auto shapes = infer_shapes(model.graph);
    CHECK(shapes.back().shape == std::vector<std::size_t>{10});
}

TEST_CASE("mini5: class count parametrizes the output layer") {
    BuiltModel model =
        build_model("mini5", TensorSpec{{1, 28, 28}, Dtype::Float64}, 2, 1);
    const auto& last = model.graph.layers.back();
    CHECK(last.kind == LayerKind::Linear);
    CHECK(last.out_features == 2);
}

TEST_CASE("mini-res: three residual blocks") {
    BuiltModel model =
        build_model("mini-res", TensorSpec{{1, 28, 28}, Dtype::Float64}, 10, 1);
    validate_graph(model.graph);
    std::size_t blocks = 0;
    for (const auto& layer : model.graph.layers) {
        blocks += layer.kind == LayerKind::ResidualBlock;
    }
    CHECK(blocks == 3);
}

TEST_CASE("build_model: unknown architecture rejected") {
    CHECK_THROWS_AS(build_model("resnet152",
                                TensorSpec{{1, 28, 28}, Dtype::Float64}, 10, 1),
                    InvalidArgument);
}

TEST_CASE("build_model: shape-chain mismatch names the offending layer") {
    std::vector<LayerSpec> layers = {
        make_conv2d("first", 3, 8, 3, 1, 1),
        make_conv2d("second", 16, 8, 3, 1, 1),  // expects 16, gets 8
    };
    try {
        build_model(layers, TensorSpec{{3, 16, 16}, Dtype::Float64}, 2, 1);
        FAIL("expected ShapeError");
    } catch (const ShapeError& err) {
        CHECK(std::string(err.what()).find("second") != std::string::npos);
    }
}

TEST_CASE("build_model: duplicate layer names rejected") {
    std::vector<LayerSpec> layers = {
        make_relu("same"),
        make_relu("same"),
    };
    CHECK_THROWS(build_model(layers, TensorSpec{{3, 8, 8}, Dtype::Float64},
                             2, 1));
}

TEST_CASE("residual block: body must preserve the shape") {
    std::vector<LayerSpec> layers = {
        make_residual_block("res", {make_conv2d("widen", 4, 8, 3, 1, 1)}),
    };
    CHECK_THROWS_AS(build_model(layers, TensorSpec{{4, 8, 8}, Dtype::Float64},
                                2, 1),
                    ShapeError);
}

TEST_CASE("init_params: deterministic, complete, batchnorm identity") {
    BuiltModel model =
        build_model("mini-res", TensorSpec{{1, 28, 28}, Dtype::Float64}, 4, 9);
    ParamStore again = init_params(model.graph, 9);
    for (const auto& [name, tensor] : model.params.tensors) {
        CHECK(again.at(name) == tensor);
    }
    ParamStore other = init_params(model.graph, 10);
    bool any_diff = false;
    for (const auto& [name, tensor] : other.tensors) {
        any_diff |= !(model.params.at(name) == tensor);
    }
    CHECK(any_diff);

    bool saw_bn = false;
    for (const auto& [name, tensor] : model.params.tensors) {
        auto pos = name.find(".running_mean");
        if (pos == std::string::npos) continue;
        saw_bn = true;
        const std::string prefix = name.substr(0, pos);
        const Tensor& scale = model.params.at(prefix + ".weight");
        const Tensor& shift = model.params.at(prefix + ".bias");
        const Tensor& var = model.params.at(prefix + ".running_var");
        for (std::size_t i = 0; i < tensor.numel(); ++i) {
            CHECK(tensor[i] == 0.0);
            CHECK(scale[i] == 1.0);
            CHECK(shift[i] == 0.0);
            CHECK(var[i] == 1.0);
        }
    }
    CHECK(saw_bn);
}

TEST_CASE("param name lists: trainable subset of all") {
    BuiltModel model =
        build_model("mini-res", TensorSpec{{1, 28, 28}, Dtype::Float64}, 4, 9);
    auto trainable = trainable_param_names(model.graph);
    auto all = all_param_names(model.graph);
    CHECK(trainable.size() < all.size());
    std::set<std::string> all_set(all.begin(), all.end());
    for (const auto& name : trainable) CHECK(all_set.count(name) == 1);
    for (const auto& name : all) CHECK(model.params.contains(name));
    CHECK(model.params.tensors.size() == all.size());
}

TEST_CASE("infer_output_spec: conv and pool geometry") {
    auto conv = make_conv2d("c", 3, 8, 5, 2, 2);
    TensorSpec in{{3, 17, 17}, Dtype::Float64};
    auto out = infer_output_spec(conv, in);
    // floor((17 + 2*2 - 5)/2) + 1 = 9
    CHECK(out.shape == std::vector<std::size_t>{8, 9, 9});

    auto pool = make_maxpool2d("p", 2);
    auto pooled = infer_output_spec(pool, out);
    CHECK(pooled.shape == std::vector<std::size_t>{8, 4, 4});
}
