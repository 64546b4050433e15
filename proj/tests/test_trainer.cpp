#include <cmath>
#include <vector>

#include "doctest.h"
#include "splitkit/errors.hpp"
#include "splitkit/loss.hpp"
#include "splitkit/model.hpp"
#include "splitkit/trainer.hpp"
#include "test_util.hpp"

using namespace splitkit;
using namespace splitkit::testutil;

namespace {

// Two-class set, label = sign of the sum of the first two features.
Dataset toy_separable(std::size_t n, std::uint64_t seed) {
    Dataset d;
    d.name = "toy";
    d.images = Tensor({n, 4});
    d.labels.resize(n);
    d.task = TaskSpec{TaskKind::User, 2, "separable toy"};
    d.source.kind = "synthetic";
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        double margin = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            const double v = rng.normal();
            d.images[i * 4 + j] = v;
            if (j < 2) margin += v;
        }
        d.labels[i] = margin > 0.0 ? 1 : 0;
    }
    return d;
}

BuiltModel toy_model(std::uint64_t seed) {
    return build_model({make_linear("fc1", 4, 8), make_relu("r"),
                        make_linear("fc2", 8, 2)},
                       TensorSpec{{4}, Dtype::Float64}, 2, seed);
}

}  // namespace

TEST_CASE("label_smoothed_ce: uniform logits give ln C for any epsilon") {
    Tensor logits({4, 10});
    logits.fill(0.7);
    std::vector<int> targets = {0, 3, 9, 5};
    for (double eps : {0.0, 0.1, 0.5}) {
        CHECK(label_smoothed_ce(logits, targets, eps) ==
              doctest::Approx(std::log(10.0)).epsilon(1e-12));
    }
}

TEST_CASE("label_smoothed_ce: epsilon zero reduces to cross-entropy") {
    Tensor logits = tensor_of({2, 3}, {2.0, -1.0, 0.5, 0.0, 1.0, -2.0});
    std::vector<int> targets = {0, 1};
    double manual = 0.0;
    for (std::size_t b = 0; b < 2; ++b) {
        double denom = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            denom += std::exp(logits.at2(b, k));
        }
        manual -= logits.at2(b, targets[b]) - std::log(denom);
    }
    manual /= 2.0;
    CHECK(label_smoothed_ce(logits, targets, 0.0) ==
          doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("label_smoothed_ce: hand-computed smoothed case") {
    // One row, C = 2: q = {1 - eps/2, eps/2} for target 0.
    Tensor logits = tensor_of({1, 2}, {1.0, -1.0});
    const double eps = 0.2;
    const double lse = std::log(std::exp(1.0) + std::exp(-1.0));
    const double expected = lse - (0.9 * 1.0 + 0.1 * -1.0);
    CHECK(label_smoothed_ce(logits, {0}, eps) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("label_smoothed_ce: rejects bad targets and non-finite logits") {
    Tensor logits({2, 3});
    CHECK_THROWS_AS(label_smoothed_ce(logits, {0, 3}, 0.1), InvalidArgument);
    CHECK_THROWS_AS(label_smoothed_ce(logits, {0}, 0.1), ShapeError);
    logits[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(label_smoothed_ce(logits, {0, 1}, 0.1), NumericError);
}

TEST_CASE("squared_error_loss: hand case") {
    Tensor logits = tensor_of({1, 2}, {0.5, -0.5});
    // 0.5 * ((0.5-1)^2 + (-0.5)^2) = 0.25
    CHECK(squared_error_loss(logits, {0}) == doctest::Approx(0.25));
}

TEST_CASE("predict_classes: row argmax") {
    Tensor logits = tensor_of({3, 3}, {1, 2, 0, 5, 5, 6, -1, -3, -2});
    CHECK(predict_classes(logits) == std::vector<int>{1, 2, 0});
}

TEST_CASE("scheduled_lr: milestone decay") {
    TrainConfig config;
    config.lr = 0.2;
    config.epochs = 8;
    config.milestones = {0.5, 0.75};
    config.lr_factor = 0.1;
    for (std::size_t e = 0; e < 4; ++e) {
        CHECK(scheduled_lr(config, e) == doctest::Approx(0.2));
    }
    CHECK(scheduled_lr(config, 4) == doctest::Approx(0.02));
    CHECK(scheduled_lr(config, 5) == doctest::Approx(0.02));
    CHECK(scheduled_lr(config, 6) == doctest::Approx(0.002));
    CHECK(scheduled_lr(config, 7) == doctest::Approx(0.002));
}

TEST_CASE("sgd_step: one-step arithmetic") {
    ParamStore params;
    params.tensors["w"] = tensor_of({1}, {1.0});
    std::map<std::string, Tensor> grads;
    grads["w"] = tensor_of({1}, {0.5});
    SgdState state;
    TrainConfig config;
    config.momentum = 0.9;
    config.weight_decay = 0.0;

    sgd_step(params, grads, state, config, 0.1);
    CHECK(state.velocity.at("w")[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(params.at("w")[0] == doctest::Approx(0.95).epsilon(1e-15));

    // Constant gradient accumulates: v2 = g * (1 + momentum).
    sgd_step(params, grads, state, config, 0.1);
    CHECK(state.velocity.at("w")[0] ==
          doctest::Approx(0.5 * 1.9).epsilon(1e-15));
    CHECK(params.at("w")[0] ==
          doctest::Approx(0.95 - 0.1 * 0.95).epsilon(1e-15));
}

TEST_CASE("sgd_step: momentum zero is plain gradient descent") {
    ParamStore params;
    params.tensors["w"] = tensor_of({2}, {1.0, -2.0});
    std::map<std::string, Tensor> grads;
    grads["w"] = tensor_of({2}, {0.25, -1.0});
    SgdState state;
    TrainConfig config;
    config.momentum = 0.0;
    config.weight_decay = 0.0;

    sgd_step(params, grads, state, config, 0.2);
    CHECK(params.at("w")[0] == doctest::Approx(1.0 - 0.2 * 0.25));
    CHECK(params.at("w")[1] == doctest::Approx(-2.0 + 0.2));
}

TEST_CASE("sgd_step: weight decay couples into the gradient") {
    ParamStore params;
    params.tensors["w"] = tensor_of({1}, {2.0});
    std::map<std::string, Tensor> grads;
    grads["w"] = tensor_of({1}, {0.0});
    SgdState state;
    TrainConfig config;
    config.momentum = 0.0;
    config.weight_decay = 0.1;

    sgd_step(params, grads, state, config, 0.5);
    // v = 0 + (0 + 0.1 * 2) = 0.2; w = 2 - 0.5 * 0.2 = 1.9
    CHECK(params.at("w")[0] == doctest::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("sgd_step: refuses non-finite gradients, parameters untouched") {
    ParamStore params;
    params.tensors["w"] = tensor_of({1}, {1.0});
    std::map<std::string, Tensor> grads;
    grads["w"] = tensor_of({1}, {std::numeric_limits<double>::infinity()});
    SgdState state;
    TrainConfig config;
    CHECK_THROWS_AS(sgd_step(params, grads, state, config, 0.1),
                    NumericError);
    CHECK(params.at("w")[0] == 1.0);
}

TEST_CASE("train: separable toy set reaches 0.95 validation accuracy") {
    Dataset train_set = toy_separable(600, 21);
    Dataset val_set = toy_separable(200, 22);
    BuiltModel model = toy_model(23);

    TrainConfig config;
    config.lr = 0.1;
    config.epochs = 20;
    config.batch_size = 32;
    config.seed = 24;

    auto mask = ParamMask::of(all_param_names(model.graph));
    TrainReport report = train(model.graph, model.params, train_set, val_set,
                               config, mask);
    REQUIRE(report.epoch_log.size() == config.epochs);
    CHECK(report.best_val_accuracy >= 0.95);
    CHECK(report.epoch_log.back().loss < report.epoch_log.front().loss);

    // The logged learning rate follows the milestone schedule exactly.
    for (std::size_t e = 0; e < config.epochs; ++e) {
        CHECK(report.epoch_log[e].lr == scheduled_lr(config, e));
    }

    // Returned parameters are the best-validation snapshot.
    CHECK(evaluate(model.graph, model.params, val_set) ==
          doctest::Approx(report.best_val_accuracy));
}

TEST_CASE("train: deterministic given the seed") {
    Dataset train_set = toy_separable(300, 31);
    Dataset val_set = toy_separable(100, 32);

    auto run = [&] {
        BuiltModel model = toy_model(33);
        TrainConfig config;
        config.lr = 0.05;
        config.epochs = 5;
        config.batch_size = 16;
        config.seed = 34;
        auto mask = ParamMask::of(all_param_names(model.graph));
        TrainReport report = train(model.graph, model.params, train_set,
                                   val_set, config, mask);
        return std::pair{report, model.params};
    };

    auto [r1, p1] = run();
    auto [r2, p2] = run();
    CHECK(r1.final_train_loss == r2.final_train_loss);
    CHECK(r1.best_val_accuracy == r2.best_val_accuracy);
    REQUIRE(r1.epoch_log.size() == r2.epoch_log.size());
    for (std::size_t e = 0; e < r1.epoch_log.size(); ++e) {
        CHECK(r1.epoch_log[e].loss == r2.epoch_log[e].loss);
        CHECK(r1.epoch_log[e].val_accuracy == r2.epoch_log[e].val_accuracy);
    }
    for (const auto& [name, tensor] : p1.tensors) {
        CHECK(p2.at(name) == tensor);
    }
}

TEST_CASE("train: zero epochs is a no-op") {
    Dataset train_set = toy_separable(300, 41);
    Dataset val_set = toy_separable(100, 42);
    BuiltModel model = toy_model(43);
    ParamStore before = model.params;

    TrainConfig config;
    config.epochs = 0;
    auto mask = ParamMask::of(all_param_names(model.graph));
    TrainReport report = train(model.graph, model.params, train_set, val_set,
                               config, mask);
    CHECK(report.epoch_log.empty());
    for (const auto& [name, tensor] : before.tensors) {
        CHECK(model.params.at(name) == tensor);
    }
}

TEST_CASE("train: tensors outside the mask stay bitwise unchanged") {
    Dataset train_set = toy_separable(200, 51);
    Dataset val_set = toy_separable(80, 52);

    BuiltModel model = build_model(
        {make_conv2d("conv", 1, 2, 3, 1, 1), make_batchnorm2d("bn", 2),
         make_relu("r"), make_flatten("flat"), make_linear("fc", 8, 2)},
        TensorSpec{{1, 2, 2}, Dtype::Float64}, 2, 53);

    // Reshape the toy features into 1x2x2 images.
    Dataset imgs_train = train_set;
    imgs_train.images = Tensor({train_set.samples(), 1, 2, 2});
    imgs_train.images.values() = train_set.images.values();
    Dataset imgs_val = val_set;
    imgs_val.images = Tensor({val_set.samples(), 1, 2, 2});
    imgs_val.images.values() = val_set.images.values();

    ParamStore before = model.params;
    TrainConfig config;
    config.lr = 0.05;
    config.epochs = 3;
    config.batch_size = 16;
    config.seed = 54;

    auto head_only = ParamMask::of({"fc.weight", "fc.bias"});
    train(model.graph, model.params, imgs_train, imgs_val, config, head_only);

    for (const auto& [name, tensor] : before.tensors) {
        if (name == "fc.weight" || name == "fc.bias") continue;
        CHECK(model.params.at(name) == tensor);
    }
    CHECK_FALSE(model.params.at("fc.weight") == before.at("fc.weight"));

    // A full mask lets training update the batchnorm running statistics.
    BuiltModel full = build_model(
        {make_conv2d("conv", 1, 2, 3, 1, 1), make_batchnorm2d("bn", 2),
         make_relu("r"), make_flatten("flat"), make_linear("fc", 8, 2)},
        TensorSpec{{1, 2, 2}, Dtype::Float64}, 2, 53);
    auto everything = ParamMask::of(all_param_names(full.graph));
    train(full.graph, full.params, imgs_train, imgs_val, config, everything);
    CHECK_FALSE(full.params.at("bn.running_mean") ==
                before.at("bn.running_mean"));
}

TEST_CASE("train: divergence raises a numeric error") {
    Dataset train_set = toy_separable(200, 61);
    Dataset val_set = toy_separable(80, 62);
    BuiltModel model = toy_model(63);
    TrainConfig config;
    config.lr = 1e12;
    config.epochs = 5;
    config.batch_size = 16;
    CHECK_THROWS_AS(train(model.graph, model.params, train_set, val_set,
                          config, ParamMask::of(all_param_names(model.graph))),
                    NumericError);
}

TEST_CASE("train: empty mask rejected") {
    Dataset train_set = toy_separable(200, 71);
    Dataset val_set = toy_separable(80, 72);
    BuiltModel model = toy_model(73);
    TrainConfig config;
    CHECK_THROWS_AS(train(model.graph, model.params, train_set, val_set,
                          config, ParamMask{}),
                    InvalidArgument);
}

TEST_CASE("evaluate: constant predictor on one-class labels") {
    Dataset set = toy_separable(100, 81);
    for (auto& label : set.labels) label = 0;

    BuiltModel model = build_model({make_linear("fc", 4, 2)},
                                   TensorSpec{{4}, Dtype::Float64}, 2, 82);
    model.params.at("fc.weight").fill(0.0);
    model.params.at("fc.bias").values() = {1.0, 0.0};
    CHECK(evaluate(model.graph, model.params, set) == 1.0);
}

TEST_CASE("evaluate: fixed predictor on independent labels is near chance") {
    const std::size_t n = 10000;
    Dataset set;
    set.name = "chance";
    set.images = Tensor({n, 4});
    set.labels.resize(n);
    set.task = TaskSpec{TaskKind::User, 10, "chance"};
    Rng rng(91);
    for (std::size_t i = 0; i < n * 4; ++i) set.images[i] = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
        set.labels[i] = static_cast<int>(rng.uniform_int(10));
    }

    BuiltModel model = build_model({make_linear("fc", 4, 10)},
                                   TensorSpec{{4}, Dtype::Float64}, 10, 92);
    double accuracy = evaluate(model.graph, model.params, set);
    CHECK(accuracy > 0.1 - 0.02);
    CHECK(accuracy < 0.1 + 0.02);
}

TEST_CASE("commit_batchnorm_stats: exponential update with momentum 0.1") {
    ParamStore params;
    params.tensors["bn.running_mean"] = tensor_of({2}, {0.0, 1.0});
    params.tensors["bn.running_var"] = tensor_of({2}, {1.0, 2.0});

    BatchNormStats stats{"bn", {4.0, 5.0}, {9.0, 16.0}};
    commit_batchnorm_stats(params, {stats},
                           ParamMask::of({"bn.running_mean",
                                          "bn.running_var"}));
    CHECK(params.at("bn.running_mean")[0] == doctest::Approx(0.4));
    CHECK(params.at("bn.running_mean")[1] == doctest::Approx(0.9 + 0.5));
    CHECK(params.at("bn.running_var")[0] == doctest::Approx(0.9 + 0.9));
    CHECK(params.at("bn.running_var")[1] == doctest::Approx(1.8 + 1.6));

    // Outside the mask nothing moves.
    ParamStore frozen;
    frozen.tensors["bn.running_mean"] = tensor_of({2}, {0.0, 1.0});
    frozen.tensors["bn.running_var"] = tensor_of({2}, {1.0, 2.0});
    commit_batchnorm_stats(frozen, {stats}, ParamMask::of({"other.weight"}));
    CHECK(frozen.at("bn.running_mean")[1] == 1.0);
}

TEST_CASE("train config validation") {
    TrainConfig config;
    config.validate();
    config.lr = 0.0;
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
    config.lr = 0.1;
    config.momentum = 1.0;
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
    config.momentum = 0.9;
    config.epsilon = 1.0;
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
    config.epsilon = 0.1;
    config.batch_size = 0;
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
    config.batch_size = 64;
    config.milestones = {1.5};
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
}
