#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "splitkit/data.hpp"
#include "splitkit/defense.hpp"
#include "splitkit/errors.hpp"
#include "splitkit/model.hpp"
#include "splitkit/split.hpp"
#include "splitkit/trainer.hpp"
#include "test_util.hpp"

using namespace splitkit;
using namespace splitkit::testutil;

namespace {

struct DefenseFixture {
    PairedDatasets data;
    BuiltModel model;
    SplitModel cut;
    double clean_accuracy = 0.0;
};

std::vector<LayerSpec> tiny_layers(std::size_t classes) {
    return {
        make_conv2d("conv1", 1, 4, 3, 2, 1),
        make_relu("relu1"),
        make_maxpool2d("pool1", 2),
        make_flatten("flatten"),
        make_linear("fc", 4 * 7 * 7, classes),
    };
}

// A small trained split model shared across calibration tests.
const DefenseFixture& fixture() {
    static DefenseFixture fx = [] {
        DefenseFixture out;
        SyntheticParams params;
        params.n = 320;
        params.user_classes = 4;
        out.data = generate_synthetic(61, params);

        out.model =
            build_model(tiny_layers(4), TensorSpec{{1, 28, 28}}, 4, 62);
        auto parts = split_train_val(out.data.user, 0.2, 63);
        TrainConfig tc;
        tc.lr = 0.05;
        tc.epochs = 4;
        tc.batch_size = 32;
        tc.seed = 64;
        train(out.model.graph, out.model.params, parts.train, parts.val, tc,
              ParamMask::everything());

        auto cuts = enumerate_cutpoints(out.model.graph);
        REQUIRE(cuts.size() == 1);
        out.cut = split(out.model.graph, out.model.params, cuts[0]);
        out.clean_accuracy =
            evaluate(out.model.graph, out.model.params, out.data.user);
        return out;
    }();
    return fx;
}

Defense gaussian_defense(double sigma) {
    Defense d;
    d.config.strategy = DefenseStrategy::CalibratedGaussian;
    d.bank.sigma = sigma;
    return d;
}

}  // namespace

TEST_CASE("defense strategy names round-trip") {
    CHECK(defense_strategy_name(DefenseStrategy::CalibratedGaussian) ==
          "calibrated_gaussian");
    CHECK(defense_strategy_name(DefenseStrategy::LearnedBank) ==
          "learned_bank");
    CHECK(defense_strategy_name(DefenseStrategy::None) == "none");
    CHECK(defense_strategy_from_name("none") == DefenseStrategy::None);
    CHECK_THROWS_AS(defense_strategy_from_name("laplace"), InvalidArgument);
}

TEST_CASE("defense config validation") {
    DefenseConfig config;
    config.pa_target = 0.0;
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
    config.pa_target = 1.2;
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
    config.pa_target = 0.95;
    config.bank_size = 0;
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
    config.bank_size = 4;
    config.lambda = -0.1;
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
    config.lambda = 0.05;
    config.calibration_samples = 31;
    CHECK_THROWS_AS(config.validate(), InvalidArgument);
    config.calibration_samples = 32;
    CHECK_NOTHROW(config.validate());
}

TEST_CASE("apply_defense: strategy none is the identity") {
    Defense d;
    d.config.strategy = DefenseStrategy::None;
    Tensor a = random_tensor({4, 3, 2, 2}, 65);
    Tensor out = apply_defense(d, a, 99);
    CHECK(out == a);
}

TEST_CASE("apply_defense: sigma zero is the identity") {
    Tensor a = random_tensor({4, 8}, 66);
    CHECK(apply_defense(gaussian_defense(0.0), a, 99) == a);
}

TEST_CASE("apply_defense: gaussian deterministic per seed, shape kept") {
    Tensor a = random_tensor({5, 3, 4, 4}, 67);
    Defense d = gaussian_defense(0.5);
    Tensor n1 = apply_defense(d, a, 7);
    Tensor n2 = apply_defense(d, a, 7);
    Tensor n3 = apply_defense(d, a, 8);
    CHECK(n1.shape() == a.shape());
    CHECK(n1 == n2);
    CHECK_FALSE(n1 == n3);
    double mean_abs = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        mean_abs += std::abs(n1[i] - a[i]);
    }
    mean_abs /= static_cast<double>(a.numel());
    // E|N(0, 0.5)| = 0.5 * sqrt(2/pi) ~ 0.399
    CHECK(mean_abs > 0.2);
    CHECK(mean_abs < 0.6);

    Defense bad = gaussian_defense(-1.0);
    CHECK_THROWS_AS(apply_defense(bad, a, 1), InvalidArgument);
}

TEST_CASE("apply_defense: bank slots deterministic per seed") {
    Defense d;
    d.config.strategy = DefenseStrategy::LearnedBank;
    d.bank.tensors = {random_tensor({2, 3, 3}, 68),
                      random_tensor({2, 3, 3}, 69)};
    Tensor a = random_tensor({6, 2, 3, 3}, 70);
    Tensor n1 = apply_defense(d, a, 11);
    Tensor n2 = apply_defense(d, a, 11);
    CHECK(n1 == n2);
    // Every defended sample must equal the input plus one bank slot,
    // reproduced with the same addition so the match is bit-exact.
    for (std::size_t i = 0; i < 6; ++i) {
        bool matched = false;
        for (const Tensor& slot : d.bank.tensors) {
            bool equal = true;
            for (std::size_t j = 0; j < slot.numel(); ++j) {
                if (n1[i * slot.numel() + j] !=
                    a[i * slot.numel() + j] + slot[j]) {
                    equal = false;
                    break;
                }
            }
            matched = matched || equal;
        }
        CHECK(matched);
    }

    Defense empty;
    empty.config.strategy = DefenseStrategy::LearnedBank;
    CHECK_THROWS_AS(apply_defense(empty, a, 1), InvalidArgument);

    Tensor wrong = random_tensor({6, 2, 4, 4}, 71);
    CHECK_THROWS_AS(apply_defense(d, wrong, 1), ShapeError);
}

TEST_CASE("calibrate_gaussian: meets the accuracy target on a trained cut") {
    const auto& fx = fixture();
    auto result = calibrate_gaussian(fx.cut, fx.data.user, 0.95, 81);
    CHECK(result.sigma > 0.0);
    CHECK(result.clean_accuracy > 0.5);
    CHECK(result.iterations > 0);
    CHECK(result.achieved_accuracy_u_prime >=
          0.95 * result.clean_accuracy - 1e-12);
}

TEST_CASE("calibrate_gaussian: looser targets admit more noise") {
    const auto& fx = fixture();
    auto tight = calibrate_gaussian(fx.cut, fx.data.user, 0.999, 82);
    auto loose = calibrate_gaussian(fx.cut, fx.data.user, 0.7, 82);
    CHECK(loose.sigma >= tight.sigma);
    CHECK(loose.sigma > 0.0);
}

TEST_CASE("calibrate_gaussian: deterministic per seed") {
    const auto& fx = fixture();
    auto a = calibrate_gaussian(fx.cut, fx.data.user, 0.9, 83);
    auto b = calibrate_gaussian(fx.cut, fx.data.user, 0.9, 83);
    CHECK(a.sigma == b.sigma);
    CHECK(a.achieved_accuracy_u_prime == b.achieved_accuracy_u_prime);
}

TEST_CASE("calibrate_gaussian: parameter domain") {
    const auto& fx = fixture();
    CHECK_THROWS_AS(calibrate_gaussian(fx.cut, fx.data.user, 0.0, 1),
                    InvalidArgument);
    CHECK_THROWS_AS(calibrate_gaussian(fx.cut, fx.data.user, 1.5, 1),
                    InvalidArgument);
    CHECK_THROWS_AS(calibrate_gaussian(fx.cut, fx.data.user, 0.95, 1, 16),
                    InvalidArgument);
}

TEST_CASE("calibrate_gaussian: constant activations are rejected") {
    // Zero conv weights and a huge negative bias push relu output to zero.
    const auto& fx = fixture();
    SplitModel dead = fx.cut;
    Tensor& w = dead.edge_params.tensors.at("conv1.weight");
    Tensor& b = dead.edge_params.tensors.at("conv1.bias");
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.0;
    for (std::size_t i = 0; i < b.numel(); ++i) b[i] = -1.0;
    CHECK_THROWS_AS(calibrate_gaussian(dead, fx.data.user, 0.95, 1),
                    NumericError);
}

TEST_CASE("train_noise_bank: magnitude reward enlarges the noise") {
    const auto& fx = fixture();
    DefenseConfig config;
    config.strategy = DefenseStrategy::LearnedBank;
    config.bank_size = 2;
    config.seed = 91;
    config.bank_train.epochs = 2;
    config.bank_train.batch_size = 32;
    config.bank_train.lr = 0.05;
    config.bank_train.milestones = {};

    config.lambda = 0.0;
    NoiseBank plain = train_noise_bank(fx.cut, fx.data.user, config);
    config.lambda = 0.5;
    NoiseBank rewarded = train_noise_bank(fx.cut, fx.data.user, config);

    REQUIRE(plain.tensors.size() == 2);
    REQUIRE(rewarded.tensors.size() == 2);
    auto mean_abs = [](const NoiseBank& bank) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const Tensor& t : bank.tensors) {
            for (std::size_t i = 0; i < t.numel(); ++i)
                sum += std::abs(t[i]);
            count += t.numel();
        }
        return sum / static_cast<double>(count);
    };
    CHECK(mean_abs(rewarded) > mean_abs(plain));

    // The reward is traded against task loss, so utility stays usable.
    Defense d;
    d.config = config;
    d.bank = rewarded;
    double defended = defended_accuracy(fx.cut, d, fx.data.user, 5);
    CHECK(defended >= 0.9 * fx.clean_accuracy - 0.05);
}

TEST_CASE("train_noise_bank: deterministic and strategy-checked") {
    const auto& fx = fixture();
    DefenseConfig config;
    config.strategy = DefenseStrategy::LearnedBank;
    config.bank_size = 1;
    config.lambda = 0.1;
    config.seed = 92;
    config.bank_train.epochs = 1;
    config.bank_train.batch_size = 32;
    config.bank_train.milestones = {};

    NoiseBank a = train_noise_bank(fx.cut, fx.data.user, config);
    NoiseBank b = train_noise_bank(fx.cut, fx.data.user, config);
    REQUIRE(a.tensors.size() == 1);
    CHECK(a.tensors[0] == b.tensors[0]);
    CHECK(a.tensors[0].shape() == fx.cut.interface_spec.shape);

    config.strategy = DefenseStrategy::CalibratedGaussian;
    CHECK_THROWS_AS(train_noise_bank(fx.cut, fx.data.user, config),
                    InvalidArgument);
}

TEST_CASE("defense params: round-trip through the checkpoint store") {
    Defense d;
    d.config.strategy = DefenseStrategy::LearnedBank;
    d.bank.sigma = 0.375;
    d.bank.tensors = {random_tensor({3, 2, 2}, 93),
                      random_tensor({3, 2, 2}, 94)};
    ParamStore store = defense_params(d);
    CHECK(store.tensors.count("defense.sigma") == 1);
    CHECK(store.tensors.count("defense.noise.0") == 1);
    CHECK(store.tensors.count("defense.noise.1") == 1);

    NoiseBank back = noise_bank_from_params(store);
    CHECK(back.sigma == 0.375);
    REQUIRE(back.tensors.size() == 2);
    CHECK(back.tensors[0] == d.bank.tensors[0]);
    CHECK(back.tensors[1] == d.bank.tensors[1]);

    ParamStore missing;
    missing.tensors["defense.noise.0"] = random_tensor({2}, 95);
    CHECK_THROWS_AS(noise_bank_from_params(missing), FormatError);
}

TEST_CASE("defended_accuracy: deterministic, degrades with heavy noise") {
    const auto& fx = fixture();
    Defense none;
    none.config.strategy = DefenseStrategy::None;
    double clean = defended_accuracy(fx.cut, none, fx.data.user, 3);
    CHECK(clean == doctest::Approx(fx.clean_accuracy));

    Defense mild = gaussian_defense(0.01);
    CHECK(defended_accuracy(fx.cut, mild, fx.data.user, 3) ==
          defended_accuracy(fx.cut, mild, fx.data.user, 3));

    Defense heavy = gaussian_defense(1000.0);
    double wrecked = defended_accuracy(fx.cut, heavy, fx.data.user, 3);
    CHECK(wrecked < clean);
}
