#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "splitkit/errors.hpp"
#include "splitkit/mi.hpp"
#include "splitkit/rng.hpp"
#include "test_util.hpp"

using namespace splitkit;
using namespace splitkit::testutil;

namespace {

// Correlated standard-normal pairs with known MI -0.5*ln(1 - rho^2).
PairSamples gaussian_pairs(double rho, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    PairSamples pairs;
    pairs.n = n;
    pairs.dim = 1;
    pairs.x.resize(n);
    pairs.y.resize(n);
    const double residual = std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.normal();
        const double v = rng.normal();
        pairs.x[i] = u;
        pairs.y[i] = rho * u + residual * v;
    }
    return pairs;
}

double gaussian_mi(double rho) { return -0.5 * std::log(1.0 - rho * rho); }

}  // namespace

TEST_CASE("ksg: recovers bivariate-gaussian ground truth") {
    MIParams params;
    params.k = 5;
    for (double rho : {0.3, 0.6, 0.8}) {
        auto pairs = gaussian_pairs(rho, 5000, 42);
        auto estimate = estimate_mi(pairs, MIEstimator::Ksg, params);
        CAPTURE(rho);
        CHECK(std::abs(estimate.value_nats - gaussian_mi(rho)) <= 0.10);
        CHECK(estimate.estimator == "ksg");
        CHECK(estimate.n_samples == 5000);
    }
}

TEST_CASE("ksg: independent variables estimate near zero") {
    auto pairs = gaussian_pairs(0.0, 5000, 43);
    auto estimate = estimate_mi(pairs, MIEstimator::Ksg, MIParams{});
    CHECK(estimate.value_nats >= 0.0);
    CHECK(estimate.value_nats <= 0.05);
}

TEST_CASE("ksg: clamped value never negative, raw preserved") {
    auto pairs = gaussian_pairs(0.0, 400, 44);
    auto estimate = estimate_mi(pairs, MIEstimator::Ksg, MIParams{});
    CHECK(estimate.value_nats >= 0.0);
    CHECK(estimate.value_nats == std::max(0.0, estimate.raw_value));
}

TEST_CASE("histogram: symmetric in its arguments") {
    auto pairs = gaussian_pairs(0.6, 2000, 45);
    PairSamples swapped = pairs;
    std::swap(swapped.x, swapped.y);
    MIParams params;
    params.bins = 16;
    auto forward = estimate_mi(pairs, MIEstimator::Histogram, params);
    auto backward = estimate_mi(swapped, MIEstimator::Histogram, params);
    CHECK(std::abs(forward.raw_value - backward.raw_value) <= 1e-9);
}

TEST_CASE("histogram: self-information equals binned entropy") {
    auto pairs = gaussian_pairs(0.9, 1500, 46);
    pairs.y = pairs.x;
    MIParams params;
    params.bins = 12;
    auto estimate = estimate_mi(pairs, MIEstimator::Histogram, params);
    const double entropy =
        binned_entropy(pairs.x, pairs.n, pairs.dim, params.bins);
    CHECK(estimate.raw_value == doctest::Approx(entropy).epsilon(1e-9));
    CHECK(entropy > 0.5);
}

TEST_CASE("estimate_mi: deterministic") {
    auto pairs = gaussian_pairs(0.5, 800, 47);
    MIParams params;
    auto a = estimate_mi(pairs, MIEstimator::Ksg, params);
    auto b = estimate_mi(pairs, MIEstimator::Ksg, params);
    CHECK(a.value_nats == b.value_nats);
    CHECK(a.raw_value == b.raw_value);
}

TEST_CASE("estimate_mi: parameter domain") {
    auto pairs = gaussian_pairs(0.5, 600, 48);

    SUBCASE("too few pairs") {
        auto tiny = gaussian_pairs(0.5, 49, 48);
        CHECK_THROWS_AS(estimate_mi(tiny, MIEstimator::Ksg, MIParams{}),
                        InvalidArgument);
    }
    SUBCASE("neighbor count range") {
        MIParams params;
        params.k = 2;
        CHECK_THROWS_AS(estimate_mi(pairs, MIEstimator::Ksg, params),
                        InvalidArgument);
        params.k = 11;
        CHECK_THROWS_AS(estimate_mi(pairs, MIEstimator::Ksg, params),
                        InvalidArgument);
    }
    SUBCASE("bin count range") {
        MIParams params;
        params.bins = 3;
        CHECK_THROWS_AS(estimate_mi(pairs, MIEstimator::Histogram, params),
                        InvalidArgument);
        params.bins = 65;
        CHECK_THROWS_AS(estimate_mi(pairs, MIEstimator::Histogram, params),
                        InvalidArgument);
    }
    SUBCASE("degenerate constant side") {
        PairSamples constant = pairs;
        std::fill(constant.y.begin(), constant.y.end(), 3.25);
        CHECK_THROWS_AS(estimate_mi(constant, MIEstimator::Ksg, MIParams{}),
                        NumericError);
    }
}

TEST_CASE("estimate_mi: per-dimension sum runs on multi-dim pairs") {
    Rng rng(49);
    PairSamples pairs;
    pairs.n = 600;
    pairs.dim = 3;
    pairs.x.resize(pairs.n * pairs.dim);
    pairs.y.resize(pairs.n * pairs.dim);
    rng.fill_normal(pairs.x, 0.0, 1.0);
    for (std::size_t i = 0; i < pairs.y.size(); ++i) {
        pairs.y[i] = 0.8 * pairs.x[i] + 0.6 * rng.normal();
    }
    MIParams params;
    params.per_dimension_sum = true;
    auto summed = estimate_mi(pairs, MIEstimator::Ksg, params);
    CHECK(summed.value_nats > 0.3);

    params.per_dimension_sum = false;
    auto joint = estimate_mi(pairs, MIEstimator::Ksg, params);
    CHECK(joint.value_nats > 0.0);
}

TEST_CASE("mi_reduction: fractional drop of the original estimate") {
    auto make = [](double value) {
        MIEstimate e;
        e.value_nats = value;
        e.raw_value = value;
        return e;
    };
    CHECK(mi_reduction(make(2.0), make(0.1892)) ==
          doctest::Approx(0.9054).epsilon(1e-9));
    CHECK(mi_reduction(make(1.0), make(1.0)) == doctest::Approx(0.0));
    CHECK(mi_reduction(make(1.0), make(0.3352)) ==
          doctest::Approx(0.6648).epsilon(1e-9));
    // Noise can raise the estimate; the reduction goes negative, unclamped.
    CHECK(mi_reduction(make(1.0), make(1.2)) ==
          doctest::Approx(-0.2).epsilon(1e-9));
    CHECK_THROWS_AS(mi_reduction(make(0.0), make(0.0)), NumericError);
}

TEST_CASE("prepare_pairs: deterministic projections of matching rank") {
    Tensor inputs = random_tensor({40, 2, 6, 6}, 50);
    Tensor activations = random_tensor({40, 3, 4, 4}, 51);
    ProjectionConfig projection;
    projection.dim = 8;
    projection.seed = 5;

    auto a = prepare_pairs(inputs, activations, projection);
    auto b = prepare_pairs(inputs, activations, projection);
    CHECK(a.n == 40);
    CHECK(a.dim == 8);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);

    projection.seed = 6;
    auto c = prepare_pairs(inputs, activations, projection);
    CHECK_FALSE(a.x == c.x);

    auto row = a.get(7);
    CHECK(row.x_features.size() == 8);
    CHECK(row.x_features[3] == a.x[7 * 8 + 3]);
}

TEST_CASE("prepare_pairs: identity bypass keeps raw features") {
    Tensor inputs = random_tensor({30, 1, 3, 3}, 52);
    Tensor activations = random_tensor({30, 9}, 53);
    ProjectionConfig projection;
    projection.identity = true;
    projection.dim = 9;
    auto pairs = prepare_pairs(inputs, activations, projection);
    CHECK(pairs.dim == 9);
    // First input channel is the whole input here; y is the activation.
    for (std::size_t j = 0; j < 9; ++j) {
        CHECK(pairs.x[j] == inputs[j]);
        CHECK(pairs.y[j] == activations[j]);
    }

    ProjectionConfig wrong = projection;
    wrong.dim = 5;
    CHECK_THROWS_AS(prepare_pairs(inputs, activations, wrong),
                    InvalidArgument);
}

TEST_CASE("prepare_pairs: batch count mismatch rejected") {
    Tensor inputs = random_tensor({12, 2, 4, 4}, 54);
    Tensor activations = random_tensor({11, 3, 2, 2}, 55);
    CHECK_THROWS_AS(prepare_pairs(inputs, activations, ProjectionConfig{}),
                    InvalidArgument);
}

TEST_CASE("pair_accumulator: batched accumulation matches one-shot") {
    Tensor inputs = random_tensor({24, 2, 5, 5}, 56);
    Tensor activations = random_tensor({24, 4, 3, 3}, 57);
    ProjectionConfig projection;
    projection.dim = 6;
    projection.seed = 9;

    auto whole = prepare_pairs(inputs, activations, projection);

    PairAccumulator acc(projection);
    auto slice = [](const Tensor& t, std::size_t lo, std::size_t hi) {
        auto shape = t.shape();
        shape[0] = hi - lo;
        Tensor out(shape, t.dtype());
        const std::size_t stride = t.numel() / t.shape()[0];
        for (std::size_t i = 0; i < out.numel(); ++i) {
            out[i] = t[lo * stride + i];
        }
        return out;
    };
    acc.add(slice(inputs, 0, 10), slice(activations, 0, 10));
    acc.add(slice(inputs, 10, 24), slice(activations, 10, 24));
    auto batched = acc.take();

    CHECK(batched.n == whole.n);
    REQUIRE(batched.x.size() == whole.x.size());
    for (std::size_t i = 0; i < whole.x.size(); ++i) {
        CHECK(batched.x[i] == doctest::Approx(whole.x[i]).epsilon(1e-12));
        CHECK(batched.y[i] == doctest::Approx(whole.y[i]).epsilon(1e-12));
    }
}

TEST_CASE("mi estimator names round-trip") {
    CHECK(mi_estimator_name(MIEstimator::Ksg) == "ksg");
    CHECK(mi_estimator_name(MIEstimator::Histogram) == "histogram");
    CHECK(mi_estimator_from_name("ksg") == MIEstimator::Ksg);
    CHECK(mi_estimator_from_name("histogram") == MIEstimator::Histogram);
    CHECK_THROWS_AS(mi_estimator_from_name("kernel"), InvalidArgument);
}
