#include <cmath>
#include <vector>

#include "doctest.h"
#include "splitkit/errors.hpp"
#include "splitkit/metrics.hpp"

using namespace splitkit;

TEST_CASE("compute_pa: ratio of defended to clean accuracy") {
    CHECK(compute_pa(0.8412, 0.8412).value == doctest::Approx(1.0));
    CHECK(compute_pa(0.7991, 0.8412).value ==
          doctest::Approx(0.94995).epsilon(1e-4));
    CHECK(compute_pa(0.0, 0.5).value == doctest::Approx(0.0));
}

TEST_CASE("compute_pa: clamped with raw retained") {
    auto above = compute_pa(0.9, 0.8);
    CHECK(above.value == 1.0);
    CHECK(above.raw == doctest::Approx(1.125));
    CHECK_THROWS_AS(compute_pa(0.5, 0.0), InvalidArgument);
}

TEST_CASE("compute_pi: removed share of the attacker advantage") {
    // Five defended attacker accuracies against the same ceiling and floor.
    const double ceiling = 0.8079;
    const double floor = 0.5;
    const std::vector<double> defended = {0.7986, 0.7910, 0.7980, 0.7700,
                                          0.6964};
    const std::vector<double> expected = {0.03, 0.05, 0.03, 0.12, 0.36};
    for (std::size_t i = 0; i < defended.size(); ++i) {
        CAPTURE(i);
        auto pi = compute_pi(ceiling, defended[i], floor);
        CHECK(std::abs(pi.value - expected[i]) <= 0.005);
    }
}

TEST_CASE("compute_pi: second ceiling cross-check") {
    const double ceiling = 0.8763;
    const double floor = 0.5;
    const std::vector<double> defended = {0.8079, 0.7957, 0.7145};
    const std::vector<double> expected = {0.18, 0.21, 0.43};
    for (std::size_t i = 0; i < defended.size(); ++i) {
        CAPTURE(i);
        auto pi = compute_pi(ceiling, defended[i], floor);
        CHECK(std::abs(pi.value - expected[i]) <= 0.005);
    }
}

TEST_CASE("compute_pi: endpoints and clamping") {
    CHECK(compute_pi(0.8, 0.8, 0.5).value == doctest::Approx(0.0));
    CHECK(compute_pi(0.8, 0.5, 0.5).value == doctest::Approx(1.0));

    // Defense pushed the attacker below random: clamp, keep raw.
    auto below = compute_pi(0.8, 0.4, 0.5);
    CHECK(below.value == 1.0);
    CHECK(below.raw == doctest::Approx((0.8 - 0.4) / (0.8 - 0.5)));

    // Attack got better under the defense: clamp at zero, raw negative.
    auto worse = compute_pi(0.8, 0.9, 0.5);
    CHECK(worse.value == 0.0);
    CHECK(worse.raw == doctest::Approx(-1.0 / 3.0));

    CHECK_THROWS_AS(compute_pi(0.5, 0.5, 0.5), InvalidArgument);
    CHECK_THROWS_AS(compute_pi(0.4, 0.5, 0.5), InvalidArgument);
}

TEST_CASE("compute_pi: monotone in the defended attacker accuracy") {
    double previous = -1.0;
    for (double defended = 0.8; defended >= 0.5; defended -= 0.05) {
        double pi = compute_pi(0.8, defended, 0.5).value;
        CHECK(pi >= previous);
        previous = pi;
    }
}

TEST_CASE("build_report: stores inputs and recomputes ratios exactly") {
    Provenance prov;
    prov.config_digest = "abc123";
    prov.master_seed = 7;
    prov.defense_strategy = "calibrated_gaussian";
    prov.head_arch = "mirror";

    PrivacyReport report = build_report("conv3", 0.82, 0.79, 0.77, 0.64, 0.5,
                                        0.41, 0.35, 0.2, prov);
    CHECK(report.cut == "conv3");
    CHECK(report.accuracy_u == 0.82);
    CHECK(report.accuracy_a_prime == 0.64);
    CHECK(report.mi_reduction == 0.41);
    CHECK(report.flops_ratio == 0.35);
    CHECK(report.provenance.master_seed == 7);
    CHECK(std::abs(report.pa - compute_pa(0.79, 0.82).value) <= 1e-12);
    CHECK(std::abs(report.pi - compute_pi(0.77, 0.64, 0.5).value) <= 1e-12);
    CHECK(std::abs(report.pi_raw - compute_pi(0.77, 0.64, 0.5).raw) <= 1e-12);
}

TEST_CASE("build_report: input domain") {
    Provenance prov;
    CHECK_THROWS_AS(build_report("conv1", 1.2, 0.8, 0.7, 0.6, 0.5, 0.0, 0.5,
                                 0.5, prov),
                    InvalidArgument);
    CHECK_THROWS_AS(build_report("conv1", 0.8, -0.1, 0.7, 0.6, 0.5, 0.0, 0.5,
                                 0.5, prov),
                    InvalidArgument);
    CHECK_THROWS_AS(build_report("conv1", 0.8, 0.8, 0.7, 0.6, 0.5, NAN, 0.5,
                                 0.5, prov),
                    InvalidArgument);
    CHECK_THROWS_AS(build_report("", 0.8, 0.8, 0.7, 0.6, 0.5, 0.0, 0.5, 0.5,
                                 prov),
                    InvalidArgument);
}
