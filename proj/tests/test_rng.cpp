#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "splitkit/rng.hpp"

using namespace splitkit;

TEST_CASE("rng: same seed, same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: different seeds diverge") {
    Rng a(1), b(2);
    int equal = 0;
    for (int i = 0; i < 100; ++i) equal += a.next_u64() == b.next_u64();
    CHECK(equal == 0);
}

TEST_CASE("rng: uniform lies in [0, 1) with plausible mean") {
    Rng rng(7);
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("rng: ranged uniform respects bounds") {
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        double u = rng.uniform(-3.0, 5.0);
        CHECK(u >= -3.0);
        CHECK(u < 5.0);
    }
}

TEST_CASE("rng: uniform_int covers [0, n) uniformly enough") {
    Rng rng(11);
    std::vector<int> counts(8, 0);
    const int draws = 16000;
    for (int i = 0; i < draws; ++i) {
        auto v = rng.uniform_int(8);
        REQUIRE(v < 8);
        ++counts[v];
    }
    for (int c : counts) {
        // Expected 2000 per bucket; allow +/- 10 sigma.
        CHECK(std::abs(c - 2000) < 450);
    }
}

TEST_CASE("rng: normal moments") {
    Rng rng(13);
    const int n = 50000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("rng: scaled normal") {
    Rng rng(17);
    const int n = 50000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = rng.normal(3.0, 0.5);
        sum += z;
        sq += z * z;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean - 3.0) < 0.02);
    CHECK(std::abs(var - 0.25) < 0.01);
}

TEST_CASE("rng: shuffle is a permutation and seed-stable") {
    std::vector<std::size_t> base(100);
    for (std::size_t i = 0; i < base.size(); ++i) base[i] = i;

    auto a = base;
    Rng(23).shuffle(a);
    auto b = base;
    Rng(23).shuffle(b);
    CHECK(a == b);
    CHECK(a != base);

    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == base);
}

TEST_CASE("rng: fill_normal matches elementwise draws") {
    std::vector<double> filled(64);
    Rng(31).fill_normal(filled, 1.0, 2.0);
    Rng loop(31);
    for (double v : filled) CHECK(v == loop.normal(1.0, 2.0));
}

TEST_CASE("derive_seed: stable and label-sensitive") {
    auto s1 = derive_seed(99, "data");
    CHECK(s1 == derive_seed(99, "data"));
    CHECK(s1 != derive_seed(99, "defense"));
    CHECK(s1 != derive_seed(100, "data"));
    CHECK(derive_seed(99, "defense", "conv1") !=
          derive_seed(99, "defense", "conv2"));
    CHECK(derive_seed(99, "defense", "conv1") ==
          derive_seed(99, "defense", "conv1"));
}

TEST_CASE("derive_seed: derived streams look independent") {
    Rng a(derive_seed(5, "stage_a"));
    Rng b(derive_seed(5, "stage_b"));
    int equal = 0;
    for (int i = 0; i < 200; ++i) equal += a.next_u64() == b.next_u64();
    CHECK(equal == 0);
}
