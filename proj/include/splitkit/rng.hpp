#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace splitkit {

// Deterministic PRNG with identical output on every platform.  The standard
// library engines are specified, but distributions are not, so this class
// carries its own uniform/normal/shuffle implementations.
//
// Core generator: xoshiro256++ seeded through splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();

    // Uniform in [lo, hi).
    double uniform(double lo, double hi);

    // Uniform integer in [0, n).  n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);

    // Standard normal via Box-Muller (caches the second deviate).
    double normal();

    double normal(double mean, double stddev);

    // Fisher-Yates shuffle of an index vector.
    void shuffle(std::vector<std::size_t>& indices);

    // Fill with i.i.d. normal(mean, stddev) values.
    void fill_normal(std::vector<double>& out, double mean, double stddev);

private:
    std::uint64_t state_[4];
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

// Derives a child seed from a master seed and a stage label so that
// independent pipeline stages draw from disjoint streams.  Stable across
// platforms (FNV-1a over the label, mixed with splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage);
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                          std::string_view label);

}  // namespace splitkit
