#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/tensor.hpp"

namespace splitkit {

enum class MIEstimator { Ksg, Histogram };

std::string mi_estimator_name(MIEstimator estimator);
MIEstimator mi_estimator_from_name(const std::string& name);

struct ProjectionConfig {
    std::size_t dim = 8;
    std::uint64_t seed = 1;
    // Bypass projection; dim must equal the flattened feature size.
    bool identity = false;
};

// Paired feature vectors: x from the input's first channel, y from the
// intermediate activation (all channels), both reduced to the same
// dimension.  Stored row-major, n rows of dim columns per side.
struct PairSamples {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> x;
    std::vector<double> y;

    struct PairSample {
        std::vector<double> x_features;
        std::vector<double> y_features;
    };
    PairSample get(std::size_t i) const;
};

struct MIParams {
    std::size_t k = 5;       // ksg neighbor count, in [3, 10]
    std::size_t bins = 16;   // histogram bins per dimension, in [4, 64]
    // Sum per-dimension estimates I(x_j; y_j) instead of the joint estimate.
    bool per_dimension_sum = false;
    std::uint64_t seed = 1;
    std::size_t projection_dim = 8;
};

struct MIEstimate {
    double value_nats = 0.0;  // clamped at zero
    double raw_value = 0.0;
    std::string estimator;
    std::size_t n_samples = 0;
    MIParams config;
};

// Projects input first channels and activations to paired feature vectors
// using seeded Gaussian projection matrices fixed per seed.
PairSamples prepare_pairs(const Tensor& inputs, const Tensor& activations,
                          const ProjectionConfig& projection);

// Incremental variant of prepare_pairs for batched evaluation.
class PairAccumulator {
public:
    explicit PairAccumulator(const ProjectionConfig& projection);
    void add(const Tensor& inputs, const Tensor& activations);
    PairSamples take();

private:
    ProjectionConfig projection_;
    std::vector<double> px_, py_;
    std::size_t x_dim_ = 0, y_dim_ = 0;
    PairSamples pairs_;
};

MIEstimate estimate_mi(const PairSamples& pairs, MIEstimator estimator,
                       const MIParams& params);

// Normalized reduction (mi_original - mi_noised) / mi_original.  May be
// negative when noise raised the estimate; never clamped.
double mi_reduction(const MIEstimate& mi_original, const MIEstimate& mi_noised);

// Entropy of the per-dimension equal-width binning used by the histogram
// estimator; the histogram estimate of I(X;X) equals this.
double binned_entropy(const std::vector<double>& rows, std::size_t n,
                      std::size_t dim, std::size_t bins);

}  // namespace splitkit
