#include "splitkit/mi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <utility>

#include "splitkit/errors.hpp"
#include "splitkit/parallel.hpp"
#include "splitkit/rng.hpp"

namespace splitkit {

std::string mi_estimator_name(MIEstimator estimator) {
    switch (estimator) {
        case MIEstimator::Ksg: return "ksg";
        case MIEstimator::Histogram: return "histogram";
    }
    throw InvalidArgument("unknown MI estimator");
}

MIEstimator mi_estimator_from_name(const std::string& name) {
    if (name == "ksg") return MIEstimator::Ksg;
    if (name == "histogram") return MIEstimator::Histogram;
    throw InvalidArgument("unknown MI estimator: " + name);
}

PairSamples::PairSample PairSamples::get(std::size_t i) const {
    if (i >= n) throw InvalidArgument("pair index out of range");
    PairSample out;
    out.x_features.assign(x.begin() + i * dim, x.begin() + (i + 1) * dim);
    out.y_features.assign(y.begin() + i * dim, y.begin() + (i + 1) * dim);
    return out;
}

namespace {

// Flattened first-channel size of a batched input, and full flattened size
// of a batched activation.
std::size_t first_channel_size(const Tensor& inputs) {
    if (inputs.rank() < 2) {
        throw ShapeError("inputs need a batch dimension plus sample dims");
    }
    std::size_t per_sample = inputs.numel() / inputs.dim(0);
    if (inputs.rank() >= 3) per_sample /= inputs.dim(1);
    return per_sample;
}

std::vector<double> gaussian_projection(std::size_t rows, std::size_t cols,
                                        std::uint64_t seed) {
    std::vector<double> p(rows * cols);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (auto& v : p) v = rng.normal(0.0, scale);
    return p;
}

void project_rows(const double* src, std::size_t n, std::size_t src_dim,
                  std::size_t src_stride, const std::vector<double>& p,
                  std::size_t out_dim, std::vector<double>& out) {
    const std::size_t base = out.size();
    out.resize(base + n * out_dim);
    parallel_for(n, [&](std::size_t i) {
        const double* row = src + i * src_stride;
        double* dst = out.data() + base + i * out_dim;
        for (std::size_t d = 0; d < out_dim; ++d) {
            const double* prow = p.data() + d * src_dim;
            double acc = 0.0;
            for (std::size_t j = 0; j < src_dim; ++j) {
                acc += prow[j] * row[j];
            }
            dst[d] = acc;
        }
    });
}

void copy_rows(const double* src, std::size_t n, std::size_t dim,
               std::size_t stride, std::vector<double>& out) {
    const std::size_t base = out.size();
    out.resize(base + n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(src + i * stride, src + i * stride + dim,
                  out.begin() + base + i * dim);
    }
}

}  // namespace

PairAccumulator::PairAccumulator(const ProjectionConfig& projection)
    : projection_(projection) {
    if (projection.dim == 0) {
        throw InvalidArgument("projection dimension must be positive");
    }
    pairs_.dim = projection.dim;
}

void PairAccumulator::add(const Tensor& inputs, const Tensor& activations) {
    if (inputs.rank() < 2 || activations.rank() < 2) {
        throw ShapeError("pair preparation needs batched tensors");
    }
    const std::size_t n = inputs.dim(0);
    if (activations.dim(0) != n) {
        throw InvalidArgument("input count " + std::to_string(n) +
                              " does not match activation count " +
                              std::to_string(activations.dim(0)));
    }
    const std::size_t x_dim = first_channel_size(inputs);
    const std::size_t y_dim = activations.numel() / n;
    const std::size_t x_stride = inputs.numel() / n;
    if (x_dim_ == 0) {
        x_dim_ = x_dim;
        y_dim_ = y_dim;
        if (projection_.identity) {
            if (projection_.dim != x_dim || projection_.dim != y_dim) {
                throw InvalidArgument(
                    "identity projection requires dim == flattened size on "
                    "both sides");
            }
        } else {
            if (projection_.dim > std::min(x_dim, y_dim)) {
                throw InvalidArgument(
                    "projection dim " + std::to_string(projection_.dim) +
                    " exceeds available dimension " +
                    std::to_string(std::min(x_dim, y_dim)));
            }
            px_ = gaussian_projection(projection_.dim, x_dim,
                                      derive_seed(projection_.seed, "proj_x"));
            py_ = gaussian_projection(projection_.dim, y_dim,
                                      derive_seed(projection_.seed, "proj_y"));
        }
    } else if (x_dim != x_dim_ || y_dim != y_dim_) {
        throw ShapeError("pair batches disagree on feature dimensions");
    }

    if (projection_.identity) {
        copy_rows(inputs.data(), n, x_dim, x_stride, pairs_.x);
        copy_rows(activations.data(), n, y_dim, y_dim, pairs_.y);
    } else {
        project_rows(inputs.data(), n, x_dim, x_stride, px_, projection_.dim,
                     pairs_.x);
        project_rows(activations.data(), n, y_dim, y_dim, py_,
                     projection_.dim, pairs_.y);
    }
    pairs_.n += n;
}

PairSamples PairAccumulator::take() {
    return std::move(pairs_);
}

PairSamples prepare_pairs(const Tensor& inputs, const Tensor& activations,
                          const ProjectionConfig& projection) {
    PairAccumulator acc(projection);
    acc.add(inputs, activations);
    return acc.take();
}

namespace {

// Digamma via upward recurrence into the asymptotic series.
double digamma(double x) {
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
    return result;
}

void validate_params(const PairSamples& pairs, MIEstimator estimator,
                     const MIParams& params) {
    if (pairs.n < 50) {
        throw InvalidArgument("MI estimation needs at least 50 pairs, got " +
                              std::to_string(pairs.n));
    }
    if (pairs.dim == 0 || pairs.x.size() != pairs.n * pairs.dim ||
        pairs.y.size() != pairs.n * pairs.dim) {
        throw ShapeError("pair container sizes are inconsistent");
    }
    if (estimator == MIEstimator::Ksg &&
        (params.k < 3 || params.k > 10)) {
        throw InvalidArgument("ksg k must lie in [3, 10]");
    }
    if (estimator == MIEstimator::Histogram &&
        (params.bins < 4 || params.bins > 64)) {
        throw InvalidArgument("histogram bins must lie in [4, 64]");
    }

    auto side_constant = [&](const std::vector<double>& v) {
        for (std::size_t d = 0; d < pairs.dim; ++d) {
            const double first = v[d];
            for (std::size_t i = 1; i < pairs.n; ++i) {
                if (v[i * pairs.dim + d] != first) return false;
            }
        }
        return true;
    };
    if (side_constant(pairs.x) || side_constant(pairs.y)) {
        throw NumericError(
            "degenerate data: zero variance in every dimension of one side");
    }
}

std::vector<double> dimension_scales(const std::vector<double>& v,
                                     std::size_t n, std::size_t dim) {
    std::vector<double> scales(dim, 1.0);
    for (std::size_t d = 0; d < dim; ++d) {
        double lo = v[d], hi = v[d];
        for (std::size_t i = 1; i < n; ++i) {
            lo = std::min(lo, v[i * dim + d]);
            hi = std::max(hi, v[i * dim + d]);
        }
        scales[d] = hi > lo ? hi - lo : 1.0;
    }
    return scales;
}

// Kraskov estimator (variant 1) with Chebyshev distances per side.  A tiny
// seeded jitter breaks ties so neighbor counts are well defined.
double ksg_estimate(const std::vector<double>& xs,
                    const std::vector<double>& ys, std::size_t n,
                    std::size_t dim, std::size_t k, std::uint64_t seed) {
    std::vector<double> x = xs, y = ys;
    {
        Rng rng(derive_seed(seed, "ksg_jitter"));
        const auto sx = dimension_scales(x, n, dim);
        const auto sy = dimension_scales(y, n, dim);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dim; ++d) {
                x[i * dim + d] += 1e-10 * sx[d] * rng.normal();
                y[i * dim + d] += 1e-10 * sy[d] * rng.normal();
            }
        }
    }

    std::vector<double> psi_nx(n), psi_ny(n);
    parallel_for(n, [&](std::size_t i) {
        std::vector<double> joint(n);
        std::vector<double> dx(n), dy(n);
        const double* xi = x.data() + i * dim;
        const double* yi = y.data() + i * dim;
        for (std::size_t j = 0; j < n; ++j) {
            const double* xj = x.data() + j * dim;
            const double* yj = y.data() + j * dim;
            double mx = 0.0, my = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                mx = std::max(mx, std::abs(xi[d] - xj[d]));
                my = std::max(my, std::abs(yi[d] - yj[d]));
            }
            dx[j] = mx;
            dy[j] = my;
            joint[j] = std::max(mx, my);
        }
        joint[i] = std::numeric_limits<double>::infinity();
        std::vector<double> order = joint;
        std::nth_element(order.begin(), order.begin() + (k - 1), order.end());
        const double eps = order[k - 1];

        std::size_t nx = 0, ny = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (dx[j] < eps) ++nx;
            if (dy[j] < eps) ++ny;
        }
        psi_nx[i] = digamma(static_cast<double>(nx + 1));
        psi_ny[i] = digamma(static_cast<double>(ny + 1));
    });

    double mean_psi = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean_psi += psi_nx[i] + psi_ny[i];
    mean_psi /= static_cast<double>(n);
    return digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) -
           mean_psi;
}

using BinKey = std::vector<std::uint16_t>;

BinKey bin_row(const double* row, std::size_t dim,
               const std::vector<double>& lo, const std::vector<double>& width,
               std::size_t bins) {
    BinKey key(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        std::size_t b = 0;
        if (width[d] > 0.0) {
            const double t = (row[d] - lo[d]) / width[d];
            b = std::min(static_cast<std::size_t>(std::max(t, 0.0)),
                         bins - 1);
        }
        key[d] = static_cast<std::uint16_t>(b);
    }
    return key;
}

struct BinEdges {
    std::vector<double> lo;
    std::vector<double> width;
};

BinEdges bin_edges(const std::vector<double>& v, std::size_t n,
                   std::size_t dim, std::size_t bins) {
    BinEdges e;
    e.lo.resize(dim);
    e.width.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        double lo = v[d], hi = v[d];
        for (std::size_t i = 1; i < n; ++i) {
            lo = std::min(lo, v[i * dim + d]);
            hi = std::max(hi, v[i * dim + d]);
        }
        e.lo[d] = lo;
        e.width[d] = hi > lo ? (hi - lo) / static_cast<double>(bins) : 0.0;
    }
    return e;
}

double histogram_estimate(const std::vector<double>& xs,
                          const std::vector<double>& ys, std::size_t n,
                          std::size_t dim, std::size_t bins) {
    const BinEdges ex = bin_edges(xs, n, dim, bins);
    const BinEdges ey = bin_edges(ys, n, dim, bins);

    std::map<BinKey, std::size_t> cx, cy;
    std::map<std::pair<BinKey, BinKey>, std::size_t> cxy;
    for (std::size_t i = 0; i < n; ++i) {
        BinKey kx = bin_row(xs.data() + i * dim, dim, ex.lo, ex.width, bins);
        BinKey ky = bin_row(ys.data() + i * dim, dim, ey.lo, ey.width, bins);
        ++cx[kx];
        ++cy[ky];
        ++cxy[{std::move(kx), std::move(ky)}];
    }

    const double dn = static_cast<double>(n);
    double mi = 0.0;
    for (const auto& [key, count] : cxy) {
        const double pxy = static_cast<double>(count) / dn;
        const double px = static_cast<double>(cx.at(key.first)) / dn;
        const double py = static_cast<double>(cy.at(key.second)) / dn;
        mi += pxy * std::log(pxy / (px * py));
    }
    return mi;
}

std::vector<double> take_dimension(const std::vector<double>& v, std::size_t n,
                                   std::size_t dim, std::size_t d) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = v[i * dim + d];
    return out;
}

}  // namespace

double binned_entropy(const std::vector<double>& rows, std::size_t n,
                      std::size_t dim, std::size_t bins) {
    const BinEdges e = bin_edges(rows, n, dim, bins);
    std::map<BinKey, std::size_t> counts;
    for (std::size_t i = 0; i < n; ++i) {
        ++counts[bin_row(rows.data() + i * dim, dim, e.lo, e.width, bins)];
    }
    double h = 0.0;
    for (const auto& [key, count] : counts) {
        const double p = static_cast<double>(count) / static_cast<double>(n);
        h -= p * std::log(p);
    }
    return h;
}

MIEstimate estimate_mi(const PairSamples& pairs, MIEstimator estimator,
                       const MIParams& params) {
    validate_params(pairs, estimator, params);

    double raw = 0.0;
    if (params.per_dimension_sum) {
        for (std::size_t d = 0; d < pairs.dim; ++d) {
            const auto xd = take_dimension(pairs.x, pairs.n, pairs.dim, d);
            const auto yd = take_dimension(pairs.y, pairs.n, pairs.dim, d);
            if (estimator == MIEstimator::Ksg) {
                raw += ksg_estimate(xd, yd, pairs.n, 1, params.k,
                                    derive_seed(params.seed, "dim",
                                                std::to_string(d)));
            } else {
                raw += histogram_estimate(xd, yd, pairs.n, 1, params.bins);
            }
        }
    } else if (estimator == MIEstimator::Ksg) {
        raw = ksg_estimate(pairs.x, pairs.y, pairs.n, pairs.dim, params.k,
                           params.seed);
    } else {
        raw = histogram_estimate(pairs.x, pairs.y, pairs.n, pairs.dim,
                                 params.bins);
    }

    MIEstimate out;
    out.raw_value = raw;
    out.value_nats = std::max(raw, 0.0);
    out.estimator = mi_estimator_name(estimator);
    out.n_samples = pairs.n;
    out.config = params;
    return out;
}

double mi_reduction(const MIEstimate& mi_original,
                    const MIEstimate& mi_noised) {
    if (mi_original.value_nats <= 0.0) {
        throw NumericError(
            "mi_reduction undefined: original MI estimate is zero");
    }
    return (mi_original.value_nats - mi_noised.value_nats) /
           mi_original.value_nats;
}

}  // namespace splitkit
