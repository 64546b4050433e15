#include "splitkit/forward.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "splitkit/errors.hpp"
#include "splitkit/loss.hpp"
#include "splitkit/parallel.hpp"

namespace splitkit {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;

constexpr double kBnEps = 1e-5;

std::vector<std::size_t> batched(const std::vector<std::size_t>& shape,
                                 std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(shape.size() + 1);
    out.push_back(batch);
    out.insert(out.end(), shape.begin(), shape.end());
    return out;
}

void check_finite(const Tensor& t, const std::string& layer_name) {
    if (!t.all_finite()) {
        throw NumericError("non-finite activation after layer " + layer_name);
    }
}

struct ConvDims {
    std::size_t batch, cin, h, w, cout, ho, wo, s, ckk;
};

ConvDims conv_dims(const LayerSpec& layer, const Tensor& x) {
    ConvDims d;
    d.batch = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = layer.out_channels;
    d.ho = (d.h + 2 * layer.padding - layer.kernel) / layer.stride + 1;
    d.wo = (d.w + 2 * layer.padding - layer.kernel) / layer.stride + 1;
    d.s = d.ho * d.wo;
    d.ckk = d.cin * layer.kernel * layer.kernel;
    return d;
}

// Per-sample patch matrix: cols(row = (c*K + kh)*K + kw, col = b*S + s).
// Filled in parallel over the batch; each sample owns a disjoint column
// block, so the result is identical for any thread count.
void im2col(const LayerSpec& layer, const Tensor& x, const ConvDims& d,
            Eigen::MatrixXd& cols) {
    cols.resize(static_cast<Eigen::Index>(d.ckk),
                static_cast<Eigen::Index>(d.batch * d.s));
    const std::size_t k = layer.kernel;
    const std::size_t stride = layer.stride;
    const std::size_t pad = layer.padding;
    const double* xp = x.data();
    parallel_for(d.batch, [&](std::size_t b) {
        for (std::size_t c = 0; c < d.cin; ++c) {
            const double* plane = xp + (b * d.cin + c) * d.h * d.w;
            for (std::size_t kh = 0; kh < k; ++kh) {
                for (std::size_t kw = 0; kw < k; ++kw) {
                    const std::size_t row = (c * k + kh) * k + kw;
                    double* col_base = cols.data();
                    for (std::size_t ho = 0; ho < d.ho; ++ho) {
                        const std::ptrdiff_t hi =
                            static_cast<std::ptrdiff_t>(ho * stride + kh) -
                            static_cast<std::ptrdiff_t>(pad);
                        for (std::size_t wo = 0; wo < d.wo; ++wo) {
                            const std::ptrdiff_t wi =
                                static_cast<std::ptrdiff_t>(wo * stride + kw) -
                                static_cast<std::ptrdiff_t>(pad);
                            const std::size_t col = b * d.s + ho * d.wo + wo;
                            double v = 0.0;
                            if (hi >= 0 &&
                                hi < static_cast<std::ptrdiff_t>(d.h) &&
                                wi >= 0 &&
                                wi < static_cast<std::ptrdiff_t>(d.w)) {
                                v = plane[hi * static_cast<std::ptrdiff_t>(
                                              d.w) +
                                          wi];
                            }
                            col_base[col * d.ckk + row] = v;
                        }
                    }
                }
            }
        }
    });
}

// Scatter of per-sample column gradients back to input positions.
void col2im(const LayerSpec& layer, const ConvDims& d,
            const Eigen::MatrixXd& dcols, Tensor& dx) {
    const std::size_t k = layer.kernel;
    const std::size_t stride = layer.stride;
    const std::size_t pad = layer.padding;
    double* xp = dx.data();
    parallel_for(d.batch, [&](std::size_t b) {
        for (std::size_t c = 0; c < d.cin; ++c) {
            double* plane = xp + (b * d.cin + c) * d.h * d.w;
            for (std::size_t kh = 0; kh < k; ++kh) {
                for (std::size_t kw = 0; kw < k; ++kw) {
                    const std::size_t row = (c * k + kh) * k + kw;
                    const double* col_base = dcols.data();
                    for (std::size_t ho = 0; ho < d.ho; ++ho) {
                        const std::ptrdiff_t hi =
                            static_cast<std::ptrdiff_t>(ho * stride + kh) -
                            static_cast<std::ptrdiff_t>(pad);
                        if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(d.h)) {
                            continue;
                        }
                        for (std::size_t wo = 0; wo < d.wo; ++wo) {
                            const std::ptrdiff_t wi =
                                static_cast<std::ptrdiff_t>(wo * stride + kw) -
                                static_cast<std::ptrdiff_t>(pad);
                            if (wi < 0 ||
                                wi >= static_cast<std::ptrdiff_t>(d.w)) {
                                continue;
                            }
                            const std::size_t col = b * d.s + ho * d.wo + wo;
                            plane[hi * static_cast<std::ptrdiff_t>(d.w) + wi] +=
                                col_base[col * d.ckk + row];
                        }
                    }
                }
            }
        }
    });
}

Tensor conv2d_forward(const LayerSpec& layer, const ParamStore& params,
                      const Tensor& x) {
    const ConvDims d = conv_dims(layer, x);
    const Tensor& weight = params.at(layer.name + ".weight");
    const Tensor& bias = params.at(layer.name + ".bias");

    Eigen::MatrixXd cols;
    im2col(layer, x, d, cols);
    MapRowC wmat(weight.data(), static_cast<Eigen::Index>(d.cout),
                 static_cast<Eigen::Index>(d.ckk));
    Eigen::MatrixXd prod = wmat * cols;  // cout x (batch*s)

    Tensor out(batched({d.cout, d.ho, d.wo}, d.batch));
    double* op = out.data();
    const double* bp = bias.data();
    parallel_for(d.batch, [&](std::size_t b) {
        for (std::size_t o = 0; o < d.cout; ++o) {
            double* row = op + (b * d.cout + o) * d.s;
            for (std::size_t s = 0; s < d.s; ++s) {
                row[s] = prod(static_cast<Eigen::Index>(o),
                              static_cast<Eigen::Index>(b * d.s + s)) +
                         bp[o];
            }
        }
    });
    return out;
}

void conv2d_backward(const LayerSpec& layer, const ParamStore& params,
                     const Tensor& x, const Tensor& dout, bool want_wgrad,
                     std::map<std::string, Tensor>& grads, Tensor& dx) {
    const ConvDims d = conv_dims(layer, x);
    const Tensor& weight = params.at(layer.name + ".weight");

    Eigen::MatrixXd dy(static_cast<Eigen::Index>(d.cout),
                       static_cast<Eigen::Index>(d.batch * d.s));
    const double* dop = dout.data();
    parallel_for(d.batch, [&](std::size_t b) {
        for (std::size_t o = 0; o < d.cout; ++o) {
            const double* row = dop + (b * d.cout + o) * d.s;
            for (std::size_t s = 0; s < d.s; ++s) {
                dy(static_cast<Eigen::Index>(o),
                   static_cast<Eigen::Index>(b * d.s + s)) = row[s];
            }
        }
    });

    MapRowC wmat(weight.data(), static_cast<Eigen::Index>(d.cout),
                 static_cast<Eigen::Index>(d.ckk));
    Eigen::MatrixXd dcols = wmat.transpose() * dy;
    dx = Tensor(x.spec());
    col2im(layer, d, dcols, dx);

    if (want_wgrad) {
        Eigen::MatrixXd cols;
        im2col(layer, x, d, cols);
        Eigen::MatrixXd dw = dy * cols.transpose();  // cout x ckk
        Tensor dwt(weight.spec());
        MapRow(dwt.data(), dw.rows(), dw.cols()) = dw;
        Tensor dbt({d.cout});
        Eigen::VectorXd db = dy.rowwise().sum();
        for (std::size_t o = 0; o < d.cout; ++o) dbt[o] = db(o);
        grads.emplace(layer.name + ".weight", std::move(dwt));
        grads.emplace(layer.name + ".bias", std::move(dbt));
    }
}

Tensor linear_forward(const LayerSpec& layer, const ParamStore& params,
                      const Tensor& x) {
    const std::size_t batch = x.dim(0);
    const Tensor& weight = params.at(layer.name + ".weight");
    const Tensor& bias = params.at(layer.name + ".bias");

    Tensor out(batched({layer.out_features}, batch));
    MapRowC xm(x.data(), static_cast<Eigen::Index>(batch),
               static_cast<Eigen::Index>(layer.in_features));
    MapRowC wm(weight.data(), static_cast<Eigen::Index>(layer.out_features),
               static_cast<Eigen::Index>(layer.in_features));
    MapRow om(out.data(), static_cast<Eigen::Index>(batch),
              static_cast<Eigen::Index>(layer.out_features));
    om.noalias() = xm * wm.transpose();
    Eigen::Map<const Eigen::VectorXd> bm(
        bias.data(), static_cast<Eigen::Index>(layer.out_features));
    om.rowwise() += bm.transpose();
    return out;
}

void linear_backward(const LayerSpec& layer, const ParamStore& params,
                     const Tensor& x, const Tensor& dout, bool want_wgrad,
                     std::map<std::string, Tensor>& grads, Tensor& dx) {
    const std::size_t batch = x.dim(0);
    const Tensor& weight = params.at(layer.name + ".weight");
    MapRowC xm(x.data(), static_cast<Eigen::Index>(batch),
               static_cast<Eigen::Index>(layer.in_features));
    MapRowC wm(weight.data(), static_cast<Eigen::Index>(layer.out_features),
               static_cast<Eigen::Index>(layer.in_features));
    MapRowC dym(dout.data(), static_cast<Eigen::Index>(batch),
                static_cast<Eigen::Index>(layer.out_features));

    dx = Tensor(x.spec());
    MapRow dxm(dx.data(), static_cast<Eigen::Index>(batch),
               static_cast<Eigen::Index>(layer.in_features));
    dxm.noalias() = dym * wm;

    if (want_wgrad) {
        Tensor dwt(weight.spec());
        MapRow dwm(dwt.data(),
                   static_cast<Eigen::Index>(layer.out_features),
                   static_cast<Eigen::Index>(layer.in_features));
        dwm.noalias() = dym.transpose() * xm;
        Tensor dbt({layer.out_features});
        Eigen::VectorXd db = dym.colwise().sum();
        for (std::size_t o = 0; o < layer.out_features; ++o) dbt[o] = db(o);
        grads.emplace(layer.name + ".weight", std::move(dwt));
        grads.emplace(layer.name + ".bias", std::move(dbt));
    }
}

Tensor relu_forward(const Tensor& x) {
    Tensor out(x.spec());
    const double* xp = x.data();
    double* op = out.data();
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) op[i] = xp[i] > 0.0 ? xp[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& y, const Tensor& dout) {
    Tensor dx(y.spec());
    const double* yp = y.data();
    const double* dp = dout.data();
    double* xp = dx.data();
    const std::size_t n = y.numel();
    for (std::size_t i = 0; i < n; ++i) xp[i] = yp[i] > 0.0 ? dp[i] : 0.0;
    return dx;
}

Tensor maxpool_forward(const LayerSpec& layer, const Tensor& x,
                       LayerCacheData* cache) {
    const std::size_t batch = x.dim(0);
    const std::size_t c = x.dim(1);
    const std::size_t h = x.dim(2);
    const std::size_t w = x.dim(3);
    const std::size_t p = layer.pool;
    const std::size_t ho = (h - p) / p + 1;
    const std::size_t wo = (w - p) / p + 1;
    if (x.numel() > std::numeric_limits<std::uint32_t>::max()) {
        throw ShapeError("maxpool2d input too large for index cache");
    }

    Tensor out(batched({c, ho, wo}, batch));
    std::vector<std::uint32_t> argmax(out.numel());
    const double* xp = x.data();
    double* op = out.data();
    parallel_for(batch, [&](std::size_t b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t plane = (b * c + ch) * h * w;
            for (std::size_t oh = 0; oh < ho; ++oh) {
                for (std::size_t ow = 0; ow < wo; ++ow) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_idx = 0;
                    for (std::size_t dh = 0; dh < p; ++dh) {
                        for (std::size_t dw = 0; dw < p; ++dw) {
                            const std::size_t idx =
                                plane + (oh * p + dh) * w + (ow * p + dw);
                            if (xp[idx] > best) {
                                best = xp[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    const std::size_t oidx =
                        ((b * c + ch) * ho + oh) * wo + ow;
                    op[oidx] = best;
                    argmax[oidx] = static_cast<std::uint32_t>(best_idx);
                }
            }
        }
    });
    if (cache) cache->pool_argmax = std::move(argmax);
    return out;
}

Tensor maxpool_backward(const Tensor& x, const Tensor& dout,
                        const LayerCacheData& cache) {
    Tensor dx(x.spec());
    const double* dp = dout.data();
    double* xp = dx.data();
    const std::size_t batch = dout.dim(0);
    const std::size_t per_sample = dout.numel() / batch;
    parallel_for(batch, [&](std::size_t b) {
        for (std::size_t i = 0; i < per_sample; ++i) {
            const std::size_t oidx = b * per_sample + i;
            xp[cache.pool_argmax[oidx]] += dp[oidx];
        }
    });
    return dx;
}

Tensor batchnorm_forward(const LayerSpec& layer, const ParamStore& params,
                         const Tensor& x, Mode mode, LayerCacheData* cache,
                         std::vector<BatchNormStats>* stats) {
    const std::size_t batch = x.dim(0);
    const std::size_t c = x.dim(1);
    const std::size_t s = x.dim(2) * x.dim(3);
    const Tensor& gamma = params.at(layer.name + ".weight");
    const Tensor& beta = params.at(layer.name + ".bias");

    std::vector<double> mean(c), var(c);
    if (mode == Mode::Train) {
        const double* xp = x.data();
        parallel_for(c, [&](std::size_t ch) {
            double sum = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* row = xp + (b * c + ch) * s;
                for (std::size_t i = 0; i < s; ++i) sum += row[i];
            }
            const double m = sum / static_cast<double>(batch * s);
            double sq = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* row = xp + (b * c + ch) * s;
                for (std::size_t i = 0; i < s; ++i) {
                    const double d = row[i] - m;
                    sq += d * d;
                }
            }
            mean[ch] = m;
            var[ch] = sq / static_cast<double>(batch * s);
        });
        if (stats) stats->push_back({layer.name, mean, var});
        if (cache) {
            cache->bn_mean = mean;
            cache->bn_var = var;
        }
    } else {
        const Tensor& rm = params.at(layer.name + ".running_mean");
        const Tensor& rv = params.at(layer.name + ".running_var");
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = rm[ch];
            var[ch] = rv[ch];
        }
    }

    Tensor out(x.spec());
    const double* xp = x.data();
    double* op = out.data();
    parallel_for(c, [&](std::size_t ch) {
        const double scale = gamma[ch] / std::sqrt(var[ch] + kBnEps);
        const double shift = beta[ch] - mean[ch] * scale;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* row = xp + (b * c + ch) * s;
            double* orow = op + (b * c + ch) * s;
            for (std::size_t i = 0; i < s; ++i) {
                orow[i] = row[i] * scale + shift;
            }
        }
    });
    return out;
}

void batchnorm_backward(const LayerSpec& layer, const ParamStore& params,
                        const Tensor& x, const Tensor& dout,
                        const LayerCacheData& cache, bool want_wgrad,
                        std::map<std::string, Tensor>& grads, Tensor& dx) {
    const std::size_t batch = x.dim(0);
    const std::size_t c = x.dim(1);
    const std::size_t s = x.dim(2) * x.dim(3);
    const double m = static_cast<double>(batch * s);
    const Tensor& gamma = params.at(layer.name + ".weight");
    const bool train_stats = !cache.bn_mean.empty();

    std::vector<double> mean(c), var(c);
    if (train_stats) {
        mean = cache.bn_mean;
        var = cache.bn_var;
    } else {
        const Tensor& rm = params.at(layer.name + ".running_mean");
        const Tensor& rv = params.at(layer.name + ".running_var");
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = rm[ch];
            var[ch] = rv[ch];
        }
    }

    dx = Tensor(x.spec());
    Tensor dgamma({c}), dbeta({c});
    const double* xp = x.data();
    const double* dp = dout.data();
    double* dxp = dx.data();
    double* dgp = dgamma.data();
    double* dbp = dbeta.data();
    parallel_for(c, [&](std::size_t ch) {
        const double inv_std = 1.0 / std::sqrt(var[ch] + kBnEps);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* xrow = xp + (b * c + ch) * s;
            const double* drow = dp + (b * c + ch) * s;
            for (std::size_t i = 0; i < s; ++i) {
                sum_dy += drow[i];
                sum_dy_xhat += drow[i] * (xrow[i] - mean[ch]) * inv_std;
            }
        }
        dgp[ch] = sum_dy_xhat;
        dbp[ch] = sum_dy;
        const double g = gamma[ch] * inv_std;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* xrow = xp + (b * c + ch) * s;
            const double* drow = dp + (b * c + ch) * s;
            double* dxrow = dxp + (b * c + ch) * s;
            if (train_stats) {
                for (std::size_t i = 0; i < s; ++i) {
                    const double xhat = (xrow[i] - mean[ch]) * inv_std;
                    dxrow[i] = g * (drow[i] - sum_dy / m -
                                    xhat * sum_dy_xhat / m);
                }
            } else {
                for (std::size_t i = 0; i < s; ++i) {
                    dxrow[i] = g * drow[i];
                }
            }
        }
    });
    if (want_wgrad) {
        grads.emplace(layer.name + ".weight", std::move(dgamma));
        grads.emplace(layer.name + ".bias", std::move(dbeta));
    }
}

Tensor flatten_forward(const Tensor& x) {
    Tensor out(batched({x.numel() / x.dim(0)}, x.dim(0)));
    out.values() = x.values();
    return out;
}

Tensor reshape_like(const Tensor& grad, const TensorSpec& spec) {
    Tensor out(spec);
    out.values() = grad.values();
    return out;
}

Tensor layer_forward(const LayerSpec& layer, const ParamStore& params,
                     const Tensor& x, Mode mode, LayerCacheData* cache,
                     std::vector<BatchNormStats>* stats);

Tensor residual_forward(const LayerSpec& layer, const ParamStore& params,
                        const Tensor& x, Mode mode, LayerCacheData* cache,
                        std::vector<BatchNormStats>* stats) {
    Tensor cur = x;
    for (std::size_t i = 0; i < layer.body.size(); ++i) {
        LayerCacheData* inner_cache = nullptr;
        if (cache) {
            cache->inner_caches.emplace_back();
            inner_cache = &cache->inner_caches.back();
        }
        cur = layer_forward(layer.body[i], params, cur, mode, inner_cache,
                            stats);
        if (cache) cache->inner_acts.push_back(cur);
    }
    double* op = cur.data();
    const double* xp = x.data();
    const std::size_t n = cur.numel();
    for (std::size_t i = 0; i < n; ++i) op[i] += xp[i];
    return cur;
}

Tensor layer_forward(const LayerSpec& layer, const ParamStore& params,
                     const Tensor& x, Mode mode, LayerCacheData* cache,
                     std::vector<BatchNormStats>* stats) {
    switch (layer.kind) {
        case LayerKind::Conv2d: return conv2d_forward(layer, params, x);
        case LayerKind::Linear: return linear_forward(layer, params, x);
        case LayerKind::Relu: return relu_forward(x);
        case LayerKind::MaxPool2d: return maxpool_forward(layer, x, cache);
        case LayerKind::BatchNorm2d:
            return batchnorm_forward(layer, params, x, mode, cache, stats);
        case LayerKind::Flatten: return flatten_forward(x);
        case LayerKind::ResidualBlock:
            return residual_forward(layer, params, x, mode, cache, stats);
    }
    throw InvalidArgument("unknown layer kind");
}

// dout is consumed; returns gradient with respect to the layer input.
Tensor layer_backward(const LayerSpec& layer, const ParamStore& params,
                      const Tensor& input, const Tensor& output,
                      const Tensor& dout, const LayerCacheData& cache,
                      const ParamMask& mask,
                      std::map<std::string, Tensor>& grads);

Tensor residual_backward(const LayerSpec& layer, const ParamStore& params,
                         const Tensor& input, const Tensor& dout,
                         const LayerCacheData& cache, const ParamMask& mask,
                         std::map<std::string, Tensor>& grads) {
    Tensor d = dout;
    for (std::size_t i = layer.body.size(); i-- > 0;) {
        const Tensor& in =
            i == 0 ? input : cache.inner_acts[i - 1];
        const Tensor& out = cache.inner_acts[i];
        d = layer_backward(layer.body[i], params, in, out, d,
                           cache.inner_caches[i], mask, grads);
    }
    double* dp = d.data();
    const double* sp = dout.data();
    const std::size_t n = d.numel();
    for (std::size_t i = 0; i < n; ++i) dp[i] += sp[i];
    return d;
}

Tensor layer_backward(const LayerSpec& layer, const ParamStore& params,
                      const Tensor& input, const Tensor& output,
                      const Tensor& dout, const LayerCacheData& cache,
                      const ParamMask& mask,
                      std::map<std::string, Tensor>& grads) {
    const bool want_wgrad = mask.contains(layer.name + ".weight");
    Tensor dx;
    switch (layer.kind) {
        case LayerKind::Conv2d:
            conv2d_backward(layer, params, input, dout, want_wgrad, grads, dx);
            return dx;
        case LayerKind::Linear:
            linear_backward(layer, params, input, dout, want_wgrad, grads, dx);
            return dx;
        case LayerKind::Relu:
            return relu_backward(output, dout);
        case LayerKind::MaxPool2d:
            return maxpool_backward(input, dout, cache);
        case LayerKind::BatchNorm2d:
            batchnorm_backward(layer, params, input, dout, cache, want_wgrad,
                               grads, dx);
            return dx;
        case LayerKind::Flatten:
            return reshape_like(dout, input.spec());
        case LayerKind::ResidualBlock:
            return residual_backward(layer, params, input, dout, cache, mask,
                                     grads);
    }
    throw InvalidArgument("unknown layer kind");
}

void check_input(const ModelGraph& graph, const Tensor& x) {
    const auto& expect = graph.input_spec.shape;
    const auto& got = x.shape();
    if (got.size() != expect.size() + 1 ||
        !std::equal(expect.begin(), expect.end(), got.begin() + 1)) {
        throw ShapeError("input shape " + shape_to_string(got) +
                         " does not match batched input spec " +
                         shape_to_string(expect));
    }
    if (got[0] == 0) throw ShapeError("empty batch");
}

}  // namespace

ForwardResult forward(const ModelGraph& graph, const ParamStore& params,
                      const Tensor& x, const ForwardOptions& options) {
    check_input(graph, x);
    ForwardResult result;
    if (options.build_cache) result.caches.resize(graph.layers.size());

    Tensor cur = x;
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        LayerCacheData* cache =
            options.build_cache ? &result.caches[i] : nullptr;
        cur = layer_forward(graph.layers[i], params, cur, options.mode, cache,
                            options.mode == Mode::Train ? &result.bn_stats
                                                        : nullptr);
        check_finite(cur, graph.layers[i].name);
        if (options.keep_activations) result.activations.push_back(cur);
    }
    if (!options.keep_activations) {
        result.activations.push_back(std::move(cur));
    }
    return result;
}

ParamMask ParamMask::everything() {
    ParamMask m;
    m.all = true;
    return m;
}

ParamMask ParamMask::of(const std::vector<std::string>& names) {
    ParamMask m;
    m.names.insert(names.begin(), names.end());
    return m;
}

GradResult backprop(const ModelGraph& graph, const ParamStore& params,
                    const Tensor& x, const std::vector<int>& targets,
                    const LossSpec& loss, const ParamMask& mask,
                    bool want_input_grad, Mode mode) {
    ForwardOptions options;
    options.mode = mode;
    options.keep_activations = true;
    options.build_cache = true;
    ForwardResult fwd = forward(graph, params, x, options);

    GradResult result;
    result.bn_stats = std::move(fwd.bn_stats);
    Tensor d = loss_gradient(fwd.logits(), targets, loss, &result.loss);

    for (std::size_t i = graph.layers.size(); i-- > 0;) {
        const Tensor& input = i == 0 ? x : fwd.activations[i - 1];
        d = layer_backward(graph.layers[i], params, input, fwd.activations[i],
                           d, fwd.caches[i], mask, result.grads);
    }
    if (want_input_grad) result.input_grad = std::move(d);
    return result;
}

GradResult loss_and_grads(const ModelGraph& graph, const ParamStore& params,
                          const Tensor& x, const std::vector<int>& targets,
                          const LossSpec& loss, const ParamMask& mask) {
    if (mask.empty()) {
        throw InvalidArgument("loss_and_grads: empty mask, nothing to train");
    }
    for (const auto& name : mask.names) {
        if (!params.contains(name)) {
            throw InvalidArgument("mask names unknown tensor: " + name);
        }
    }
    return backprop(graph, params, x, targets, loss, mask, false, Mode::Train);
}

}  // namespace splitkit
