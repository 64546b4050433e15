#include "splitkit/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "splitkit/errors.hpp"

namespace splitkit {

std::string dtype_name(Dtype dtype) {
    switch (dtype) {
        case Dtype::Float32: return "float32";
        case Dtype::Float64: return "float64";
        case Dtype::Uint8: return "uint8";
    }
    throw InvalidArgument("unknown dtype");
}

Dtype dtype_from_name(const std::string& name) {
    if (name == "float32") return Dtype::Float32;
    if (name == "float64") return Dtype::Float64;
    if (name == "uint8") return Dtype::Uint8;
    throw FormatError("unknown dtype name: " + name);
}

std::size_t dtype_size(Dtype dtype) {
    switch (dtype) {
        case Dtype::Float32: return 4;
        case Dtype::Float64: return 8;
        case Dtype::Uint8: return 1;
    }
    throw InvalidArgument("unknown dtype");
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

std::size_t TensorSpec::numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

std::string TensorSpec::to_string() const {
    return dtype_name(dtype) + shape_to_string(shape);
}

void TensorSpec::validate() const {
    if (shape.empty()) throw ShapeError("tensor spec has empty shape");
    for (auto d : shape) {
        if (d == 0) {
            throw ShapeError("tensor spec has zero dimension: " +
                             shape_to_string(shape));
        }
    }
}

Tensor::Tensor(TensorSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    data_.assign(spec_.numel(), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, Dtype dtype)
    : Tensor(TensorSpec{std::move(shape), dtype}) {}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= spec_.shape.size()) {
        throw ShapeError("dimension index out of range for shape " +
                         shape_to_string(spec_.shape));
    }
    return spec_.shape[i];
}

double& Tensor::at2(std::size_t i, std::size_t j) {
    return data_[i * spec_.shape[1] + j];
}

double Tensor::at2(std::size_t i, std::size_t j) const {
    return data_[i * spec_.shape[1] + j];
}

double& Tensor::at4(std::size_t b, std::size_t c, std::size_t h,
                    std::size_t w) {
    const auto& s = spec_.shape;
    return data_[((b * s[1] + c) * s[2] + h) * s[3] + w];
}

double Tensor::at4(std::size_t b, std::size_t c, std::size_t h,
                   std::size_t w) const {
    const auto& s = spec_.shape;
    return data_[((b * s[1] + c) * s[2] + h) * s[3] + w];
}

void Tensor::fill(double value) {
    for (auto& v : data_) v = value;
}

bool Tensor::all_finite() const {
    for (auto v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::require_shape(const std::vector<std::size_t>& shape,
                           const std::string& context) const {
    if (spec_.shape != shape) {
        throw ShapeError(context + ": expected shape " +
                         shape_to_string(shape) + ", got " +
                         shape_to_string(spec_.shape));
    }
}

namespace {

// All payloads are little-endian.  The build targets little-endian hosts;
// fail loudly anywhere else rather than writing byte-swapped files.
static_assert(std::endian::native == std::endian::little,
              "tensor serialization assumes a little-endian host");

}  // namespace

std::vector<std::uint8_t> Tensor::to_bytes() const {
    const std::size_t n = numel();
    std::vector<std::uint8_t> out(n * dtype_size(spec_.dtype));
    switch (spec_.dtype) {
        case Dtype::Float64:
            std::memcpy(out.data(), data_.data(), n * sizeof(double));
            break;
        case Dtype::Float32: {
            auto* p = reinterpret_cast<float*>(out.data());
            for (std::size_t i = 0; i < n; ++i) {
                p[i] = static_cast<float>(data_[i]);
            }
            break;
        }
        case Dtype::Uint8: {
            for (std::size_t i = 0; i < n; ++i) {
                const double v = data_[i];
                if (v < 0.0 || v > 255.0 || v != std::floor(v)) {
                    throw NumericError(
                        "uint8 tensor holds a value outside {0..255}: " +
                        std::to_string(v));
                }
                out[i] = static_cast<std::uint8_t>(v);
            }
            break;
        }
    }
    return out;
}

Tensor Tensor::from_bytes(const TensorSpec& spec, const std::uint8_t* bytes,
                          std::size_t size) {
    spec.validate();
    const std::size_t n = spec.numel();
    if (size != n * dtype_size(spec.dtype)) {
        throw FormatError("tensor payload size " + std::to_string(size) +
                          " does not match spec " + spec.to_string());
    }
    Tensor t(spec);
    switch (spec.dtype) {
        case Dtype::Float64:
            std::memcpy(t.data(), bytes, n * sizeof(double));
            break;
        case Dtype::Float32: {
            const auto* p = reinterpret_cast<const float*>(bytes);
            for (std::size_t i = 0; i < n; ++i) t[i] = p[i];
            break;
        }
        case Dtype::Uint8:
            for (std::size_t i = 0; i < n; ++i) t[i] = bytes[i];
            break;
    }
    return t;
}

}  // namespace splitkit
