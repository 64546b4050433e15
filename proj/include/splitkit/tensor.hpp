#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace splitkit {

enum class Dtype { Float32, Float64, Uint8 };

std::string dtype_name(Dtype dtype);
Dtype dtype_from_name(const std::string& name);
std::size_t dtype_size(Dtype dtype);

// Shape plus serialization dtype.  All dimensions must be >= 1.
struct TensorSpec {
    std::vector<std::size_t> shape;
    Dtype dtype = Dtype::Float64;

    std::size_t numel() const;
    std::string to_string() const;
    bool operator==(const TensorSpec&) const = default;

    void validate() const;
};

// Dense row-major tensor.  Values are held as double regardless of the
// spec dtype; the dtype only controls the on-disk encoding.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(TensorSpec spec);
    Tensor(std::vector<std::size_t> shape, Dtype dtype = Dtype::Float64);

    const TensorSpec& spec() const { return spec_; }
    const std::vector<std::size_t>& shape() const { return spec_.shape; }
    Dtype dtype() const { return spec_.dtype; }
    std::size_t numel() const { return data_.size(); }
    std::size_t rank() const { return spec_.shape.size(); }
    std::size_t dim(std::size_t i) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Element access for common ranks (row-major).
    double& at2(std::size_t i, std::size_t j);
    double at2(std::size_t i, std::size_t j) const;
    double& at4(std::size_t b, std::size_t c, std::size_t h, std::size_t w);
    double at4(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const;

    void fill(double value);
    bool all_finite() const;

    // Throws ShapeError unless the shape matches exactly.
    void require_shape(const std::vector<std::size_t>& shape,
                       const std::string& context) const;

    // Serializes values in the spec dtype, little-endian.
    std::vector<std::uint8_t> to_bytes() const;
    static Tensor from_bytes(const TensorSpec& spec,
                             const std::uint8_t* bytes, std::size_t size);

    bool operator==(const Tensor&) const = default;

private:
    TensorSpec spec_;
    std::vector<double> data_;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

}  // namespace splitkit
