#pragma once
// Dense row-major tensor of 64-bit floats. Value-semantic, shape checked.

#include <cstddef>
#include <string>
#include <vector>

#include "relcl/rng.hpp"

namespace relcl {

struct Tensor {
    std::vector<size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::initializer_list<size_t> s, double fill = 0.0)
        : Tensor(std::vector<size_t>(s), fill) {}
    explicit Tensor(std::vector<size_t> s, double fill = 0.0);

    static Tensor zeros(std::vector<size_t> s) { return Tensor(std::move(s), 0.0); }
    static Tensor full(std::vector<size_t> s, double v) { return Tensor(std::move(s), v); }
    static Tensor randn(std::vector<size_t> s, Rng& rng, double stddev);
    static Tensor from_vector(std::vector<double> v);
    static Tensor scalar(double v);

    size_t numel() const { return data.size(); }
    size_t ndim() const { return shape.size(); }
    size_t rows() const { return shape.at(0); }
    size_t cols() const { return shape.at(1); }

    double& at(size_t i) { return data[i]; }
    double at(size_t i) const { return data[i]; }
    double& at(size_t i, size_t j) { return data[i * shape[1] + j]; }
    double at(size_t i, size_t j) const { return data[i * shape[1] + j]; }

    double* row_ptr(size_t i) { return data.data() + i * shape[1]; }
    const double* row_ptr(size_t i) const { return data.data() + i * shape[1]; }

    // Single value of a one-element tensor.
    double item() const;

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }

    std::string shape_str() const;
};

} // namespace relcl
