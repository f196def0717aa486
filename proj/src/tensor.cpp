#include "relcl/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace relcl {

namespace {
size_t product(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}
} // namespace

Tensor::Tensor(std::vector<size_t> s, double fill) : shape(std::move(s)) {
    data.assign(product(shape), fill);
}

Tensor Tensor::randn(std::vector<size_t> s, Rng& rng, double stddev) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.normal(0.0, stddev);
    return t;
}

Tensor Tensor::from_vector(std::vector<double> v) {
    Tensor t;
    t.shape = {v.size()};
    t.data = std::move(v);
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.shape = {1};
    t.data = {v};
    return t;
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::item on non-scalar, shape " + shape_str());
    return data[0];
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

} // namespace relcl
