#include "relcl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace relcl {

Tensor softmax(const Tensor& logits) {
    if (logits.ndim() != 1 || logits.numel() == 0)
        throw std::domain_error("softmax: input must be a non-empty 1-D tensor");
    if (!logits.all_finite()) throw std::domain_error("softmax: input must be finite");
    Tensor out = logits;
    kernels::softmax_row(out.data.data(), out.numel());
    return out;
}

CrossEntropyResult cross_entropy(const Tensor& probs, size_t true_class) {
    if (probs.ndim() != 1 || probs.numel() == 0)
        throw std::domain_error("cross_entropy: probs must be a non-empty 1-D tensor");
    if (true_class >= probs.numel())
        throw std::invalid_argument("cross_entropy: true_class out of range");
    double p = probs.at(true_class);
    CrossEntropyResult r;
    if (p < kProbFloor) {
        p = kProbFloor;
        r.clamped = true;
    }
    r.value = -std::log(p);
    return r;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 1 || b.ndim() != 1 || a.numel() != b.numel())
        throw std::invalid_argument("cosine_similarity: inputs must be 1-D of equal length");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        dot += a.at(i) * b.at(i);
        na += a.at(i) * a.at(i);
        nb += b.at(i) * b.at(i);
    }
    if (na == 0.0 || nb == 0.0)
        throw std::domain_error("cosine_similarity: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

Tensor mean_pool(const Tensor& hidden, size_t span_start, size_t span_end) {
    if (hidden.ndim() != 2) throw std::invalid_argument("mean_pool: hidden must be 2-D");
    if (span_start > span_end || span_end >= hidden.rows())
        throw std::domain_error("mean_pool: span out of range");
    const size_t d = hidden.cols();
    Tensor out({d});
    for (size_t r = span_start; r <= span_end; ++r) {
        const double* row = hidden.row_ptr(r);
        for (size_t j = 0; j < d; ++j) out.at(j) += row[j];
    }
    const double inv = 1.0 / static_cast<double>(span_end - span_start + 1);
    for (size_t j = 0; j < d; ++j) out.at(j) *= inv;
    return out;
}

namespace kernels {

void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            if (accumulate)
                crow[j] += acc;
            else
                crow[j] = acc;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void softmax_row(double* x, size_t n) {
    double mx = x[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    const double inv = 1.0 / sum;
    for (size_t i = 0; i < n; ++i) x[i] *= inv;
}

namespace {
constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
} // namespace

double gelu(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

} // namespace kernels

} // namespace relcl
