#pragma once
// Plain (non-differentiable) numeric operations. The tape in tape.hpp reuses
// the same kernels for its forward pass.

#include <cstddef>
#include <span>

#include "relcl/tensor.hpp"

namespace relcl {

// Probability floor used when taking logs of probabilities. Keeps losses
// finite on degenerate distributions.
inline constexpr double kProbFloor = 1e-12;

// Numerically stable softmax over a non-empty 1-D tensor.
// Output entries are positive and sum to 1; shift-invariant.
Tensor softmax(const Tensor& logits);

struct CrossEntropyResult {
    double value = 0.0;
    bool clamped = false; // probs[true_class] hit the kProbFloor floor
};

// -log(probs[true_class]); probs must be a distribution over >=1 classes.
CrossEntropyResult cross_entropy(const Tensor& probs, size_t true_class);

// Cosine similarity of two equal-length 1-D tensors with nonzero norm.
double cosine_similarity(const Tensor& a, const Tensor& b);

// Arithmetic mean of rows span_start..span_end (inclusive) of a 2-D tensor.
Tensor mean_pool(const Tensor& hidden, size_t span_start, size_t span_end);

namespace kernels {

// C (m x n) = A (m x k) . B (k x n), optionally accumulating into C.
void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n, bool accumulate);
// C (m x n) = A (m x k) . B^T (n x k)
void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n, bool accumulate);
// C (m x n) = A^T (k x m) . B (k x n)
void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n, bool accumulate);

// In-place stable softmax over one row of length n.
void softmax_row(double* x, size_t n);

double gelu(double x);
double gelu_derivative(double x);

} // namespace kernels

} // namespace relcl
