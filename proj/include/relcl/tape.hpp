#pragma once
// Reverse-mode automatic differentiation over dense f64 tensors.
//
// A Tape records primitive ops as they execute. backward(loss) replays the
// record once, in reverse creation order, accumulating gradients into every
// node that (transitively) depends on a parameter. Parameter nodes are bound
// to external Tensor storage so a training step can read gradients out and
// a finite-difference check can perturb the same storage.
//
// A tape is confined to one thread for its lifetime; tensors are values and
// may move freely between threads.

#include <cstdint>
#include <functional>
#include <vector>

#include "relcl/ops.hpp"
#include "relcl/tensor.hpp"

namespace relcl {

using NodeId = uint32_t;

class Tape {
public:
    // grad_enabled=false records values only; backward() is then unavailable.
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- leaves ----
    NodeId leaf(Tensor value);                 // constant input, no gradient
    NodeId param(Tensor& external);            // bound parameter, gradient tracked

    // ---- structural ops ----
    NodeId embed_rows(NodeId table, std::vector<size_t> ids);   // (V x d), n -> (n x d)
    NodeId select_rows(NodeId a, std::vector<size_t> ids);      // gather rows
    NodeId row(NodeId a, size_t i);                             // (m x n) -> (n)
    NodeId slice_cols(NodeId a, size_t c0, size_t c1);          // half-open [c0, c1)
    NodeId concat_cols(const std::vector<NodeId>& parts);       // 2-D, same row count
    NodeId concat_vec(NodeId a, NodeId b);                      // 1-D concat
    NodeId stack_scalars(const std::vector<NodeId>& scalars);   // k scalars -> (k)

    // ---- arithmetic ----
    NodeId add(NodeId a, NodeId b);            // same shape
    NodeId sub(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_row_broadcast(NodeId mat, NodeId vec);
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId affine_vec(NodeId w, NodeId x, NodeId b);  // (out x in) . (in) + (out)
    NodeId combine_scalars(const std::vector<NodeId>& xs, const std::vector<double>& coeffs);
    NodeId sum_elements(NodeId a);                    // any shape -> scalar

    // ---- nonlinearities ----
    NodeId gelu(NodeId a);
    // Inverted dropout: keeps elements with probability 1-rate, scaled by
    // 1/(1-rate). Mask drawn from rng at record time.
    NodeId dropout(NodeId a, double rate, Rng& rng);
    // scores[i,j] + bias[clamp(j - i, -radius, radius) + radius] for square
    // score matrices; bias has length 2 * radius + 1.
    NodeId add_relative_bias(NodeId scores, NodeId bias, size_t radius);
    NodeId softmax_rows(NodeId a);
    NodeId softmax_vec(NodeId a);
    NodeId layer_norm_rows(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);

    // ---- pooling / similarity ----
    NodeId mean_rows_range(NodeId a, size_t r0, size_t r1);     // inclusive rows -> (d)
    NodeId cosine(NodeId a, NodeId b);                          // 1-D, 1-D -> scalar

    // ---- losses ----
    NodeId ce_from_logits(NodeId logits, size_t target);        // fused softmax + CE
    NodeId ce_from_probs(NodeId probs, size_t target, bool* clamped = nullptr);
    // log(sum_i w_i * exp(s_i)) with constant weights w_i >= 0 (not all zero).
    NodeId weighted_lse(NodeId scores, std::vector<double> weights);

    // ---- execution ----
    void backward(NodeId loss);
    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const;
    // Gradient accumulated for an external parameter bound via param().
    // Zero tensor if the parameter did not influence the loss.
    Tensor grad_of(const Tensor& external) const;

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void()> back; // empty for leaves / no-grad tapes
    };

    NodeId push(Tensor value, bool needs_grad, std::function<void()> back);
    Tensor& grad_ref(NodeId id) { return nodes_[id].grad; }
    bool track(NodeId id) const { return nodes_[id].needs_grad; }

    std::vector<Node> nodes_;
    std::vector<std::pair<NodeId, const Tensor*>> param_bindings_;
    bool grad_enabled_ = true;
    bool ran_backward_ = false;
};

} // namespace relcl
