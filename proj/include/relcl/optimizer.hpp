#pragma once
// Adam with decoupled weight decay and optional global-norm gradient clipping.

#include <vector>

#include "relcl/tensor.hpp"

namespace relcl {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 1.0; // global L2 norm; <= 0 disables clipping
};

class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    // params and grads must be index-aligned and keep a stable order across
    // steps (moment state is keyed by position).
    void step(const std::vector<Tensor*>& params, std::vector<Tensor>& grads);

    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    long long t_ = 0;
};

} // namespace relcl
