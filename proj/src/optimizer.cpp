#include "relcl/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace relcl {

void Adam::step(const std::vector<Tensor*>& params, std::vector<Tensor>& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("Adam::step: params/grads size mismatch");
    if (m_.empty()) {
        for (Tensor* p : params) {
            m_.push_back(Tensor::zeros(p->shape));
            v_.push_back(Tensor::zeros(p->shape));
        }
    }
    if (m_.size() != params.size())
        throw std::invalid_argument("Adam::step: parameter set changed between steps");

    if (cfg_.grad_clip > 0.0) {
        double sq = 0.0;
        for (const Tensor& g : grads)
            for (double x : g.data) sq += x * x;
        const double norm = std::sqrt(sq);
        if (norm > cfg_.grad_clip) {
            const double s = cfg_.grad_clip / norm;
            for (Tensor& g : grads)
                for (double& x : g.data) x *= s;
        }
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (size_t j = 0; j < p.numel(); ++j) {
            m.at(j) = cfg_.beta1 * m.at(j) + (1.0 - cfg_.beta1) * g.at(j);
            v.at(j) = cfg_.beta2 * v.at(j) + (1.0 - cfg_.beta2) * g.at(j) * g.at(j);
            const double mhat = m.at(j) / bc1;
            const double vhat = v.at(j) / bc2;
            p.at(j) -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p.at(j));
        }
    }
}

} // namespace relcl
