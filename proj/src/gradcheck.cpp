#include "relcl/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace relcl {

GradCheckReport grad_check(const LossBuilder& build, const std::vector<Tensor*>& params, double h) {
    if (!(h > 0.0) || h > 1e-3) throw std::invalid_argument("grad_check: h must be in (0, 1e-3]");

    // One analytic pass.
    std::vector<Tensor> analytic;
    {
        Tape tape;
        NodeId loss = build(tape);
        tape.backward(loss);
        analytic.reserve(params.size());
        for (Tensor* p : params) analytic.push_back(tape.grad_of(*p));
    }

    GradCheckReport report;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        for (size_t ci = 0; ci < p.numel(); ++ci) {
            const double saved = p.at(ci);
            p.at(ci) = saved + h;
            double f_plus;
            {
                Tape tape(false);
                f_plus = tape.value(build(tape)).item();
            }
            p.at(ci) = saved - h;
            double f_minus;
            {
                Tape tape(false);
                f_minus = tape.value(build(tape)).item();
            }
            p.at(ci) = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double an = analytic[pi].at(ci);
            const double rel = std::fabs(an - fd) / std::max({1.0, std::fabs(an), std::fabs(fd)});
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = pi;
                report.worst_coord = ci;
            }
        }
    }
    return report;
}

} // namespace relcl
