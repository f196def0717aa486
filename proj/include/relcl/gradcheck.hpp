#pragma once
// Central finite-difference validation of analytic gradients.

#include <functional>
#include <vector>

#include "relcl/tape.hpp"

namespace relcl {

// A loss under test: builds the loss on the given tape, registering every
// parameter tensor through tape.param(...) on the same Tensor objects that
// appear in `params`. Called repeatedly with perturbed parameter values.
using LossBuilder = std::function<NodeId(Tape&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    size_t coords_checked = 0;
    size_t worst_param = 0;
    size_t worst_coord = 0;
};

// Compares the analytic gradient of every coordinate of every tensor in
// `params` against (f(p+h) - f(p-h)) / 2h. The error is relative with a unit
// floor: |analytic - fd| / max(1, |analytic|, |fd|), so coordinates with
// sub-unit gradients are held to the same absolute precision.
GradCheckReport grad_check(const LossBuilder& build, const std::vector<Tensor*>& params, double h);

} // namespace relcl
