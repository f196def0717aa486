#pragma once
// Finite-difference validation of every loss in the system (CE, ED, RD
// weighted and unweighted, MLM) on randomly generated micro-instances.

#include <string>
#include <vector>

#include "relcl/gradcheck.hpp"

namespace relcl {

struct LossCheckOutcome {
    std::string loss;
    double max_rel_err = 0.0;
    size_t coords_checked = 0;
    size_t instances = 0;
};

// Runs `instances` random micro-instances per loss at step size h and keeps
// the worst relative error. Micro-instances use a tiny encoder (d=8, one
// block) over micro corpora so double-precision central differences stay
// well inside the tolerance.
std::vector<LossCheckOutcome> run_loss_gradchecks(size_t instances, double h);

} // namespace relcl
