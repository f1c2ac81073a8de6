// SPDX-License-Identifier: Apache-2.0
//
// Compares tape gradients against central finite differences.

#pragma once

#include <functional>

#include "mdsum/tape.hpp"

namespace mdsum::num {

struct GradCheckReport {
    Tensor analytic;
    Tensor numeric;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool passed = false;
};

/// Builds a scalar loss from the input Var on the given tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Per coordinate the relative error is |a-n| / max(|a|, |n|, floor), and 0 when
/// both gradients are exactly zero. `floor` keeps coordinates whose true
/// gradient is zero from turning finite-difference noise into huge ratios.
GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double step = 1e-5, double tol = 1e-4,
                           double floor = 1e-6);

/// Builds a scalar loss on the given tape, binding parameters with Tape::param.
using LossFn = std::function<Var(Tape&)>;

/// Same check for a Parameter read by `f`: the analytic side is the gradient
/// accumulated into p.grad, the numeric side perturbs p.value in place.
/// p.grad is cleared first and p.value is restored afterwards.
GradCheckReport grad_check(const LossFn& f, Parameter& p, double step = 1e-5, double tol = 1e-4,
                           double floor = 1e-6);

}  // namespace mdsum::num
