// SPDX-License-Identifier: Apache-2.0

#include "mdsum/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mdsum/errors.hpp"

namespace mdsum::num {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
    Tape tape(false);
    Var out = f(tape, tape.leaf(x, false));
    const double v = out.value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: f(x) is not finite");
    return v;
}

void compare(GradCheckReport& report, double tol, double floor) {
    const Tensor& x = report.analytic;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = report.analytic[i], n = report.numeric[i];
        if (a == 0.0 && n == 0.0) continue;
        const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    report.passed = report.max_rel_error <= tol;
}

// Central differences of `eval` over the coordinates of `probe`, restored afterwards.
template <typename Eval>
Tensor central_differences(Tensor& probe, double step, Eval eval) {
    Tensor numeric(probe.shape());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double up = eval();
        probe[i] = orig - step;
        const double down = eval();
        probe[i] = orig;
        numeric[i] = (up - down) / (2.0 * step);
    }
    return numeric;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double step, double tol, double floor) {
    if (!(step > 0.0)) throw DomainError("grad_check: step must be positive");
    GradCheckReport report;
    {
        Tape tape;
        Var input = tape.leaf(x);
        Var out = f(tape, input);
        if (!std::isfinite(out.value().item())) throw NumericError("grad_check: f(x) is not finite");
        tape.backward(out);
        report.analytic = input.grad();
    }
    Tensor probe = x;
    report.numeric = central_differences(probe, step, [&] { return evaluate(f, probe); });
    compare(report, tol, floor);
    return report;
}

GradCheckReport grad_check(const LossFn& f, Parameter& p, double step, double tol, double floor) {
    if (!(step > 0.0)) throw DomainError("grad_check: step must be positive");
    GradCheckReport report;
    p.zero_grad();
    {
        Tape tape;
        Var out = f(tape);
        if (!std::isfinite(out.value().item())) throw NumericError("grad_check: f(x) is not finite");
        tape.backward(out);
    }
    report.analytic = p.grad;
    p.zero_grad();
    report.numeric = central_differences(p.value, step, [&] {
        Tape tape(false);
        const double v = f(tape).value().item();
        if (!std::isfinite(v)) throw NumericError("grad_check: f(x) is not finite");
        return v;
    });
    compare(report, tol, floor);
    return report;
}

}  // namespace mdsum::num
