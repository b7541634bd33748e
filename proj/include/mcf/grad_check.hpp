#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "mcf/ops.hpp"
#include "mcf/tensor.hpp"

namespace mcf {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Compares the analytic gradient of a scalar-valued function against central
// differences. f must be pure in x's values: it is re-evaluated many times.
// Relative error per element: |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                                  double eps = 1e-5) {
    x.set_requires_grad(true);
    x.zero_grad();
    std::vector<double> analytic;
    {
        TapeScope scope;
        Tensor loss = f(x);
        backward(scope.tape(), loss);
        analytic = x.grad();
    }

    GradCheckResult res;
    NoGradScope ng;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = x.data()[i];
        x.data()[i] = orig + eps;
        const double fp = f(x).value();
        x.data()[i] = orig - eps;
        const double fm = f(x).value();
        x.data()[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(analytic[i] - numeric) / denom;
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.worst_index = i;
            res.analytic_at_worst = analytic[i];
            res.numeric_at_worst = numeric;
        }
    }
    return res;
}

}  // namespace mcf
