#ifndef ADAPERT_GRAD_CHECK_HPP
#define ADAPERT_GRAD_CHECK_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"

namespace adapert {

/// What the function under test returns: its scalar value and the analytic gradient of every parameter.
struct ValueAndGradient {
    double value = 0;
    std::vector<Matrix> gradients;
};

/**
 * Compare analytic gradients with central finite differences.
 *
 * `fn(params)` must be deterministic; it is evaluated twice at the base point
 * and a `NumericalError` is thrown if the two values differ.
 *
 * @return max over all scalar parameters of |analytic - numeric| / max(1, |analytic|).
 */
template<typename Function>
double grad_check(Function&& fn, std::vector<Matrix>& params, double eps) {
    if (!(eps > 0)) {
        throw UsageError("grad_check: epsilon must be positive");
    }
    ValueAndGradient base = fn(params);
    ValueAndGradient again = fn(params);
    if (base.value != again.value) {
        throw NumericalError("grad_check: function is not deterministic under a fixed seed");
    }
    if (base.gradients.size() != params.size()) {
        throw DimensionError("grad_check: gradient count does not match parameter count");
    }
    double worst = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        require_same_shape(params[k], base.gradients[k], "grad_check");
        for (std::size_t i = 0; i < params[k].size(); ++i) {
            const double saved = params[k][i];
            params[k][i] = saved + eps;
            const double up = fn(params).value;
            params[k][i] = saved - eps;
            const double down = fn(params).value;
            params[k][i] = saved;
            const double numeric = (up - down) / (2 * eps);
            const double analytic = base.gradients[k][i];
            worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
        }
    }
    return worst;
}

} // namespace adapert

#endif
