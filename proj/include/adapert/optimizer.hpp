#ifndef ADAPERT_OPTIMIZER_HPP
#define ADAPERT_OPTIMIZER_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"

namespace adapert {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// L2 penalty folded into the gradient.
    double weight_decay = 0.0;
};

/// First and second moment accumulators, one pair per parameter.
struct OptimizerState {
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;
    std::uint64_t step = 0;
};

namespace detail {

inline void check_update_shapes(std::span<Matrix> params, std::span<const Matrix> grads) {
    if (params.size() != grads.size()) {
        throw DimensionError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        require_same_shape(params[k], grads[k], "optimizer");
    }
}

} // namespace detail

/// Bias-corrected adaptive-moment update, in place.
inline void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, OptimizerState& state,
                      const AdamOptions& opt) {
    if (!(opt.learning_rate > 0)) {
        throw UsageError("adam: learning rate must be positive");
    }
    detail::check_update_shapes(params, grads);
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.rows(), p.cols());
            state.second_moment.emplace_back(p.rows(), p.cols());
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw DimensionError("adam: optimizer state was built for a different parameter set");
    }
    ++state.step;
    const double correction1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& w = params[k];
        Matrix& m = state.first_moment[k];
        Matrix& v = state.second_moment[k];
        require_same_shape(w, m, "adam state");
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = grads[k][i] + opt.weight_decay * w[i];
            m[i] = opt.beta1 * m[i] + (1 - opt.beta1) * g;
            v[i] = opt.beta2 * v[i] + (1 - opt.beta2) * g * g;
            const double mhat = m[i] / correction1;
            const double vhat = v[i] / correction2;
            w[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.epsilon);
        }
    }
}

inline void sgd_step(std::span<Matrix> params, std::span<const Matrix> grads, OptimizerState& state,
                     const AdamOptions& opt) {
    detail::check_update_shapes(params, grads);
    ++state.step;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k].size(); ++i) {
            params[k][i] -= opt.learning_rate * (grads[k][i] + opt.weight_decay * params[k][i]);
        }
    }
}

} // namespace adapert

#endif
