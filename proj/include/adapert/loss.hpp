#ifndef ADAPERT_LOSS_HPP
#define ADAPERT_LOSS_HPP

#include <cmath>
#include <span>
#include <vector>

#include "degs.hpp"
#include "error.hpp"
#include "model.hpp"
#include "tape.hpp"

/**
 * @file loss.hpp
 * @brief Reconstruction, non-DEG Huber and subgraph alignment objectives.
 */

namespace adapert {

struct LossWeights {
    double lambda_non = 0.01;
    double lambda_align = 0.1;
    /// Huber threshold as a multiple of the pooled non-DEG delta std.
    double delta_scale = 1.0;

    void validate() const {
        if (lambda_non < 0 || lambda_align < 0) throw UsageError("loss weights must be nonnegative");
        if (!(delta_scale > 0) || !std::isfinite(delta_scale)) throw UsageError("delta scale must be positive");
    }
};

inline double huber(double r, double delta) {
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

/**
 * delta = scale * population std of all non-DEG pseudobulk deltas pooled over
 * the table. Throws `NumericalError` when that std is zero; callers fall back to 1.
 */
inline double estimate_huber_delta(const DegTable& table, double scale = 1.0) {
    double sum = 0;
    double sumsq = 0;
    std::size_t count = 0;
    for (const auto& [gene, row] : table.perturbations) {
        for (std::size_t i = 0; i < row.delta.size(); ++i) {
            if (!row.deg_mask[i]) {
                sum += row.delta[i];
                ++count;
            }
        }
    }
    if (count == 0) throw UsageError("estimate_huber_delta: no non-DEG entries in the table");
    const double mean = sum / static_cast<double>(count);
    for (const auto& [gene, row] : table.perturbations) {
        for (std::size_t i = 0; i < row.delta.size(); ++i) {
            if (!row.deg_mask[i]) sumsq += (row.delta[i] - mean) * (row.delta[i] - mean);
        }
    }
    const double delta = scale * std::sqrt(sumsq / static_cast<double>(count));
    if (!(delta > 0)) throw NumericalError("estimate_huber_delta: non-DEG deltas have zero spread");
    return delta;
}

// ---- tape builders ------------------------------------------------------------------------

/// Mean squared error over genes.
inline ad::NodeId recon_loss(ad::Tape& t, ad::NodeId prediction, std::span<const double> target) {
    return t.mse(prediction, t.constant(Matrix::row(target)));
}

/// Mean Huber penalty of predicted change on the non-DEG genes (0 when there are none).
inline ad::NodeId non_deg_loss(ad::Tape& t, ad::NodeId prediction, std::span<const double> control_mean,
                               std::span<const std::size_t> non_degs, double delta) {
    if (non_degs.empty()) return t.constant(Matrix(1, 1, 0.0));
    Matrix mask(1, control_mean.size());
    for (std::size_t i : non_degs) mask[i] = 1.0;
    ad::NodeId change = t.sub(prediction, t.constant(Matrix::row(control_mean)));
    ad::NodeId masked = t.mul(t.huber(change, delta), t.constant(std::move(mask)));
    return t.scale(t.sum_all(masked), 1.0 / static_cast<double>(non_degs.size()));
}

/// Signed delta with non-DEG entries zeroed.
inline std::vector<double> masked_delta(std::span<const double> delta, const std::vector<bool>& deg_mask) {
    std::vector<double> y(delta.begin(), delta.end());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!deg_mask[i]) y[i] = 0.0;
    }
    return y;
}

/// Squared distance between unit(z) and unit(g(y)); zero with zero gradient if either norm vanishes.
inline ad::NodeId align_loss(const BoundParams& bp, ad::NodeId z_context, std::span<const double> delta,
                             const std::vector<bool>& deg_mask) {
    ad::Tape& t = bp.tape();
    auto y = masked_delta(delta, deg_mask);
    ad::NodeId target = t.linear(t.constant(Matrix::row(y)), bp("align.head"));
    return t.cosine_distance(z_context, target);
}

struct LossNodes {
    ad::NodeId recon{};
    ad::NodeId non_deg{};
    ad::NodeId align{};
    ad::NodeId total{};
};

/// L_recon + lambda_non L_non + lambda_align L_align; zero-weight terms are left out of the sum.
inline ad::NodeId total_loss(ad::Tape& t, const LossNodes& parts, double lambda_non, double lambda_align) {
    ad::NodeId total = parts.recon;
    if (lambda_non > 0) total = t.add(total, t.scale(parts.non_deg, lambda_non));
    if (lambda_align > 0) total = t.add(total, t.scale(parts.align, lambda_align));
    return total;
}

// ---- value-level wrappers -----------------------------------------------------------------

inline double recon_loss(std::span<const double> prediction, std::span<const double> target) {
    if (prediction.size() != target.size()) throw DimensionError("recon_loss: lengths differ");
    ad::Tape t;
    return t.scalar(recon_loss(t, t.constant(Matrix::row(prediction)), target));
}

inline double non_deg_loss(std::span<const double> prediction, std::span<const double> control_mean,
                           std::span<const std::size_t> non_degs, double delta) {
    if (prediction.size() != control_mean.size()) throw DimensionError("non_deg_loss: lengths differ");
    ad::Tape t;
    return t.scalar(non_deg_loss(t, t.constant(Matrix::row(prediction)), control_mean, non_degs, delta));
}

inline double align_loss(std::span<const double> z_context, std::span<const double> delta,
                         const std::vector<bool>& deg_mask, const ModelParams& params) {
    ad::Tape t;
    BoundParams bp(t, params);
    return t.scalar(align_loss(bp, t.constant(Matrix::row(z_context)), delta, deg_mask));
}

inline double total_loss(double recon, double non_deg, double align, const LossWeights& w) {
    return recon + w.lambda_non * non_deg + w.lambda_align * align;
}

} // namespace adapert

#endif
