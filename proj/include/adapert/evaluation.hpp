#ifndef ADAPERT_EVALUATION_HPP
#define ADAPERT_EVALUATION_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "degs.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "parallel.hpp"

/**
 * @file evaluation.hpp
 * @brief Scoring predicted pseudobulk profiles against held-out perturbations.
 */

namespace adapert {

/**
 * DEG mask of a prediction: the observed perturbed cells are shifted so their
 * mean equals the predicted profile, then tested against control as usual.
 */
inline std::vector<bool> predicted_deg_mask(const Matrix& control, const Matrix& perturbed,
                                            std::span<const double> predicted_mean, const DegOptions& opt) {
    if (predicted_mean.size() != perturbed.cols()) throw DimensionError("predicted_deg_mask: length mismatch");
    const auto observed = column_means(perturbed);
    Matrix shifted = perturbed;
    for (std::size_t r = 0; r < shifted.rows(); ++r) {
        for (std::size_t g = 0; g < shifted.cols(); ++g) shifted(r, g) += predicted_mean[g] - observed[g];
    }
    return test_block(control, shifted, opt).deg_mask;
}

struct Evaluation {
    MetricsReport report;
    DegTable truth;
    std::vector<std::string> names;
    std::vector<std::vector<double>> predicted_delta;
    std::vector<std::vector<double>> true_delta;
    std::vector<std::vector<bool>> true_mask;
};

/// `predictions[i]` is the predicted mean profile of perturbation `genes[i]`.
inline Evaluation evaluate_predictions(const PerturbationDataset& data, std::span<const std::size_t> genes,
                                       const std::vector<std::vector<double>>& predictions, const DegOptions& opt,
                                       const std::vector<std::size_t>& des_k) {
    if (predictions.size() != genes.size()) throw UsageError("evaluate_predictions: one prediction per perturbation");
    if (genes.empty()) throw UsageError("evaluate_predictions: no perturbations to score");
    Evaluation out;
    out.truth = compute_degs(data, genes, opt);
    const auto control_mean = column_means(data.control());
    EvaluationInput in;
    in.des_k = des_k;
    in.gene_count = data.gene_count();
    std::vector<std::vector<bool>> masks(genes.size());
    DegOptions inner = opt;
    inner.threads = 1;
    parallel_for(genes.size(), opt.threads, [&](std::size_t i) {
        masks[i] = predicted_deg_mask(data.control(), data.block(genes[i]), predictions[i], inner);
    });
    for (std::size_t i = 0; i < genes.size(); ++i) {
        const auto& row = out.truth.at(genes[i]);
        std::vector<double> pred(data.gene_count());
        for (std::size_t g = 0; g < pred.size(); ++g) pred[g] = predictions[i][g] - control_mean[g];
        in.names.push_back(data.vocab().name(genes[i]));
        in.predicted_delta.push_back(std::move(pred));
        in.true_delta.push_back(row.delta);
        in.truth.push_back(&row);
        out.true_mask.push_back(row.deg_mask);
    }
    in.predicted_mask = std::move(masks);
    out.report = evaluate(in);
    out.names = in.names;
    out.predicted_delta = std::move(in.predicted_delta);
    out.true_delta = std::move(in.true_delta);
    return out;
}

/// Mean |predicted delta| over the true non-DEG genes, pooled across perturbations.
inline double mean_abs_non_deg_delta(const Evaluation& e) {
    double total = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < e.names.size(); ++i) {
        for (std::size_t g = 0; g < e.predicted_delta[i].size(); ++g) {
            if (!e.true_mask[i][g]) {
                total += std::abs(e.predicted_delta[i][g]);
                ++n;
            }
        }
    }
    return n ? total / static_cast<double>(n) : 0.0;
}

} // namespace adapert

#endif
