#ifndef ADAPERT_STATS_HPP
#define ADAPERT_STATS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "error.hpp"

/**
 * @file stats.hpp
 * @brief Two-sample tests, multiple-testing correction and (weighted) correlations.
 */

namespace adapert {

struct WelchResult {
    double t = 0;
    double df = 0;
    double p_value = 1;
};

inline double mean_of(std::span<const double> x) {
    double total = 0;
    for (double v : x) total += v;
    return total / static_cast<double>(x.size());
}

/// Unbiased sample variance.
inline double variance_of(std::span<const double> x, double mean) {
    double total = 0;
    for (double v : x) total += (v - mean) * (v - mean);
    return total / static_cast<double>(x.size() - 1);
}

/**
 * Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
 *
 * When both groups have zero variance the test degenerates: equal means give
 * p = 1 and different means give p = 0.
 */
inline WelchResult welch_t_test(std::span<const double> control, std::span<const double> perturbed) {
    if (control.size() < 2 || perturbed.size() < 2) {
        throw UsageError("welch_t_test: need at least 2 samples per group");
    }
    const double n1 = static_cast<double>(control.size());
    const double n2 = static_cast<double>(perturbed.size());
    const double m1 = mean_of(control);
    const double m2 = mean_of(perturbed);
    const double a = variance_of(control, m1) / n1;
    const double b = variance_of(perturbed, m2) / n2;
    const double se2 = a + b;
    WelchResult out;
    if (se2 == 0) {
        out.t = m1 == m2 ? 0.0 : (m2 > m1 ? INFINITY : -INFINITY);
        out.df = n1 + n2 - 2;
        out.p_value = m1 == m2 ? 1.0 : 0.0;
        return out;
    }
    out.t = (m2 - m1) / std::sqrt(se2);
    out.df = se2 * se2 / (a * a / (n1 - 1) + b * b / (n2 - 1));
    // P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    const double x = out.df / (out.df + out.t * out.t);
    out.p_value = x >= 1.0 ? 1.0 : boost::math::ibeta(out.df / 2, 0.5, x);
    out.p_value = std::clamp(out.p_value, 0.0, 1.0);
    return out;
}

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
inline std::vector<double> benjamini_hochberg(std::span<const double> pvalues) {
    const std::size_t n = pvalues.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
    std::vector<double> adjusted(n);
    double running = 1.0;
    for (std::size_t k = n; k-- > 0;) {
        const std::size_t i = order[k];
        running = std::min(running, pvalues[i] * (static_cast<double>(n) / static_cast<double>(k + 1)));
        adjusted[i] = std::min(running, 1.0);
    }
    return adjusted;
}

/// 1-based ranks, ties receive the average of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

/**
 * Weighted Pearson correlation. Weights are rescaled by their maximum first,
 * so any uniform weight vector reduces to the unweighted computation exactly.
 */
inline double weighted_pearson(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
    if (x.size() != y.size() || x.size() != w.size()) {
        throw DimensionError("weighted_pearson: lengths differ");
    }
    if (x.size() < 2) {
        throw DegenerateInputError("correlation needs at least 2 values");
    }
    double wmax = 0;
    for (double v : w) {
        if (v < 0) throw UsageError("weighted_pearson: negative weight");
        wmax = std::max(wmax, v);
    }
    if (wmax == 0) {
        throw DegenerateInputError("weighted_pearson: all weights are zero");
    }
    std::vector<double> ws(w.size());
    double wsum = 0;
    double mx = 0;
    double my = 0;
    for (std::size_t i = 0; i < ws.size(); ++i) {
        ws[i] = w[i] / wmax;
        wsum += ws[i];
        mx += ws[i] * x[i];
        my += ws[i] * y[i];
    }
    mx /= wsum;
    my /= wsum;
    double sxy = 0;
    double sxx = 0;
    double syy = 0;
    for (std::size_t i = 0; i < ws.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += ws[i] * dx * dy;
        sxx += ws[i] * dx * dx;
        syy += ws[i] * dy * dy;
    }
    if (sxx == 0 || syy == 0) {
        throw DegenerateInputError("correlation of a constant vector is undefined");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    std::vector<double> ones(x.size(), 1.0);
    return weighted_pearson(x, y, ones);
}

/// Spearman correlation: Pearson on average-tied ranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    return pearson(rx, ry);
}

/// Weighted Pearson correlation on average-tied ranks.
inline double weighted_spearman(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    return weighted_pearson(rx, ry, w);
}

} // namespace adapert

#endif
