#ifndef ADAPERT_METRICS_HPP
#define ADAPERT_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "degs.hpp"
#include "error.hpp"
#include "stats.hpp"

/**
 * @file metrics.hpp
 * @brief Delta-level evaluation metrics and their aggregate report.
 *
 * All metrics act on deltas against the control pseudobulk, so they are
 * invariant to a shared additive shift of predictions and truth.
 */

namespace adapert {

inline double pearson_delta(std::span<const double> predicted, std::span<const double> truth) {
    if (predicted.size() != truth.size()) throw DimensionError("pearson_delta: lengths differ");
    return pearson(predicted, truth);
}

struct PdsResult {
    std::vector<std::size_t> rank;
    std::vector<double> score;
    double mean = 0;
};

/**
 * Perturbation discrimination: for each p, rank its true delta among all test
 * truths by L1 distance to the prediction. Strict comparison, so ties with
 * the true perturbation never worsen its rank.
 */
inline PdsResult pds(const std::vector<std::vector<double>>& predicted, const std::vector<std::vector<double>>& truth) {
    if (predicted.size() != truth.size() || predicted.empty()) {
        throw UsageError("pds: need one prediction per true perturbation and at least one perturbation");
    }
    const std::size_t count = truth.size();
    const std::size_t n = truth.front().size();
    for (std::size_t p = 0; p < count; ++p) {
        if (predicted[p].size() != n || truth[p].size() != n) throw DimensionError("pds: vector lengths differ");
    }
    auto l1 = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) total += std::abs(a[i] - b[i]);
        return total;
    };
    PdsResult out;
    out.rank.resize(count);
    out.score.resize(count);
    for (std::size_t p = 0; p < count; ++p) {
        const double own = l1(predicted[p], truth[p]);
        std::size_t rank = 1;
        for (std::size_t t = 0; t < count; ++t) {
            if (t != p && l1(predicted[p], truth[t]) < own) ++rank;
        }
        out.rank[p] = rank;
        out.score[p] = 1.0 - static_cast<double>(rank - 1) / static_cast<double>(count);
    }
    out.mean = std::accumulate(out.score.begin(), out.score.end(), 0.0) / static_cast<double>(count);
    return out;
}

/// |G_true ∩ G_pred| / |G_true|; nullopt when G_true is empty.
inline std::optional<double> des_fdr(const std::vector<bool>& true_mask, const std::vector<bool>& pred_mask) {
    if (true_mask.size() != pred_mask.size()) throw DimensionError("des_fdr: mask lengths differ");
    std::size_t truth = 0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < true_mask.size(); ++i) {
        truth += true_mask[i] ? 1 : 0;
        hit += true_mask[i] && pred_mask[i] ? 1 : 0;
    }
    if (truth == 0) return std::nullopt;
    return static_cast<double>(hit) / static_cast<double>(truth);
}

/// Genes ordered by |delta| descending, ties to the lower index.
inline std::vector<std::size_t> rank_by_magnitude(std::span<const double> delta) {
    std::vector<std::size_t> order(delta.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(delta[a]) > std::abs(delta[b]); });
    return order;
}

/// Fraction of true DEGs in the k largest predicted changes, out of min(k, |G_true|).
inline std::optional<double> des_at_k(std::span<const double> predicted, std::span<const std::size_t> true_degs,
                                      std::size_t k) {
    if (k < 1) throw UsageError("des_at_k: k must be at least 1");
    if (true_degs.empty()) return std::nullopt;
    auto order = rank_by_magnitude(predicted);
    std::vector<bool> is_true(predicted.size(), false);
    for (std::size_t g : true_degs) is_true.at(g) = true;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i) hit += is_true[order[i]] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(std::min(k, true_degs.size()));
}

inline std::vector<double> gather(std::span<const double> v, std::span<const std::size_t> idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(v[i]);
    return out;
}

/// Spearman over the DEG subset. Same arithmetic as the weighted variant with unit weights.
inline double de_spearman_sig(std::span<const double> predicted_degs, std::span<const double> true_degs) {
    if (predicted_degs.size() != true_degs.size()) throw DimensionError("de_spearman_sig: lengths differ");
    if (predicted_degs.size() < 2) throw DegenerateInputError("de_spearman_sig: fewer than 2 DEGs");
    std::vector<double> ones(true_degs.size(), 1.0);
    return weighted_spearman(predicted_degs, true_degs, ones);
}

/// Weighted Pearson on average ranks, weights = |true delta| unless given.
inline double de_spearman_lfc(std::span<const double> predicted_degs, std::span<const double> true_degs,
                              std::span<const double> weights = {}) {
    if (predicted_degs.size() != true_degs.size()) throw DimensionError("de_spearman_lfc: lengths differ");
    if (predicted_degs.size() < 2) throw DegenerateInputError("de_spearman_lfc: fewer than 2 DEGs");
    std::vector<double> w;
    if (weights.empty()) {
        for (double v : true_degs) w.push_back(std::abs(v));
        weights = w;
    }
    return weighted_spearman(predicted_degs, true_degs, weights);
}

inline int sign_of(double v) { return (v > 0) - (v < 0); }

inline double direction_match(std::span<const double> predicted_degs, std::span<const double> true_degs) {
    if (predicted_degs.size() != true_degs.size()) throw DimensionError("direction_match: lengths differ");
    if (predicted_degs.empty()) throw DegenerateInputError("direction_match: no DEGs");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < true_degs.size(); ++i) {
        agree += sign_of(predicted_degs[i]) == sign_of(true_degs[i]) ? 1 : 0;
    }
    return static_cast<double>(agree) / static_cast<double>(true_degs.size());
}

// ---- reporting ------------------------------------------------------------------------------

struct MetricSummary {
    double mean = 0;
    double std = 0;
    std::size_t n = 0;
};

/// Mean and population std.
inline MetricSummary summarize(std::span<const double> values) {
    MetricSummary s;
    s.n = values.size();
    if (s.n == 0) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n));
    return s;
}

using MetricValues = std::map<std::string, double>;

struct MetricsReport {
    std::map<std::string, MetricSummary> overall;
    std::map<std::string, std::map<std::string, MetricSummary>> strata;
    std::map<std::string, MetricValues> per_perturbation;
    std::map<std::string, std::string> stratum_of;
    /// Per metric, how many perturbations had it undefined.
    std::map<std::string, std::size_t> excluded;
};

/**
 * Aggregate per-perturbation values. Every perturbation must have a stratum.
 * A metric missing from a perturbation's map counts as excluded for it.
 */
inline MetricsReport report(const std::map<std::string, MetricValues>& per_pert,
                            const std::map<std::string, EffectStratum>& strata,
                            const std::vector<std::string>& metric_names) {
    MetricsReport out;
    out.per_perturbation = per_pert;
    std::map<std::string, std::vector<double>> all;
    std::map<std::string, std::map<std::string, std::vector<double>>> by_stratum;
    for (const auto& [name, values] : per_pert) {
        auto it = strata.find(name);
        if (it == strata.end()) throw UsageError("report: perturbation '" + name + "' has no stratum");
        const std::string stratum = stratum_name(it->second);
        out.stratum_of[name] = stratum;
        for (const auto& metric : metric_names) {
            auto v = values.find(metric);
            if (v == values.end()) {
                ++out.excluded[metric];
                continue;
            }
            all[metric].push_back(v->second);
            by_stratum[stratum][metric].push_back(v->second);
        }
    }
    for (const auto& metric : metric_names) {
        out.overall[metric] = summarize(all[metric]);
        out.excluded.try_emplace(metric, 0);
    }
    for (const auto& [stratum, metrics] : by_stratum) {
        for (const auto& [metric, values] : metrics) out.strata[stratum][metric] = summarize(values);
    }
    return out;
}

inline nlohmann::json to_json(const MetricSummary& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json overall = nlohmann::json::object();
    for (const auto& [m, s] : r.overall) overall[m] = to_json(s);
    nlohmann::json strata = nlohmann::json::object();
    for (const auto& [st, metrics] : r.strata) {
        for (const auto& [m, s] : metrics) strata[st][m] = to_json(s);
    }
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [name, values] : r.per_perturbation) {
        nlohmann::json entry(values);
        entry["stratum"] = r.stratum_of.at(name);
        per[name] = entry;
    }
    return {{"overall", overall}, {"strata", strata}, {"per_perturbation", per}, {"excluded", r.excluded}};
}

// ---- full evaluation ------------------------------------------------------------------------

struct EvaluationInput {
    std::vector<std::string> names;
    /// Predicted and true deltas against the control mean, one per perturbation.
    std::vector<std::vector<double>> predicted_delta;
    std::vector<std::vector<double>> true_delta;
    /// Ground-truth DEG rows (test data) and the DEG masks of the predictions.
    std::vector<const PerturbationDegs*> truth;
    std::vector<std::vector<bool>> predicted_mask;
    std::vector<std::size_t> des_k{10, 20, 50};
    std::size_t gene_count = 0;
};

inline std::vector<std::string> metric_names(const std::vector<std::size_t>& ks) {
    std::vector<std::string> out{"pearson_delta", "pds", "des_fdr"};
    for (std::size_t k : ks) out.push_back("des_at_" + std::to_string(k));
    out.insert(out.end(), {"de_spearman_sig", "de_spearman_lfc", "direction_match", "deg_fraction"});
    return out;
}

/// Per-perturbation metrics plus the PDS pass and the stratified report.
inline MetricsReport evaluate(const EvaluationInput& in) {
    const std::size_t count = in.names.size();
    if (in.predicted_delta.size() != count || in.true_delta.size() != count || in.truth.size() != count ||
        in.predicted_mask.size() != count) {
        throw UsageError("evaluate: inconsistent input sizes");
    }
    std::map<std::string, MetricValues> per;
    std::map<std::string, EffectStratum> strata;
    auto pds_result = pds(in.predicted_delta, in.true_delta);
    for (std::size_t p = 0; p < count; ++p) {
        MetricValues v;
        const auto& pred = in.predicted_delta[p];
        const auto& truth = in.true_delta[p];
        const auto degs = in.truth[p]->deg_indices();
        try {
            v["pearson_delta"] = pearson_delta(pred, truth);
        } catch (const DegenerateInputError&) {
        }
        v["pds"] = pds_result.score[p];
        if (auto d = des_fdr(in.truth[p]->deg_mask, in.predicted_mask[p])) v["des_fdr"] = *d;
        for (std::size_t k : in.des_k) {
            if (auto d = des_at_k(pred, degs, k)) v["des_at_" + std::to_string(k)] = *d;
        }
        auto pd = gather(pred, degs);
        auto td = gather(truth, degs);
        try {
            v["de_spearman_sig"] = de_spearman_sig(pd, td);
        } catch (const DegenerateInputError&) {
        }
        try {
            v["de_spearman_lfc"] = de_spearman_lfc(pd, td);
        } catch (const DegenerateInputError&) {
        }
        if (!degs.empty()) v["direction_match"] = direction_match(pd, td);
        v["deg_fraction"] = static_cast<double>(degs.size()) / static_cast<double>(in.gene_count);
        per[in.names[p]] = std::move(v);
        strata[in.names[p]] = classify_effect(degs.size(), in.gene_count);
    }
    return report(per, strata, metric_names(in.des_k));
}

} // namespace adapert

#endif
