#ifndef ADAPERT_DEGS_HPP
#define ADAPERT_DEGS_HPP

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "stats.hpp"

/**
 * @file degs.hpp
 * @brief Per-gene differential expression against control and effect-size strata.
 */

namespace adapert {

enum class DegCorrection { none, benjamini_hochberg };

inline const char* correction_name(DegCorrection c) {
    return c == DegCorrection::none ? "none" : "benjamini-hochberg";
}

inline DegCorrection parse_correction(const std::string& text) {
    if (text == "none") return DegCorrection::none;
    if (text == "benjamini-hochberg" || text == "bh") return DegCorrection::benjamini_hochberg;
    throw UsageError("unknown DEG correction '" + text + "'");
}

struct DegOptions {
    double alpha = 0.05;
    DegCorrection correction = DegCorrection::none;
    int threads = 1;
};

/// One perturbation's row of the table.
struct PerturbationDegs {
    /// Values compared against alpha (adjusted when a correction is active).
    std::vector<double> pvalues;
    std::vector<bool> deg_mask;
    /// Pseudobulk delta, perturbed mean minus control mean.
    std::vector<double> delta;

    std::vector<std::size_t> deg_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < deg_mask.size(); ++i) {
            if (deg_mask[i]) out.push_back(i);
        }
        return out;
    }
    std::vector<std::size_t> non_deg_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < deg_mask.size(); ++i) {
            if (!deg_mask[i]) out.push_back(i);
        }
        return out;
    }
    std::size_t deg_count() const {
        std::size_t n = 0;
        for (bool b : deg_mask) n += b ? 1 : 0;
        return n;
    }
};

struct DegTable {
    double alpha = 0.05;
    DegCorrection correction = DegCorrection::none;
    std::string test = "welch-two-sided";
    std::size_t gene_count = 0;
    std::map<std::size_t, PerturbationDegs> perturbations;

    const PerturbationDegs& at(std::size_t gene) const {
        auto it = perturbations.find(gene);
        if (it == perturbations.end()) {
            throw UsageError("DEG table has no entry for gene " + std::to_string(gene));
        }
        return it->second;
    }
};

/// Welch test of every gene column of `perturbed` against `control`.
inline PerturbationDegs test_block(const Matrix& control, const Matrix& perturbed, const DegOptions& opt) {
    if (control.cols() != perturbed.cols()) {
        throw DimensionError("test_block: gene counts differ");
    }
    const std::size_t n = control.cols();
    PerturbationDegs out;
    out.pvalues.assign(n, 1.0);
    out.delta.assign(n, 0.0);
    parallel_for(n, opt.threads, [&](std::size_t g) {
        std::vector<double> a(control.rows());
        std::vector<double> b(perturbed.rows());
        for (std::size_t r = 0; r < a.size(); ++r) a[r] = control(r, g);
        for (std::size_t r = 0; r < b.size(); ++r) b[r] = perturbed(r, g);
        out.pvalues[g] = welch_t_test(a, b).p_value;
        out.delta[g] = mean_of(b) - mean_of(a);
    });
    if (opt.correction == DegCorrection::benjamini_hochberg) {
        out.pvalues = benjamini_hochberg(out.pvalues);
    }
    out.deg_mask.resize(n);
    for (std::size_t g = 0; g < n; ++g) out.deg_mask[g] = out.pvalues[g] < opt.alpha;
    return out;
}

/// DEG table over the listed perturbations only; no other block is read.
inline DegTable compute_degs(const PerturbationDataset& data, std::span<const std::size_t> genes,
                             const DegOptions& opt = {}) {
    if (!(opt.alpha > 0) || opt.alpha > 1) {
        throw UsageError("DEG alpha must be in (0, 1]");
    }
    DegTable table;
    table.alpha = opt.alpha;
    table.correction = opt.correction;
    table.gene_count = data.gene_count();
    for (std::size_t gene : genes) {
        table.perturbations.emplace(gene, test_block(data.control(), data.block(gene), opt));
    }
    return table;
}

inline DegTable compute_degs(const PerturbationDataset& data, const DegOptions& opt = {}) {
    return compute_degs(data, data.perturbations(), opt);
}

enum class EffectStratum { small, medium, large };

inline const char* stratum_name(EffectStratum s) {
    switch (s) {
    case EffectStratum::small: return "small";
    case EffectStratum::medium: return "medium";
    case EffectStratum::large: return "large";
    }
    return "?";
}

/// Fraction of DEGs: below 0.05 small, 0.05 to 0.10 inclusive medium, above 0.10 large.
inline EffectStratum classify_effect(double deg_fraction) {
    if (deg_fraction < 0.05) return EffectStratum::small;
    if (deg_fraction <= 0.10) return EffectStratum::medium;
    return EffectStratum::large;
}

inline EffectStratum classify_effect(std::size_t deg_count, std::size_t gene_count) {
    // Integer cross-multiplication keeps the boundaries exact (e.g. 5 of 100 is medium).
    if (deg_count * 100 < gene_count * 5) return EffectStratum::small;
    if (deg_count * 100 <= gene_count * 10) return EffectStratum::medium;
    return EffectStratum::large;
}

inline std::map<std::size_t, EffectStratum> effect_size_strata(const DegTable& table) {
    std::map<std::size_t, EffectStratum> out;
    for (const auto& [gene, row] : table.perturbations) {
        out.emplace(gene, classify_effect(row.deg_count(), table.gene_count));
    }
    return out;
}

inline nlohmann::json to_json(const DegTable& table, const GeneVocab& vocab) {
    nlohmann::json perts = nlohmann::json::object();
    for (const auto& [gene, row] : table.perturbations) {
        std::vector<int> mask(row.deg_mask.begin(), row.deg_mask.end());
        perts[vocab.name(gene)] = {{"pvalues", row.pvalues}, {"deg_mask", mask}, {"delta", row.delta}};
    }
    return {{"alpha", table.alpha},
            {"test", table.test},
            {"correction", correction_name(table.correction)},
            {"perturbations", perts}};
}

} // namespace adapert

#endif
