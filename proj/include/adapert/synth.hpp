#ifndef ADAPERT_SYNTH_HPP
#define ADAPERT_SYNTH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "degs.hpp"
#include "embeddings.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "random.hpp"

/**
 * @file synth.hpp
 * @brief Synthetic perturbation data with planted sparse responses.
 *
 * Genes are split into contiguous modules. The graph is dense inside a module
 * and sparse across modules. Each perturbation targets one gene, knocks it
 * down, and shifts a prefix of its module's fixed response list (overflowing
 * into the next module), so perturbations in the same module share most of
 * their response and the responders sit close to the target in the graph.
 * Semantic vectors mix a module centroid with a per-gene hash vector.
 */

namespace adapert {

struct SynthConfig {
    std::size_t genes = 200;
    std::size_t perturbations = 40;
    std::size_t cells = 20;
    std::size_t modules = 8;
    /// Planted DEG fraction for the small, medium and large strata.
    std::array<double, 3> deg_fraction{0.03, 0.07, 0.15};
    double effect = 0.5;
    double noise = 0.1;
    std::size_t embed_dim = 32;
    double intra_edge_prob = 0.3;
    double inter_edge_prob = 0.01;
    /// Weight of the per-gene hash vector relative to the module centroid.
    double embed_gene_weight = 0.5;
};

struct SynthData {
    PerturbationDataset dataset;
    std::map<std::size_t, std::vector<std::size_t>> planted;
    std::map<std::size_t, EffectStratum> planted_stratum;
    std::vector<std::size_t> module_of;
    KnowledgeGraph graph;
    SemanticEmbeddings embeddings;
};

inline void validate(const SynthConfig& c) {
    if (c.genes < 20) throw UsageError("synth: need at least 20 genes");
    if (c.perturbations < 4) throw UsageError("synth: need at least 4 perturbations");
    if (c.perturbations > c.genes) throw UsageError("synth: more perturbations than genes");
    if (c.cells < 4) throw UsageError("synth: need at least 4 cells per condition");
    if (c.modules < 1 || c.modules > c.genes) throw UsageError("synth: module count out of range");
    for (double f : c.deg_fraction) {
        if (!(f > 0) || f > 1) throw UsageError("synth: DEG fractions must be in (0, 1]");
    }
    if (!(c.effect >= 0) || !(c.noise >= 0)) throw UsageError("synth: effect and noise must be nonnegative");
    if (c.embed_dim == 0) throw UsageError("synth: embedding dimension must be positive");
    if (c.intra_edge_prob < 0 || c.intra_edge_prob > 1 || c.inter_edge_prob < 0 || c.inter_edge_prob > 1) {
        throw UsageError("synth: edge probabilities must be in [0, 1]");
    }
}

inline std::string synth_gene_name(std::size_t i, std::size_t total) {
    std::string digits = std::to_string(i);
    const std::size_t width = std::to_string(total - 1).size();
    return "G" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

inline SynthData synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    const std::size_t n = cfg.genes;
    const std::size_t m = cfg.modules;

    std::vector<std::string> names(n);
    std::vector<std::size_t> module_of(n);
    std::vector<std::vector<std::size_t>> members(m);
    for (std::size_t g = 0; g < n; ++g) {
        names[g] = synth_gene_name(g, n);
        module_of[g] = g * m / n;
        members[module_of[g]].push_back(g);
    }
    GeneVocab vocab(names);

    Rng graph_rng(derive_seed(seed, 1));
    std::vector<WeightedEdge> edges;
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
            const bool same = module_of[u] == module_of[v];
            const double draw = graph_rng.uniform();
            const double weight = same ? graph_rng.uniform(0.5, 1.0) : graph_rng.uniform(0.1, 0.5);
            if (draw < (same ? cfg.intra_edge_prob : cfg.inter_edge_prob)) {
                edges.push_back({u, v, weight});
            }
        }
    }
    KnowledgeGraph graph(n, edges);

    // Per-module response list and signed effect per gene.
    Rng effect_rng(derive_seed(seed, 2));
    std::vector<std::vector<std::size_t>> response_order(m);
    std::vector<std::vector<double>> module_effect(m, std::vector<double>(n, 0.0));
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t step = 0; step < m; ++step) {
            auto block = members[(k + step) % m];
            effect_rng.shuffle(block);
            response_order[k].insert(response_order[k].end(), block.begin(), block.end());
        }
        for (std::size_t g = 0; g < n; ++g) {
            const double sign = effect_rng.uniform() < 0.5 ? -1.0 : 1.0;
            module_effect[k][g] = sign * cfg.effect * effect_rng.uniform(0.6, 1.4);
        }
    }

    Rng assign_rng(derive_seed(seed, 4));
    std::vector<bool> used(n, false);
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < cfg.perturbations; ++i) {
        std::size_t k = i % m;
        std::vector<std::size_t> free;
        for (std::size_t step = 0; free.empty(); ++step) {
            for (std::size_t g : members[(k + step) % m]) {
                if (!used[g]) free.push_back(g);
            }
        }
        std::size_t gene = free[assign_rng.below(free.size())];
        used[gene] = true;
        targets.push_back(gene);
    }

    std::vector<double> baseline(n);
    for (double& b : baseline) b = effect_rng.uniform(1.0, 3.0);

    Rng cell_rng(derive_seed(seed, 3));
    auto sample_block = [&](const std::vector<double>& mean) {
        Matrix block(cfg.cells, n);
        for (std::size_t r = 0; r < cfg.cells; ++r) {
            for (std::size_t g = 0; g < n; ++g) {
                block(r, g) = std::max(0.0, mean[g] + cfg.noise * cell_rng.normal());
            }
        }
        return block;
    };

    SynthData out;
    Matrix control = sample_block(baseline);
    std::vector<std::pair<std::size_t, Matrix>> blocks;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::size_t target = targets[i];
        const std::size_t k = module_of[target];
        const auto stratum = static_cast<EffectStratum>(i % 3);
        const double fraction = cfg.deg_fraction[i % 3];
        const std::size_t count =
            std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
        std::vector<std::size_t> degs{target};
        for (std::size_t g : response_order[k]) {
            if (degs.size() >= count) break;
            if (g != target) degs.push_back(g);
        }
        std::sort(degs.begin(), degs.end());
        std::vector<double> mean = baseline;
        for (std::size_t g : degs) mean[g] += module_effect[k][g];
        mean[target] = baseline[target] - cfg.effect;
        blocks.emplace_back(target, sample_block(mean));
        out.planted.emplace(target, std::move(degs));
        out.planted_stratum.emplace(target, stratum);
    }

    SemanticEmbeddings emb{Matrix(n, cfg.embed_dim), 0};
    for (std::size_t g = 0; g < n; ++g) {
        auto centroid = hash_embedding("module:" + std::to_string(module_of[g]), cfg.embed_dim);
        auto own = hash_embedding(names[g], cfg.embed_dim);
        std::vector<double> v(cfg.embed_dim);
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = centroid[j] + cfg.embed_gene_weight * own[j];
        const double norm = std::sqrt(squared_norm(v));
        for (std::size_t j = 0; j < v.size(); ++j) emb.table(g, j) = v[j] / norm;
    }

    out.dataset = PerturbationDataset(std::move(vocab), std::move(control), std::move(blocks));
    out.module_of = std::move(module_of);
    out.graph = std::move(graph);
    out.embeddings = std::move(emb);
    return out;
}

} // namespace adapert

#endif
