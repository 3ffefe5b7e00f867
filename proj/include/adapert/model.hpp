#ifndef ADAPERT_MODEL_HPP
#define ADAPERT_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embeddings.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "matrix.hpp"
#include "random.hpp"
#include "tape.hpp"

/**
 * @file model.hpp
 * @brief Graph-conditioned perturbation response model.
 *
 * Pipeline for one perturbation p:
 *   H      = L rounds of self-looped neighbor averaging over a learned node table
 *   s~     = W_s s_p
 *   alpha  = softmax_v( w . relu(W_c [h_v || s~]) )
 *   alpha~ = softmax_v( (log alpha_v + g_v) / tau )   (g = 0 in eval mode)
 *   select = { v : alpha~_v > T } plus p itself
 *   z_p    = P * sum_{v in select} h_v                 (straight-through to alpha~)
 *   x^     = DEC([ENC(x_c) || z_p])
 *
 * Vectors are stored as 1 x n rows; weights are (out x in) and applied as x W^T.
 */

namespace adapert {

enum class SelectionMode { threshold, top_m };
enum class Aggregation { mean, weighted };
enum class ForwardMode { train, eval };

inline SelectionMode parse_selection_mode(const std::string& s) {
    if (s == "threshold") return SelectionMode::threshold;
    if (s == "top_m") return SelectionMode::top_m;
    throw UsageError("unknown selection_mode '" + s + "'");
}

inline const char* selection_mode_name(SelectionMode m) { return m == SelectionMode::threshold ? "threshold" : "top_m"; }

inline Aggregation parse_aggregation(const std::string& s) {
    if (s == "mean") return Aggregation::mean;
    if (s == "weighted") return Aggregation::weighted;
    throw UsageError("unknown aggregation '" + s + "'");
}

inline const char* aggregation_name(Aggregation a) { return a == Aggregation::mean ? "mean" : "weighted"; }

struct ModelConfig {
    std::size_t layers = 2;
    std::size_t struct_dim = 64;  // d_s
    std::size_t latent_dim = 128; // d
    std::size_t score_dim = 64;   // m
    std::size_t hidden_dim = 128; // encoder/decoder hidden width
    double tau = 1.0;
    /// Selection threshold T; 0 means 1/|V|.
    double threshold = 0.0;
    SelectionMode selection = SelectionMode::threshold;
    std::size_t top_m = 10;
    Aggregation aggregation = Aggregation::mean;

    void validate() const {
        if (struct_dim == 0 || latent_dim == 0 || score_dim == 0 || hidden_dim == 0) {
            throw UsageError("model dimensions must be positive");
        }
        if (!(tau > 0)) throw UsageError("tau must be positive");
        if (threshold < 0 || threshold >= 1) throw UsageError("threshold must be in (0, 1), or 0 for 1/|V|");
        if (selection == SelectionMode::top_m && top_m == 0) throw UsageError("top_m must be positive");
    }
};

/// All learnable weights under stable names, in a fixed order.
class ModelParams {
public:
    ModelConfig config;
    std::size_t gene_count = 0;
    std::size_t semantic_dim = 0;
    /// Gene ids owning a row of the learned perturbation table (no-context ablation only).
    std::vector<std::size_t> context_rows;

    void add(std::string name, Matrix value) {
        if (index_.count(name)) throw UsageError("duplicate parameter '" + name + "'");
        index_.emplace(name, values_.size());
        names_.push_back(std::move(name));
        values_.push_back(std::move(value));
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }
    std::size_t index(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("unknown parameter '" + name + "'");
        return it->second;
    }
    Matrix& operator[](const std::string& name) { return values_[index(name)]; }
    const Matrix& operator[](const std::string& name) const { return values_[index(name)]; }

    const std::vector<std::string>& names() const noexcept { return names_; }
    std::vector<Matrix>& values() noexcept { return values_; }
    const std::vector<Matrix>& values() const noexcept { return values_; }
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }
    bool uses_context_table() const { return has("ablation.rows"); }

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
    std::map<std::string, std::size_t> index_;
};

namespace detail {

inline Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix out(rows, cols);
    for (double& v : out.values()) v = rng.uniform(-limit, limit);
    return out;
}

} // namespace detail

/**
 * Fresh parameters. The decoder output bias starts at `control_mean` so the
 * untrained model predicts "no change"; pass an empty span for zeros.
 * A nonempty `context_rows` adds the per-perturbation table used when the
 * subgraph context is ablated.
 */
inline ModelParams init_params(const ModelConfig& cfg, std::size_t gene_count, std::size_t semantic_dim,
                               std::span<const double> control_mean, std::vector<std::size_t> context_rows,
                               std::uint64_t seed) {
    cfg.validate();
    if (gene_count == 0 || semantic_dim == 0) throw UsageError("init_params: empty gene set or embedding");
    if (!control_mean.empty() && control_mean.size() != gene_count) {
        throw DimensionError("init_params: control mean has wrong length");
    }
    Rng rng(derive_seed(seed, 0x1417));
    const std::size_t ds = cfg.struct_dim;
    const std::size_t d = cfg.latent_dim;
    const std::size_t h = cfg.hidden_dim;
    ModelParams p;
    p.config = cfg;
    p.gene_count = gene_count;
    p.semantic_dim = semantic_dim;
    p.add("gnn.embedding", detail::glorot(gene_count, ds, rng));
    for (std::size_t l = 0; l < cfg.layers; ++l) p.add("gnn.layer" + std::to_string(l), detail::glorot(ds, ds, rng));
    p.add("semantic.proj", detail::glorot(ds, semantic_dim, rng));
    p.add("score.Wc", detail::glorot(cfg.score_dim, 2 * ds, rng));
    p.add("score.w", detail::glorot(1, cfg.score_dim, rng));
    p.add("context.proj", detail::glorot(d, ds, rng));
    p.add("encoder.w1", detail::glorot(h, gene_count, rng));
    p.add("encoder.b1", Matrix(1, h));
    p.add("encoder.w2", detail::glorot(d, h, rng));
    p.add("encoder.b2", Matrix(1, d));
    p.add("decoder.w1", detail::glorot(h, 2 * d, rng));
    p.add("decoder.b1", Matrix(1, h));
    // Zero output weights: an untrained model predicts the control mean exactly.
    p.add("decoder.w2", Matrix(gene_count, h));
    p.add("decoder.b2", control_mean.empty() ? Matrix(1, gene_count) : Matrix::row(control_mean));
    p.add("align.head", detail::glorot(d, gene_count, rng));
    if (!context_rows.empty()) {
        p.add("ablation.rows", detail::glorot(context_rows.size(), d, rng));
        p.context_rows = std::move(context_rows);
    }
    return p;
}

/// Row-stochastic neighbor-averaging operator with a self-loop on every node.
inline std::shared_ptr<const ad::SparseRows> aggregation_operator(const KnowledgeGraph& graph, Aggregation mode) {
    auto op = std::make_shared<ad::SparseRows>();
    const std::size_t n = graph.node_count();
    op->rows = n;
    op->cols = n;
    for (std::size_t v = 0; v < n; ++v) {
        auto nb = graph.neighbors(v);
        auto w = graph.weights(v);
        double total = 1.0;
        if (mode == Aggregation::weighted) {
            for (double x : w) total += x;
        } else {
            total += static_cast<double>(nb.size());
        }
        // Self-loop placed in index order among the neighbors.
        bool self_done = false;
        auto push = [&](std::size_t u, double weight) {
            op->indices.push_back(u);
            op->coefs.push_back(weight / total);
        };
        for (std::size_t k = 0; k < nb.size(); ++k) {
            if (!self_done && v < nb[k]) {
                push(v, 1.0);
                self_done = true;
            }
            push(nb[k], mode == Aggregation::weighted ? w[k] : 1.0);
        }
        if (!self_done) push(v, 1.0);
        op->offsets.push_back(op->indices.size());
    }
    return op;
}

/// Subgraph chosen for one perturbation.
struct SubgraphSelection {
    std::vector<double> alpha;
    std::vector<double> alpha_tilde;
    std::vector<std::size_t> selected;
    std::optional<std::uint64_t> noise_seed;
};

/// Parameters placed on a tape, addressable by name.
class BoundParams {
public:
    BoundParams(ad::Tape& tape, const ModelParams& params) : tape_(tape), params_(params) {
        for (const auto& v : params.values()) ids_.push_back(tape.parameter(v));
    }
    ad::NodeId operator()(const std::string& name) const { return ids_.at(params_.index(name)); }
    const std::vector<ad::NodeId>& ids() const noexcept { return ids_; }
    const ModelParams& params() const noexcept { return params_; }
    ad::Tape& tape() const noexcept { return tape_; }

private:
    ad::Tape& tape_;
    const ModelParams& params_;
    std::vector<ad::NodeId> ids_;
};

// ---- tape-level building blocks -------------------------------------------------------------

inline ad::NodeId gnn_embed(const BoundParams& bp, const std::shared_ptr<const ad::SparseRows>& agg) {
    ad::Tape& t = bp.tape();
    ad::NodeId h = bp("gnn.embedding");
    for (std::size_t l = 0; l < bp.params().config.layers; ++l) {
        h = t.linear(t.sparse_aggregate(agg, h), bp("gnn.layer" + std::to_string(l)));
    }
    return h;
}

inline ad::NodeId project_semantic(const BoundParams& bp, std::span<const double> semantic) {
    if (semantic.size() != bp.params().semantic_dim) {
        throw DimensionError("project_semantic: embedding has dimension " + std::to_string(semantic.size()) +
                             ", expected " + std::to_string(bp.params().semantic_dim));
    }
    ad::Tape& t = bp.tape();
    return t.linear(t.constant(Matrix::row(semantic)), bp("semantic.proj"));
}

/// Node relevance probabilities as a 1 x |V| row.
inline ad::NodeId score_nodes(const BoundParams& bp, ad::NodeId h, ad::NodeId s_proj) {
    ad::Tape& t = bp.tape();
    const std::size_t nodes = t.value(h).rows();
    ad::NodeId joint = t.concat_cols(h, t.repeat_rows(s_proj, nodes));
    ad::NodeId hidden = t.relu(t.linear(joint, bp("score.Wc")));
    ad::NodeId logits = t.transpose(t.linear(hidden, bp("score.w")));
    return t.row_softmax(logits);
}

inline constexpr double kAlphaFloor = 1e-12;

/// Gumbel-perturbed, tempered softmax of log alpha. Empty `noise` means zero noise.
inline ad::NodeId gumbel_softmax(ad::Tape& t, ad::NodeId alpha, std::span<const double> noise, double tau) {
    if (!(tau > 0)) throw UsageError("gumbel_softmax: tau must be positive");
    ad::NodeId logits = t.log_floor(alpha, kAlphaFloor);
    if (!noise.empty()) {
        if (noise.size() != t.value(alpha).cols()) throw DimensionError("gumbel_softmax: noise length mismatch");
        logits = t.add(logits, t.constant(Matrix::row(noise)));
    }
    return t.row_softmax(t.scale(logits, 1.0 / tau));
}

/// Hard selection from alpha~; the forced node is always included.
inline std::vector<std::size_t> select_nodes(std::span<const double> alpha_tilde, const ModelConfig& cfg,
                                             std::size_t forced) {
    const std::size_t n = alpha_tilde.size();
    std::vector<bool> keep(n, false);
    if (cfg.selection == SelectionMode::threshold) {
        const double threshold = cfg.threshold > 0 ? cfg.threshold : 1.0 / static_cast<double>(n);
        for (std::size_t v = 0; v < n; ++v) keep[v] = alpha_tilde[v] > threshold;
    } else {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return alpha_tilde[a] > alpha_tilde[b]; });
        for (std::size_t i = 0; i < std::min(cfg.top_m, n); ++i) keep[order[i]] = true;
    }
    if (forced < n) keep[forced] = true;
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < n; ++v) {
        if (keep[v]) out.push_back(v);
    }
    return out;
}

/**
 * Sum of the selected rows of H projected to the latent size. The forward
 * value uses the hard 0/1 mask; gradients reach alpha~ through a
 * straight-through node. `relaxed` forwards alpha~ itself instead of the mask.
 */
inline ad::NodeId context_aggregate(const BoundParams& bp, ad::NodeId h, ad::NodeId alpha_tilde,
                                    std::span<const std::size_t> selected, bool relaxed = false) {
    ad::Tape& t = bp.tape();
    Matrix mask(1, t.value(h).rows());
    for (std::size_t v : selected) mask[v] = 1.0;
    ad::NodeId weights = t.straight_through(t.constant(std::move(mask)), alpha_tilde, relaxed);
    return t.linear(t.matmul(weights, h), bp("context.proj"));
}

inline ad::NodeId encode_control(const BoundParams& bp, ad::NodeId control) {
    ad::Tape& t = bp.tape();
    if (t.value(control).cols() != bp.params().gene_count) throw DimensionError("encode_control: wrong gene count");
    ad::NodeId hidden = t.relu(t.add(t.linear(control, bp("encoder.w1")), bp("encoder.b1")));
    return t.add(t.linear(hidden, bp("encoder.w2")), bp("encoder.b2"));
}

inline ad::NodeId decode(const BoundParams& bp, ad::NodeId z_control, ad::NodeId z_pert) {
    ad::Tape& t = bp.tape();
    if (t.value(z_control).cols() != bp.params().config.latent_dim ||
        t.value(z_pert).cols() != bp.params().config.latent_dim) {
        throw DimensionError("decode: latent inputs must have dimension d");
    }
    ad::NodeId joint = t.concat_cols(z_control, z_pert);
    ad::NodeId hidden = t.relu(t.add(t.linear(joint, bp("decoder.w1")), bp("decoder.b1")));
    return t.add(t.linear(hidden, bp("decoder.w2")), bp("decoder.b2"));
}

/// Learned row for a training perturbation, or the mean row for an unseen one.
inline ad::NodeId context_table_row(const BoundParams& bp, std::size_t gene) {
    ad::Tape& t = bp.tape();
    const auto& rows = bp.params().context_rows;
    Matrix selector(1, rows.size());
    auto it = std::find(rows.begin(), rows.end(), gene);
    if (it != rows.end()) {
        selector[static_cast<std::size_t>(it - rows.begin())] = 1.0;
    } else {
        selector.fill(1.0 / static_cast<double>(rows.size()));
    }
    return t.matmul(t.constant(std::move(selector)), bp("ablation.rows"));
}

struct ForwardOptions {
    ForwardMode mode = ForwardMode::eval;
    /// Gumbel noise source in train mode.
    Rng* rng = nullptr;
    /// Explicit noise (overrides rng), for tests that freeze a draw.
    std::span<const double> frozen_noise{};
    bool relaxed = false;
    /// Use the learned per-perturbation table instead of the subgraph context.
    bool ablate_context = false;
};

struct ForwardNodes {
    ad::NodeId prediction{};
    ad::NodeId z_pert{};
    std::optional<ad::NodeId> alpha;
    std::optional<ad::NodeId> alpha_tilde;
    SubgraphSelection selection;
};

/// Per-batch shared state: the structural embedding is computed once per tape.
struct SharedForward {
    ad::NodeId h{};
    ad::NodeId z_control{};
};

inline SharedForward forward_shared(const BoundParams& bp, std::span<const double> control_mean,
                                    const std::shared_ptr<const ad::SparseRows>& agg) {
    ad::Tape& t = bp.tape();
    SharedForward out;
    out.h = gnn_embed(bp, agg);
    out.z_control = encode_control(bp, t.constant(Matrix::row(control_mean)));
    return out;
}

inline ForwardNodes forward_on_tape(const BoundParams& bp, const SharedForward& shared, std::size_t pert_gene,
                                    const SemanticEmbeddings& emb, const ForwardOptions& opt) {
    const ModelParams& params = bp.params();
    if (pert_gene >= params.gene_count) throw UsageError("forward: perturbation gene out of range");
    ForwardNodes out;
    if (opt.ablate_context) {
        out.z_pert = context_table_row(bp, pert_gene);
    } else {
        ad::Tape& t = bp.tape();
        ad::NodeId s_proj = project_semantic(bp, emb.of(pert_gene));
        ad::NodeId alpha = score_nodes(bp, shared.h, s_proj);
        std::vector<double> noise;
        std::span<const double> noise_view;
        if (opt.mode == ForwardMode::train) {
            if (!opt.frozen_noise.empty()) {
                noise_view = opt.frozen_noise;
            } else if (opt.rng) {
                noise.resize(params.gene_count);
                for (double& g : noise) g = opt.rng->gumbel();
                noise_view = noise;
            }
        }
        ad::NodeId alpha_tilde = gumbel_softmax(t, alpha, noise_view, params.config.tau);
        auto at_values = t.value(alpha_tilde).values();
        out.selection.alpha.assign(t.value(alpha).values().begin(), t.value(alpha).values().end());
        out.selection.alpha_tilde.assign(at_values.begin(), at_values.end());
        out.selection.selected = select_nodes(at_values, params.config, pert_gene);
        out.z_pert = context_aggregate(bp, shared.h, alpha_tilde, out.selection.selected, opt.relaxed);
        out.alpha = alpha;
        out.alpha_tilde = alpha_tilde;
    }
    out.prediction = decode(bp, shared.z_control, out.z_pert);
    return out;
}

/// Values of one forward pass.
struct ForwardResult {
    std::vector<double> prediction;
    std::vector<double> z_pert;
    SubgraphSelection selection;
};

inline ForwardResult forward(std::span<const double> control_mean, std::size_t pert_gene,
                             const std::shared_ptr<const ad::SparseRows>& agg, const SemanticEmbeddings& emb,
                             const ModelParams& params, const ForwardOptions& opt = {}) {
    ad::Tape tape;
    BoundParams bp(tape, params);
    auto shared = forward_shared(bp, control_mean, agg);
    auto nodes = forward_on_tape(bp, shared, pert_gene, emb, opt);
    ForwardResult out;
    auto pv = tape.value(nodes.prediction).values();
    auto zv = tape.value(nodes.z_pert).values();
    out.prediction.assign(pv.begin(), pv.end());
    out.z_pert.assign(zv.begin(), zv.end());
    out.selection = std::move(nodes.selection);
    return out;
}

// ---- value-level wrappers ---------------------------------------------------------------------

inline Matrix gnn_embed(const KnowledgeGraph& graph, const ModelParams& params) {
    if (graph.node_count() != params["gnn.embedding"].rows()) {
        throw DimensionError("gnn_embed: graph has " + std::to_string(graph.node_count()) +
                             " nodes but the embedding table has " +
                             std::to_string(params["gnn.embedding"].rows()) + " rows");
    }
    ad::Tape tape;
    BoundParams bp(tape, params);
    return tape.value(gnn_embed(bp, aggregation_operator(graph, params.config.aggregation)));
}

inline std::vector<double> score_nodes(const Matrix& h, std::span<const double> s_proj, const ModelParams& params) {
    ad::Tape tape;
    BoundParams bp(tape, params);
    auto alpha = score_nodes(bp, tape.constant(h), tape.constant(Matrix::row(s_proj)));
    auto v = tape.value(alpha).values();
    return {v.begin(), v.end()};
}

/**
 * Gumbel-softmax selection over a probability vector. With `rng == nullptr`
 * (eval mode) the noise is zero and the result is deterministic.
 */
inline SubgraphSelection gumbel_select(std::span<const double> alpha, const ModelConfig& cfg, Rng* rng,
                                       std::size_t forced, std::optional<std::uint64_t> noise_seed = std::nullopt) {
    ad::Tape tape;
    ad::NodeId a = tape.constant(Matrix::row(alpha));
    std::vector<double> noise;
    if (rng) {
        noise.resize(alpha.size());
        for (double& g : noise) g = rng->gumbel();
    }
    ad::NodeId at = gumbel_softmax(tape, a, noise, cfg.tau);
    SubgraphSelection out;
    out.alpha.assign(alpha.begin(), alpha.end());
    auto v = tape.value(at).values();
    out.alpha_tilde.assign(v.begin(), v.end());
    out.selected = select_nodes(out.alpha_tilde, cfg, forced);
    out.noise_seed = noise_seed;
    return out;
}

} // namespace adapert

#endif
