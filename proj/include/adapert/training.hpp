#ifndef ADAPERT_TRAINING_HPP
#define ADAPERT_TRAINING_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "degs.hpp"
#include "embeddings.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "loss.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "optimizer.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "tape.hpp"

/**
 * @file training.hpp
 * @brief Seeded mini-batch training with validation early stopping and ablations.
 */

namespace adapert {

enum class Ablation { full, no_context, no_non_deg };

inline Ablation parse_ablation(const std::string& s) {
    if (s == "full") return Ablation::full;
    if (s == "no_context") return Ablation::no_context;
    if (s == "no_non_deg") return Ablation::no_non_deg;
    throw UsageError("unknown ablation mode '" + s + "'");
}

inline const char* ablation_name(Ablation a) {
    switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_context: return "no_context";
    case Ablation::no_non_deg: return "no_non_deg";
    }
    return "?";
}

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
    std::size_t max_epochs = 200;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    std::size_t patience = 20;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::adam;
    LossWeights loss;
    Ablation ablation = Ablation::full;
    ModelConfig model;
    DegOptions degs;
    int threads = 1;

    void validate() const {
        if (max_epochs == 0) throw UsageError("max_epochs must be positive");
        if (batch_size == 0) throw UsageError("batch_size must be positive");
        if (!(learning_rate > 0)) throw UsageError("learning rate must be positive");
        if (weight_decay < 0) throw UsageError("weight decay must be nonnegative");
        if (patience > max_epochs) throw UsageError("patience must not exceed max_epochs");
        loss.validate();
        model.validate();
    }
};

/// How an ablation mode changes the model and objective.
struct AblationEffect {
    bool use_context = true;
    double lambda_non = 0;
    double lambda_align = 0;
};

/// no_context also drops the alignment term, which has no subgraph context to act on.
inline AblationEffect apply_ablation(const TrainConfig& cfg) {
    AblationEffect out{true, cfg.loss.lambda_non, cfg.loss.lambda_align};
    if (cfg.ablation == Ablation::no_context) {
        out.use_context = false;
        out.lambda_align = 0;
    } else if (cfg.ablation == Ablation::no_non_deg) {
        out.lambda_non = 0;
    }
    return out;
}

struct EpochRecord {
    std::size_t epoch = 0;
    double recon = 0;
    double non_deg = 0;
    double align = 0;
    double total = 0;
    std::optional<double> val_pearson_delta;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double lambda_non = 0;
    double lambda_align = 0;
    double huber_delta = 0;
    bool huber_delta_fallback = false;
    std::string ablation;
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const TrainHistory& h) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : h.epochs) {
        nlohmann::json row = {{"epoch", e.epoch}, {"recon", e.recon}, {"non_deg", e.non_deg},
                              {"align", e.align}, {"total", e.total}};
        row["val_pearson_delta"] = e.val_pearson_delta ? nlohmann::json(*e.val_pearson_delta) : nlohmann::json();
        epochs.push_back(row);
    }
    return {{"epochs", epochs},
            {"best_epoch", h.best_epoch},
            {"lambda_non", h.lambda_non},
            {"lambda_align", h.lambda_align},
            {"huber_delta", h.huber_delta},
            {"huber_delta_fallback", h.huber_delta_fallback},
            {"ablation", h.ablation},
            {"seed", h.seed}};
}

struct TrainResult {
    ModelParams params;
    TrainHistory history;
    DegTable train_degs;
};

/// Inputs shared by training and prediction: control mean and the aggregation operator.
struct ModelContext {
    std::vector<double> control_mean;
    std::shared_ptr<const ad::SparseRows> aggregation;
    const SemanticEmbeddings* embeddings = nullptr;
};

inline ModelContext make_context(const PerturbationDataset& data, const KnowledgeGraph& graph,
                                 const SemanticEmbeddings& emb, Aggregation mode) {
    if (graph.node_count() != data.gene_count()) {
        throw DataError("graph has " + std::to_string(graph.node_count()) + " nodes but the dataset has " +
                        std::to_string(data.gene_count()) + " genes");
    }
    if (emb.table.rows() != data.gene_count()) {
        throw DataError("embedding table does not cover the gene vocabulary");
    }
    return {column_means(data.control()), aggregation_operator(graph, mode), &emb};
}

/// Eval-mode predictions (absolute expression), one per gene id, computed concurrently.
inline std::vector<std::vector<double>> predict_all(const ModelContext& ctx, const ModelParams& params,
                                                    std::span<const std::size_t> genes, int threads = 1) {
    std::vector<std::vector<double>> out(genes.size());
    ForwardOptions opt;
    opt.ablate_context = params.uses_context_table();
    parallel_for(genes.size(), threads, [&](std::size_t i) {
        out[i] = forward(ctx.control_mean, genes[i], ctx.aggregation, *ctx.embeddings, params, opt).prediction;
    });
    return out;
}

inline std::vector<double> subtract(std::span<const double> a, std::span<const double> b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

/// Mean Pearson-delta over `genes`; undefined correlations are skipped.
inline std::optional<double> mean_pearson_delta(const ModelContext& ctx, const ModelParams& params,
                                                std::span<const std::size_t> genes, const Pseudobulk& truth,
                                                int threads) {
    auto predictions = predict_all(ctx, params, genes, threads);
    double total = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < genes.size(); ++i) {
        try {
            total += pearson_delta(subtract(predictions[i], ctx.control_mean),
                                   subtract(truth.perturbed.at(genes[i]), ctx.control_mean));
            ++n;
        } catch (const DegenerateInputError&) {
        }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

/**
 * Fit the model on `split.train`. The DEG table and Huber threshold come from
 * training perturbations only; validation blocks are read for early stopping
 * and test blocks are never read.
 */
inline TrainResult train(const PerturbationDataset& data, const SplitSpec& split, const KnowledgeGraph& graph,
                         const SemanticEmbeddings& emb, const TrainConfig& cfg) {
    cfg.validate();
    if (split.train.empty()) throw UsageError("train: the training split is empty");
    const AblationEffect effect = apply_ablation(cfg);
    const ModelContext ctx = make_context(data, graph, emb, cfg.model.aggregation);

    TrainResult result;
    result.train_degs = compute_degs(data, split.train, cfg.degs);
    const Pseudobulk train_bulk = pseudobulk(data, split.train);
    const Pseudobulk val_bulk = pseudobulk(data, split.val);

    TrainHistory& history = result.history;
    history.seed = cfg.seed;
    history.ablation = ablation_name(cfg.ablation);
    history.lambda_non = effect.lambda_non;
    history.lambda_align = effect.lambda_align;
    try {
        history.huber_delta = estimate_huber_delta(result.train_degs, cfg.loss.delta_scale);
    } catch (const Error&) {
        history.huber_delta = 1.0;
        history.huber_delta_fallback = true;
    }

    std::vector<std::size_t> context_rows;
    if (!effect.use_context) context_rows = split.train;
    ModelParams params =
        init_params(cfg.model, data.gene_count(), emb.dim(), ctx.control_mean, context_rows, derive_seed(cfg.seed, 1));
    ModelParams best = params;
    std::optional<double> best_score;

    // Per-perturbation loss inputs, fixed for the whole run.
    struct Target {
        std::vector<double> mean;
        std::vector<std::size_t> non_degs;
        const PerturbationDegs* degs;
    };
    std::map<std::size_t, Target> targets;
    for (std::size_t gene : split.train) {
        const auto& row = result.train_degs.at(gene);
        targets.emplace(gene, Target{train_bulk.perturbed.at(gene), row.non_deg_indices(), &row});
    }

    OptimizerState state;
    AdamOptions opt;
    opt.learning_rate = cfg.learning_rate;
    opt.weight_decay = cfg.weight_decay;

    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<std::size_t> order = split.train;
        Rng(derive_seed(cfg.seed, 2, epoch)).shuffle(order);
        EpochRecord record;
        record.epoch = epoch;
        std::size_t seen = 0;
        for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            ad::Tape tape;
            BoundParams bp(tape, params);
            SharedForward shared = forward_shared(bp, ctx.control_mean, ctx.aggregation);
            Rng noise(derive_seed(cfg.seed, 3, epoch, batch));
            ForwardOptions fopt;
            fopt.mode = ForwardMode::train;
            fopt.rng = &noise;
            fopt.ablate_context = !effect.use_context;
            std::vector<ad::NodeId> totals;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t gene = order[i];
                const Target& target = targets.at(gene);
                ForwardNodes nodes = forward_on_tape(bp, shared, gene, emb, fopt);
                LossNodes parts;
                parts.recon = recon_loss(tape, nodes.prediction, target.mean);
                parts.non_deg =
                    non_deg_loss(tape, nodes.prediction, ctx.control_mean, target.non_degs, history.huber_delta);
                parts.align = effect.use_context
                                  ? align_loss(bp, nodes.z_pert, target.degs->delta, target.degs->deg_mask)
                                  : tape.constant(Matrix(1, 1, 0.0));
                parts.total = total_loss(tape, parts, effect.lambda_non, effect.lambda_align);
                record.recon += tape.scalar(parts.recon);
                record.non_deg += tape.scalar(parts.non_deg);
                record.align += tape.scalar(parts.align);
                record.total += tape.scalar(parts.total);
                totals.push_back(parts.total);
            }
            seen += totals.size();
            ad::NodeId batch_loss = tape.mean_all(tape.concat_cols(totals));
            if (!std::isfinite(tape.scalar(batch_loss))) {
                std::string members;
                for (std::size_t i = start; i < end; ++i) members += (i > start ? "," : "") + data.vocab().name(order[i]);
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch) + " (" + members + ")");
            }
            auto grads_by_id = tape.backward(batch_loss);
            std::vector<Matrix> grads;
            grads.reserve(bp.ids().size());
            for (ad::NodeId id : bp.ids()) grads.push_back(std::move(grads_by_id.at(id)));
            if (cfg.optimizer == OptimizerKind::adam) {
                adam_step(params.values(), grads, state, opt);
            } else {
                sgd_step(params.values(), grads, state, opt);
            }
        }
        const double scale = 1.0 / static_cast<double>(seen);
        record.recon *= scale;
        record.non_deg *= scale;
        record.align *= scale;
        record.total *= scale;

        if (!split.val.empty()) {
            record.val_pearson_delta = mean_pearson_delta(ctx, params, split.val, val_bulk, cfg.threads);
        }
        history.epochs.push_back(record);

        const bool monitored = !split.val.empty();
        const bool improved = !monitored || epoch == 1 ||
                              (record.val_pearson_delta && (!best_score || *record.val_pearson_delta > *best_score));
        if (improved) {
            if (record.val_pearson_delta) best_score = record.val_pearson_delta;
            best = params;
            history.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience && cfg.patience > 0) {
            break;
        }
    }
    result.params = std::move(best);
    return result;
}

} // namespace adapert

#endif
