#ifndef ADAPERT_TOOLS_COMMANDS_HPP
#define ADAPERT_TOOLS_COMMANDS_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <adapert/adapert.hpp>

#include "run_config.hpp"

/**
 * @file commands.hpp
 * @brief Subcommands of the `adapert` tool. `run_cli` is the whole program
 * minus `main`, so tests can drive it in-process.
 */

namespace adapert::cli {

namespace fs = std::filesystem;

struct Inputs {
    PerturbationDataset data;
    KnowledgeGraph graph;
    SemanticEmbeddings embeddings;
    std::size_t dropped_edges = 0;
};

inline const std::string& required_path(const RunConfig& c, const std::string& key) {
    const std::string& p = c.str(key);
    if (p.empty()) throw UsageError("config key '" + key + "' is required for this command");
    return p;
}

inline KnowledgeGraph filtered(const KnowledgeGraph& g, const RunConfig& c) {
    const std::size_t k = c.count("graph.top_k");
    return k == 0 ? g : topk_filter(g, k, topk_mode(c));
}

inline Inputs load_inputs(const RunConfig& c, bool need_graph = true) {
    Inputs in;
    in.data = load_expression(required_path(c, "paths.expression"));
    if (need_graph) {
        auto loaded = load_edge_list(required_path(c, "paths.graph"), in.data.vocab());
        in.graph = filtered(loaded.graph, c);
        in.dropped_edges = loaded.dropped;
    }
    const std::string& emb = c.str("paths.embeddings");
    in.embeddings = emb.empty() ? fallback_embeddings(in.data.vocab(), c.count("model.embed_dim"))
                                : load_embeddings(emb, in.data.vocab(), c.count("model.embed_dim"));
    return in;
}

inline fs::path output_dir(const RunConfig& c) {
    fs::path out = c.str("paths.out");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw DataError("cannot create output directory '" + out.string() + "'");
    return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline fs::path checkpoint_stem(const RunConfig& c) {
    const std::string& p = c.str("paths.checkpoint");
    return p.empty() ? fs::path(c.str("paths.out")) / "checkpoint" : fs::path(p);
}

inline std::vector<std::string> names_of(const GeneVocab& vocab, const std::vector<std::size_t>& genes) {
    std::vector<std::string> out;
    for (std::size_t g : genes) out.push_back(vocab.name(g));
    return out;
}

inline std::vector<std::size_t> ids_of(const GeneVocab& vocab, const std::vector<std::string>& names) {
    std::vector<std::size_t> out;
    for (const auto& n : names) {
        auto id = vocab.find(n);
        if (!id) throw DataError("gene '" + n + "' is not in the expression data");
        out.push_back(*id);
    }
    return out;
}

// ---- synth ------------------------------------------------------------------------------------

inline void cmd_synth(const RunConfig& c) {
    const SynthConfig sc = synth_config(c);
    const std::uint64_t seed = c.u64("run.seed");
    const fs::path out = output_dir(c);
    SynthData s = synth_generate(sc, seed);
    const GeneVocab& vocab = s.dataset.vocab();

    std::ostringstream expr;
    save_expression(expr, s.dataset);
    write_text(out / "expression.csv", expr.str());
    std::ostringstream edges;
    save_edge_list(edges, s.graph, vocab);
    write_text(out / "graph.tsv", edges.str());
    std::ostringstream emb;
    save_embeddings(emb, s.embeddings, vocab);
    write_text(out / "embeddings.csv", emb.str());

    nlohmann::json planted = nlohmann::json::object();
    nlohmann::json strata = nlohmann::json::object();
    for (const auto& [gene, degs] : s.planted) {
        planted[vocab.name(gene)] = names_of(vocab, degs);
        strata[vocab.name(gene)] = stratum_name(s.planted_stratum.at(gene));
    }
    nlohmann::json modules = nlohmann::json::object();
    for (std::size_t g = 0; g < vocab.size(); ++g) modules[vocab.name(g)] = s.module_of[g];
    write_json(out / "manifest.json", {{"seed", seed},
                                       {"genes", sc.genes},
                                       {"perturbations", sc.perturbations},
                                       {"cells", sc.cells},
                                       {"effect", sc.effect},
                                       {"noise", sc.noise},
                                       {"planted_degs", planted},
                                       {"planted_stratum", strata},
                                       {"module_of", modules}});
    write_text(out / "config.effective.ini", c.to_ini());
}

// ---- train ------------------------------------------------------------------------------------

inline void cmd_train(const RunConfig& c) {
    const TrainConfig tc = train_config(c);
    const fs::path out = output_dir(c);
    Inputs in = load_inputs(c);
    const SplitSpec split = split_by_perturbation(in.data, split_fractions(c), tc.seed);
    TrainResult r = train(in.data, split, in.graph, in.embeddings, tc);
    const GeneVocab& vocab = in.data.vocab();
    nlohmann::json extra = {{"seed", tc.seed},
                            {"ablation", ablation_name(tc.ablation)},
                            {"huber_delta", r.history.huber_delta},
                            {"best_epoch", r.history.best_epoch},
                            {"split",
                             {{"train", names_of(vocab, split.train)},
                              {"val", names_of(vocab, split.val)},
                              {"test", names_of(vocab, split.test)}}}};
    save_checkpoint(checkpoint_stem(c), r.params, extra);
    write_json(out / "history.json", to_json(r.history));
    write_text(out / "config.effective.ini", c.to_ini());
}

// ---- eval / predict -----------------------------------------------------------------------------

inline std::vector<std::size_t> checkpoint_split(const Checkpoint& ck, const GeneVocab& vocab, const char* part) {
    try {
        return ids_of(vocab, ck.extra.at("split").at(part).get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception&) {
        throw DataError(std::string("checkpoint has no '") + part + "' split");
    }
}

inline void check_compatible(const Checkpoint& ck, const Inputs& in) {
    if (ck.params.gene_count != in.data.gene_count()) {
        throw DataError("checkpoint was trained on " + std::to_string(ck.params.gene_count) +
                        " genes but the expression data has " + std::to_string(in.data.gene_count()));
    }
    if (ck.params.semantic_dim != in.embeddings.dim()) {
        throw DataError("checkpoint expects " + std::to_string(ck.params.semantic_dim) +
                        "-dimensional embeddings, got " + std::to_string(in.embeddings.dim()));
    }
}

inline std::string safe_file_part(const std::string& name) {
    std::string out = name;
    for (char& ch : out) {
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
    }
    return out;
}

inline void cmd_eval(const RunConfig& c, bool oracle) {
    const fs::path out = output_dir(c);
    Inputs in = load_inputs(c);
    const Checkpoint ck = load_checkpoint(checkpoint_stem(c));
    check_compatible(ck, in);
    const auto test = checkpoint_split(ck, in.data.vocab(), "test");
    if (test.empty()) throw UsageError("eval: the checkpoint's test split is empty");
    const int threads = static_cast<int>(c.count("run.threads"));

    std::vector<std::vector<double>> predictions;
    if (oracle) {
        for (std::size_t g : test) predictions.push_back(column_means(in.data.block(g)));
    } else {
        const ModelContext ctx = make_context(in.data, in.graph, in.embeddings, ck.params.config.aggregation);
        predictions = predict_all(ctx, ck.params, test, threads);
    }
    const Evaluation e = evaluate_predictions(in.data, test, predictions, deg_options(c), c.counts("metrics.des_k"));
    nlohmann::json j = to_json(e.report);
    j["oracle"] = oracle;
    j["alpha"] = e.truth.alpha;
    j["correction"] = correction_name(e.truth.correction);
    j["test_perturbations"] = e.names;
    write_json(out / "metrics.json", j);

    for (std::size_t i = 0; i < e.names.size(); ++i) {
        std::ostringstream csv;
        csv << "gene,delta_true,delta_pred,is_deg\n";
        for (std::size_t g = 0; g < in.data.gene_count(); ++g) {
            csv << in.data.vocab().name(g) << ',' << detail::format_double(e.true_delta[i][g]) << ','
                << detail::format_double(e.predicted_delta[i][g]) << ',' << (e.true_mask[i][g] ? 1 : 0) << '\n';
        }
        write_text(out / ("scatter_" + safe_file_part(e.names[i]) + ".csv"), csv.str());
    }
    write_text(out / "config.effective.ini", c.to_ini());
}

inline void cmd_predict(const RunConfig& c, const std::vector<std::string>& perturbations) {
    const fs::path out = output_dir(c);
    Inputs in = load_inputs(c);
    const Checkpoint ck = load_checkpoint(checkpoint_stem(c));
    check_compatible(ck, in);
    const auto genes = perturbations.empty() ? checkpoint_split(ck, in.data.vocab(), "test")
                                             : ids_of(in.data.vocab(), perturbations);
    const ModelContext ctx = make_context(in.data, in.graph, in.embeddings, ck.params.config.aggregation);
    const auto predictions = predict_all(ctx, ck.params, genes, static_cast<int>(c.count("run.threads")));
    std::ostringstream csv;
    csv << "perturbation";
    for (const auto& name : in.data.vocab().names()) csv << ',' << name;
    csv << '\n';
    for (std::size_t i = 0; i < genes.size(); ++i) {
        csv << in.data.vocab().name(genes[i]);
        for (double v : predictions[i]) csv << ',' << detail::format_double(v);
        csv << '\n';
    }
    write_text(out / "predictions.csv", csv.str());
    write_text(out / "config.effective.ini", c.to_ini());
}

// ---- graph analyses ---------------------------------------------------------------------------

inline nlohmann::json to_json(const DegreeStats& s) {
    return {{"nodes", s.nodes},
            {"edges", s.edges},
            {"mean_degree", s.mean_degree},
            {"median_degree", s.median_degree},
            {"max_degree", s.max_degree}};
}

/// Largest number of kept edges any single node nominated (bounded by k after filtering).
inline std::size_t max_nominated_kept(const KnowledgeGraph& original, const KnowledgeGraph& kept, std::size_t k) {
    auto nominated = topk_nominations(original, k);
    std::size_t worst = 0;
    for (std::size_t u = 0; u < kept.node_count(); ++u) {
        std::size_t n = 0;
        for (std::size_t v : kept.neighbors(u)) {
            n += std::binary_search(nominated[u].begin(), nominated[u].end(), v) ? 1 : 0;
        }
        worst = std::max(worst, n);
    }
    return worst;
}

inline void cmd_graph_stats(const RunConfig& c) {
    const fs::path out = output_dir(c);
    const std::string& path = required_path(c, "paths.graph");
    GeneVocab vocab;
    if (!c.str("paths.expression").empty()) {
        vocab = load_expression(c.str("paths.expression")).vocab();
    } else {
        std::ifstream input(path);
        if (!input) throw DataError("cannot open edge list '" + path + "'");
        vocab = edge_list_vocab(input);
    }
    auto loaded = load_edge_list(path, vocab);
    nlohmann::json j = {{"input", to_json(degree_stats(loaded.graph))}, {"dropped_edges", loaded.dropped}};
    const std::size_t k = c.count("graph.top_k");
    if (k > 0) {
        const KnowledgeGraph kept = topk_filter(loaded.graph, k, topk_mode(c));
        const std::size_t worst = max_nominated_kept(loaded.graph, kept, k);
        j["top_k"] = k;
        j["topk_mode"] = c.str("graph.topk_mode");
        j["filtered"] = to_json(degree_stats(kept));
        j["max_nominated_per_node"] = worst;
        j["nominated_bound_holds"] = worst <= k;
    }
    write_json(out / "graph_stats.json", j);
    write_text(out / "config.effective.ini", c.to_ini());
}

/**
 * Mean DEG coverage by hop distance over all perturbations with at least one
 * DEG. Index h of the coverage arrays is h hops (h = 0 is the target itself).
 * `baseline` is the same fraction for the whole gene set.
 */
inline void cmd_deg_coverage(const RunConfig& c) {
    const fs::path out = output_dir(c);
    Inputs in = load_inputs(c);
    const std::size_t hops = c.count("graph.max_hops");
    if (hops == 0) throw UsageError("graph.max_hops must be positive");
    const DegTable table = compute_degs(in.data, deg_options(c));
    const std::size_t n = in.data.gene_count();
    std::vector<std::size_t> all(n);
    for (std::size_t g = 0; g < n; ++g) all[g] = g;

    std::vector<double> mean(hops + 1, 0.0);
    std::vector<double> baseline(hops + 1, 0.0);
    nlohmann::json per = nlohmann::json::object();
    std::vector<std::string> skipped;
    std::size_t used = 0;
    for (const auto& [gene, row] : table.perturbations) {
        const auto degs = row.deg_indices();
        const std::string& name = in.data.vocab().name(gene);
        if (degs.empty()) {
            skipped.push_back(name);
            continue;
        }
        std::vector<double> cov{static_cast<double>(std::count(degs.begin(), degs.end(), gene)) /
                                static_cast<double>(degs.size())};
        auto rest = deg_coverage(in.graph, gene, degs, hops);
        cov.insert(cov.end(), rest.begin(), rest.end());
        std::vector<double> base{1.0 / static_cast<double>(n)};
        auto brest = deg_coverage(in.graph, gene, all, hops);
        base.insert(base.end(), brest.begin(), brest.end());
        for (std::size_t h = 0; h <= hops; ++h) {
            mean[h] += cov[h];
            baseline[h] += base[h];
        }
        per[name] = cov;
        ++used;
    }
    if (used > 0) {
        for (std::size_t h = 0; h <= hops; ++h) {
            mean[h] /= static_cast<double>(used);
            baseline[h] /= static_cast<double>(used);
        }
    }
    bool monotone = true;
    for (std::size_t h = 1; h <= hops; ++h) monotone = monotone && mean[h] >= mean[h - 1];
    write_json(out / "deg_coverage.json", {{"max_hops", hops},
                                           {"perturbations", used},
                                           {"coverage", mean},
                                           {"baseline", baseline},
                                           {"monotone", monotone},
                                           {"per_perturbation", per},
                                           {"skipped", skipped}});
    write_text(out / "config.effective.ini", c.to_ini());
}

// ---- entry point ------------------------------------------------------------------------------

/// Runs one command; returns the process exit code.
inline int run_cli(std::vector<std::string> args, std::ostream& err = std::cerr) {
    CLI::App app{"Perturbation response prediction with adaptive subgraph context"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string out_dir;
    std::string ablation;
    std::string checkpoint;
    std::vector<std::string> overrides;
    bool oracle = false;
    std::vector<std::string> perturbations;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Sectioned key/value config file");
        sub->add_option("--seed", seed, "Global RNG seed");
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--threads", threads, "Worker threads for read-only fan-outs");
        sub->add_option("--ablation", ablation, "full | no_context | no_non_deg");
        sub->add_option("--set", overrides, "Override a config key (section.key=value)");
    };
    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with planted DEG sets");
    auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint and history");
    auto* eval = app.add_subcommand("eval", "Score a checkpoint on its test split");
    auto* predict = app.add_subcommand("predict", "Predict expression profiles for perturbations");
    auto* gstats = app.add_subcommand("graph-stats", "Degree statistics, optionally after top-k filtering");
    auto* coverage = app.add_subcommand("deg-coverage", "DEG coverage by hop distance from the target");
    for (auto* sub : {synth, train_cmd, eval, predict, gstats, coverage}) common(sub);
    for (auto* sub : {eval, predict}) sub->add_option("--checkpoint", checkpoint, "Checkpoint path stem");
    eval->add_flag("--oracle", oracle, "Score the observed profiles instead of model predictions");
    predict->add_option("--perturbation", perturbations, "Perturbed gene names (default: test split)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        std::ostringstream sink;
        const int code = app.exit(e, sink, sink);
        (code == 0 ? std::cout : err) << sink.str();
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& o : overrides) cfg.set_assignment(o);
        if (seed) cfg.set("run.seed", std::to_string(*seed));
        if (threads) cfg.set("run.threads", std::to_string(*threads));
        if (!out_dir.empty()) cfg.set("paths.out", out_dir);
        if (!ablation.empty()) cfg.set("train.ablation", ablation);
        if (!checkpoint.empty()) cfg.set("paths.checkpoint", checkpoint);

        if (synth->parsed()) cmd_synth(cfg);
        else if (train_cmd->parsed()) cmd_train(cfg);
        else if (eval->parsed()) cmd_eval(cfg, oracle);
        else if (predict->parsed()) cmd_predict(cfg, perturbations);
        else if (gstats->parsed()) cmd_graph_stats(cfg);
        else if (coverage->parsed()) cmd_deg_coverage(cfg);
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace adapert::cli

#endif
