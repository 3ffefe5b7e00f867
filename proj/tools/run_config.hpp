#ifndef ADAPERT_TOOLS_RUN_CONFIG_HPP
#define ADAPERT_TOOLS_RUN_CONFIG_HPP

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include <adapert/adapert.hpp>

/**
 * @file run_config.hpp
 * @brief Sectioned key/value run configuration with typed accessors.
 *
 * Keys are `section.key`. Precedence: command-line flags, then the config
 * file, then the defaults below. Unknown keys are rejected.
 */

namespace adapert::cli {

inline const std::vector<std::pair<std::string, std::string>>& config_defaults() {
    static const std::vector<std::pair<std::string, std::string>> defaults{
        {"run.seed", "0"},
        {"run.threads", "1"},
        {"paths.expression", ""},
        {"paths.graph", ""},
        {"paths.embeddings", ""},
        {"paths.out", "run"},
        {"paths.checkpoint", ""},
        {"data.alpha", "0.05"},
        {"data.correction", "none"},
        {"data.split", "0.7,0.1,0.2"},
        {"graph.top_k", "0"},
        {"graph.topk_mode", "union"},
        {"graph.max_hops", "3"},
        {"model.layers", "2"},
        {"model.struct_dim", "64"},
        {"model.latent_dim", "128"},
        {"model.score_dim", "64"},
        {"model.hidden_dim", "128"},
        {"model.tau", "1"},
        {"model.threshold", "0"},
        {"model.selection", "threshold"},
        {"model.top_m", "10"},
        {"model.aggregation", "mean"},
        {"model.embed_dim", "32"},
        {"train.epochs", "200"},
        {"train.batch_size", "32"},
        {"train.lr", "0.001"},
        {"train.weight_decay", "0"},
        {"train.patience", "20"},
        {"train.optimizer", "adam"},
        {"train.ablation", "full"},
        {"loss.lambda_non", "0.01"},
        {"loss.lambda_align", "0.1"},
        {"loss.delta_scale", "1"},
        {"metrics.des_k", "10,20,50"},
        {"synth.genes", "200"},
        {"synth.perturbations", "40"},
        {"synth.cells", "20"},
        {"synth.modules", "8"},
        {"synth.deg_small", "0.03"},
        {"synth.deg_medium", "0.07"},
        {"synth.deg_large", "0.15"},
        {"synth.effect", "0.5"},
        {"synth.noise", "0.1"},
        {"synth.embed_dim", "32"},
        {"synth.intra_edge_prob", "0.3"},
        {"synth.inter_edge_prob", "0.01"},
    };
    return defaults;
}

class RunConfig {
public:
    RunConfig() {
        for (const auto& [k, v] : config_defaults()) values_[k] = v;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
        it->second = value;
    }

    /// `key=value` as given to `--set`.
    void set_assignment(const std::string& text) {
        auto eq = text.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + text + "'");
        set(std::string(detail::trim(text.substr(0, eq))), std::string(detail::trim(text.substr(eq + 1))));
    }

    void load_file(const std::string& path) {
        std::vector<CLI::ConfigItem> items;
        try {
            items = CLI::ConfigINI().from_file(path);
        } catch (const CLI::FileError&) {
            throw UsageError("cannot read config file '" + path + "'");
        } catch (const CLI::Error& e) {
            throw UsageError("config file '" + path + "': " + e.what());
        }
        for (const auto& item : items) {
            if (item.name == "++" || item.name == "--") continue;
            std::string key;
            for (const auto& p : item.parents) key += p + ".";
            key += item.name;
            std::string value;
            for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
            set(key, value);
        }
    }

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
        return it->second;
    }

    double real(const std::string& key) const {
        double v = 0;
        if (!detail::parse_double(str(key), v)) bad(key, "a number");
        return v;
    }

    std::uint64_t u64(const std::string& key) const {
        const std::string& s = str(key);
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) bad(key, "a nonnegative integer");
        return v;
    }

    std::size_t count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

    std::vector<double> reals(const std::string& key) const {
        std::vector<double> out;
        for (auto part : detail::split(str(key), ',')) {
            double v = 0;
            if (!detail::parse_double(detail::trim(part), v)) bad(key, "a comma-separated list of numbers");
            out.push_back(v);
        }
        return out;
    }

    std::vector<std::size_t> counts(const std::string& key) const {
        std::vector<std::size_t> out;
        for (double v : reals(key)) {
            if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) bad(key, "a list of positive integers");
            out.push_back(static_cast<std::size_t>(v));
        }
        return out;
    }

    /// Resolved configuration in the same sectioned format it is read from.
    std::string to_ini() const {
        std::ostringstream out;
        std::string section;
        for (const auto& [k, v] : config_defaults()) {
            const auto dot = k.find('.');
            const std::string sec = k.substr(0, dot);
            if (sec != section) {
                if (!section.empty()) out << '\n';
                out << '[' << sec << "]\n";
                section = sec;
            }
            out << k.substr(dot + 1) << " = " << values_.at(k) << '\n';
        }
        return out.str();
    }

private:
    [[noreturn]] void bad(const std::string& key, const char* what) const {
        throw UsageError("config key '" + key + "' must be " + what + ", got '" + str(key) + "'");
    }

    std::map<std::string, std::string> values_;
};

inline ModelConfig model_config(const RunConfig& c) {
    ModelConfig m;
    m.layers = c.count("model.layers");
    m.struct_dim = c.count("model.struct_dim");
    m.latent_dim = c.count("model.latent_dim");
    m.score_dim = c.count("model.score_dim");
    m.hidden_dim = c.count("model.hidden_dim");
    m.tau = c.real("model.tau");
    m.threshold = c.real("model.threshold");
    m.selection = parse_selection_mode(c.str("model.selection"));
    m.top_m = c.count("model.top_m");
    m.aggregation = parse_aggregation(c.str("model.aggregation"));
    m.validate();
    return m;
}

inline DegOptions deg_options(const RunConfig& c) {
    DegOptions d;
    d.alpha = c.real("data.alpha");
    d.correction = parse_correction(c.str("data.correction"));
    d.threads = static_cast<int>(c.count("run.threads"));
    if (!(d.alpha > 0) || d.alpha > 1) throw UsageError("data.alpha must be in (0, 1]");
    return d;
}

inline TrainConfig train_config(const RunConfig& c) {
    TrainConfig t;
    t.max_epochs = c.count("train.epochs");
    t.batch_size = c.count("train.batch_size");
    t.learning_rate = c.real("train.lr");
    t.weight_decay = c.real("train.weight_decay");
    t.patience = c.count("train.patience");
    t.seed = c.u64("run.seed");
    const std::string& opt = c.str("train.optimizer");
    if (opt == "adam") {
        t.optimizer = OptimizerKind::adam;
    } else if (opt == "sgd") {
        t.optimizer = OptimizerKind::sgd;
    } else {
        throw UsageError("train.optimizer must be adam or sgd, got '" + opt + "'");
    }
    t.loss.lambda_non = c.real("loss.lambda_non");
    t.loss.lambda_align = c.real("loss.lambda_align");
    t.loss.delta_scale = c.real("loss.delta_scale");
    t.ablation = parse_ablation(c.str("train.ablation"));
    t.model = model_config(c);
    t.degs = deg_options(c);
    t.threads = static_cast<int>(c.count("run.threads"));
    t.validate();
    return t;
}

inline SynthConfig synth_config(const RunConfig& c) {
    SynthConfig s;
    s.genes = c.count("synth.genes");
    s.perturbations = c.count("synth.perturbations");
    s.cells = c.count("synth.cells");
    s.modules = c.count("synth.modules");
    s.deg_fraction = {c.real("synth.deg_small"), c.real("synth.deg_medium"), c.real("synth.deg_large")};
    s.effect = c.real("synth.effect");
    s.noise = c.real("synth.noise");
    s.embed_dim = c.count("synth.embed_dim");
    s.intra_edge_prob = c.real("synth.intra_edge_prob");
    s.inter_edge_prob = c.real("synth.inter_edge_prob");
    validate(s);
    return s;
}

inline std::array<double, 3> split_fractions(const RunConfig& c) {
    auto f = c.reals("data.split");
    if (f.size() != 3) throw UsageError("data.split needs three fractions (train,val,test)");
    return {f[0], f[1], f[2]};
}

inline TopkMode topk_mode(const RunConfig& c) {
    const std::string& m = c.str("graph.topk_mode");
    if (m == "union") return TopkMode::union_of_nominations;
    if (m == "mutual") return TopkMode::mutual;
    throw UsageError("graph.topk_mode must be union or mutual, got '" + m + "'");
}

} // namespace adapert::cli

#endif
