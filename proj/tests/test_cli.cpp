#include <gtest/gtest.h>

#include "commands.hpp"
#include "test_support.hpp"

using namespace adapert;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args, std::string* err = nullptr) {
    std::ostringstream sink;
    const int code = cli::run_cli(std::move(args), sink);
    if (err) *err = sink.str();
    return code;
}

const std::vector<std::string> kSmallSynth{"--set", "synth.genes=60",     "--set", "synth.perturbations=14",
                                           "--set", "synth.cells=10",     "--set", "synth.modules=4",
                                           "--set", "synth.embed_dim=8",  "--set", "synth.effect=1"};

const std::vector<std::string> kSmallModel{"--set", "model.struct_dim=8", "--set", "model.latent_dim=8",
                                           "--set", "model.score_dim=8",  "--set", "model.hidden_dim=12",
                                           "--set", "model.embed_dim=8",  "--set", "model.selection=top_m",
                                           "--set", "model.top_m=3",      "--set", "train.epochs=4",
                                           "--set", "train.patience=4",   "--set", "train.batch_size=4",
                                           "--set", "metrics.des_k=5,10"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

/// Writes a small synthetic dataset and returns the directory holding it.
fs::path make_dataset(const std::string& name, const std::string& seed = "4") {
    auto dir = temp_dir(name);
    EXPECT_EQ(run(concat({"synth", "--seed", seed, "--out", (dir / "data").string()}, kSmallSynth)), 0);
    return dir;
}

std::vector<std::string> data_paths(const fs::path& dir) {
    return {"--set", "paths.expression=" + (dir / "data" / "expression.csv").string(),
            "--set", "paths.graph=" + (dir / "data" / "graph.tsv").string(),
            "--set", "paths.embeddings=" + (dir / "data" / "embeddings.csv").string()};
}

std::vector<std::string> train_args(const fs::path& dir, const std::string& out) {
    return concat(concat({"train", "--seed", "11", "--out", (dir / out).string()}, data_paths(dir)), kSmallModel);
}

} // namespace

TEST(Cli, UsageErrorsExitOne) {
    std::string err;
    EXPECT_EQ(run({}, &err), 1);
    EXPECT_EQ(run({"bogus"}), 1);
    EXPECT_EQ(run({"train", "--no-such-flag"}), 1);
    EXPECT_EQ(run({"--help"}), 0);
    EXPECT_EQ(run({"train", "--set", "model.nope=1"}, &err), 1);
    EXPECT_NE(err.find("unknown config key"), std::string::npos);
    EXPECT_EQ(run({"train", "--set", "train.epochs"}), 1);
    EXPECT_EQ(run({"train", "--out", temp_dir("cli_missing").string()}, &err), 1);
    EXPECT_NE(err.find("paths.expression"), std::string::npos);
    EXPECT_EQ(run({"train", "--ablation", "nothing", "--out", temp_dir("cli_abl").string()}), 1);
}

TEST(Cli, MissingOrMalformedDataExitsTwo) {
    auto dir = temp_dir("cli_data_errors");
    EXPECT_EQ(run({"train", "--out", (dir / "o").string(), "--set",
                   "paths.expression=" + (dir / "absent.csv").string(), "--set",
                   "paths.graph=" + (dir / "absent.tsv").string()}),
              2);
    write_file(dir / "bad.csv", "condition,g1\ncontrol,notanumber\n");
    std::string err;
    EXPECT_EQ(run({"graph-stats", "--out", (dir / "o").string(), "--set", "paths.expression=" + (dir / "bad.csv").string(),
                   "--set", "paths.graph=" + (dir / "bad.csv").string()},
                  &err),
              2);
    EXPECT_EQ(run({"eval", "--out", (dir / "o").string(), "--checkpoint", (dir / "none").string()}), 1);
}

TEST(Cli, SynthIsDeterministic) {
    auto a = make_dataset("cli_synth_a");
    auto b = make_dataset("cli_synth_b");
    auto c = make_dataset("cli_synth_c", "5");
    for (const char* f : {"expression.csv", "graph.tsv", "embeddings.csv", "manifest.json"}) {
        EXPECT_EQ(read_file(a / "data" / f), read_file(b / "data" / f)) << f;
    }
    EXPECT_NE(read_file(a / "data" / "expression.csv"), read_file(c / "data" / "expression.csv"));
    auto manifest = nlohmann::json::parse(read_file(a / "data" / "manifest.json"));
    EXPECT_EQ(manifest["planted_degs"].size(), 14u);
    EXPECT_EQ(manifest["genes"], 60);
}

TEST(Cli, TrainEvalPredictPipeline) {
    auto dir = make_dataset("cli_pipeline");
    ASSERT_EQ(run(train_args(dir, "run1")), 0);
    ASSERT_EQ(run(train_args(dir, "run2")), 0);
    ASSERT_TRUE(fs::exists(dir / "run1" / "config.effective.ini"));
    for (const char* f : {"history.json", "checkpoint.json", "checkpoint.bin"}) {
        ASSERT_TRUE(fs::exists(dir / "run1" / f)) << f;
        EXPECT_EQ(read_file(dir / "run1" / f), read_file(dir / "run2" / f)) << f;
    }
    auto history = nlohmann::json::parse(read_file(dir / "run1" / "history.json"));
    EXPECT_EQ(history["epochs"].size(), 4u);

    const std::string ck = (dir / "run1" / "checkpoint").string();
    auto eval_args = concat({"eval", "--checkpoint", ck, "--out", (dir / "eval").string()}, data_paths(dir));
    ASSERT_EQ(run(concat(eval_args, {"--set", "metrics.des_k=5,10"})), 0);
    auto metrics = nlohmann::json::parse(read_file(dir / "eval" / "metrics.json"));
    for (const char* m : {"pearson_delta", "pds", "des_at_5", "des_at_10", "des_fdr", "direction_match"}) {
        EXPECT_TRUE(metrics["overall"].contains(m)) << m;
    }
    const auto test = metrics["test_perturbations"].get<std::vector<std::string>>();
    ASSERT_FALSE(test.empty());
    auto checkpoint = nlohmann::json::parse(read_file(dir / "run1" / "checkpoint.json"));
    EXPECT_EQ(checkpoint["extra"]["split"]["test"].get<std::vector<std::string>>(), test);
    for (const auto& name : test) EXPECT_TRUE(fs::exists(dir / "eval" / ("scatter_" + name + ".csv")));

    ASSERT_EQ(run(concat({"eval", "--oracle", "--checkpoint", ck, "--out", (dir / "oracle").string()}, data_paths(dir))), 0);
    auto oracle = nlohmann::json::parse(read_file(dir / "oracle" / "metrics.json"));
    EXPECT_NEAR(oracle["overall"]["pearson_delta"]["mean"].get<double>(), 1.0, 1e-12);
    EXPECT_EQ(oracle["overall"]["pds"]["mean"].get<double>(), 1.0);

    ASSERT_EQ(run(concat({"predict", "--checkpoint", ck, "--perturbation", test[0], "--out", (dir / "pred").string()},
                         data_paths(dir))),
              0);
    const std::string csv = read_file(dir / "pred" / "predictions.csv");
    auto lines = detail::split(csv, '\n');
    EXPECT_EQ(lines[0].substr(0, 12), "perturbation");
    EXPECT_EQ(lines[1].substr(0, test[0].size()), test[0]);
    EXPECT_EQ(run(concat({"predict", "--checkpoint", ck, "--perturbation", "NOT_A_GENE", "--out",
                          (dir / "pred").string()},
                         data_paths(dir))),
              2);
}

TEST(Cli, ConfigPrecedence) {
    auto dir = make_dataset("cli_precedence");
    write_file(dir / "run.ini", "[train]\nepochs = 3\npatience = 3\n[run]\nseed = 8\n");
    auto base = concat(concat({"train", "--config", (dir / "run.ini").string()}, data_paths(dir)), kSmallModel);
    // kSmallModel sets train.epochs=4 via --set, which beats the file.
    ASSERT_EQ(run(concat(base, {"--out", (dir / "a").string()})), 0);
    auto h = nlohmann::json::parse(read_file(dir / "a" / "history.json"));
    EXPECT_EQ(h["epochs"].size(), 4u);
    EXPECT_EQ(h["seed"], 8);
    // A flag beats --set.
    ASSERT_EQ(run(concat(base, {"--out", (dir / "b").string(), "--set", "run.seed=2", "--seed", "5"})), 0);
    EXPECT_EQ(nlohmann::json::parse(read_file(dir / "b" / "history.json"))["seed"], 5);
    auto ini = read_file(dir / "b" / "config.effective.ini");
    EXPECT_NE(ini.find("seed = 5"), std::string::npos) << ini;
}

TEST(Cli, GraphAnalyses) {
    auto dir = make_dataset("cli_graph");
    ASSERT_EQ(run(concat({"graph-stats", "--out", (dir / "gs").string(), "--set", "graph.top_k=2"}, data_paths(dir))), 0);
    auto gs = nlohmann::json::parse(read_file(dir / "gs" / "graph_stats.json"));
    EXPECT_EQ(gs["input"]["nodes"], 60);
    EXPECT_TRUE(gs["nominated_bound_holds"].get<bool>());
    EXPECT_LE(gs["filtered"]["edges"].get<std::size_t>(), gs["input"]["edges"].get<std::size_t>());

    ASSERT_EQ(run(concat({"deg-coverage", "--out", (dir / "cov").string()}, data_paths(dir))), 0);
    auto cov = nlohmann::json::parse(read_file(dir / "cov" / "deg_coverage.json"));
    EXPECT_EQ(cov["coverage"].size(), 4u);
    EXPECT_TRUE(cov["monotone"].get<bool>());
    for (double v : cov["coverage"].get<std::vector<double>>()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(run(concat({"deg-coverage", "--out", (dir / "cov").string(), "--set", "graph.max_hops=0"}, data_paths(dir))),
              1);
}
