#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace adapert;
using namespace testing_support;

namespace {

DegTable table_from(const std::vector<std::vector<double>>& deltas, const std::vector<std::vector<bool>>& masks) {
    DegTable t;
    t.gene_count = deltas.front().size();
    for (std::size_t p = 0; p < deltas.size(); ++p) {
        PerturbationDegs row;
        row.delta = deltas[p];
        row.deg_mask = masks[p];
        row.pvalues.assign(row.delta.size(), 0.5);
        t.perturbations.emplace(p, row);
    }
    return t;
}

} // namespace

// ---- reconstruction ---------------------------------------------------------------------------

TEST(ReconLoss, HandValues) {
    std::vector<double> x{1.5, 2.0};
    EXPECT_EQ(recon_loss(x, x), 0.0);
    EXPECT_EQ(recon_loss(std::vector<double>{2, 1}, std::vector<double>{1, 2}), 1.0);
    EXPECT_THROW(recon_loss(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);
}

TEST(ReconLoss, MatchesNaiveLoop) {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = random_vector(50, gen, -3, 3);
        auto b = random_vector(50, gen, -3, 3);
        double s = 0;
        for (std::size_t i = 0; i < 50; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        EXPECT_NEAR(recon_loss(a, b), s / 50, 1e-12);
    }
}

TEST(ReconLoss, DegSplitDecomposesSumOfSquares) {
    std::mt19937_64 gen(2);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 50; ++trial) {
        auto a = random_vector(40, gen);
        auto b = random_vector(40, gen);
        double deg = 0, non = 0;
        for (std::size_t i = 0; i < 40; ++i) (coin(gen) ? deg : non) += (a[i] - b[i]) * (a[i] - b[i]);
        EXPECT_NEAR(deg + non, 40 * recon_loss(a, b), 1e-12);
    }
}

// ---- Huber ------------------------------------------------------------------------------------

TEST(Huber, BranchValuesAndContinuity) {
    EXPECT_EQ(huber(0.5, 1.0), 0.125);
    EXPECT_EQ(huber(2.0, 1.0), 1.5);
    EXPECT_EQ(huber(-2.0, 1.0), 1.5);
    for (double d : {0.1, 1.0, 3.0}) {
        EXPECT_DOUBLE_EQ(huber(d, d), 0.5 * d * d);
        EXPECT_NEAR(huber(std::nextafter(d, 10.0), d), 0.5 * d * d, 1e-12);
    }
}

TEST(Huber, DerivativeAgreesAtKink) {
    for (double d : {0.5, 1.0, 2.0}) {
        for (double r : {d, -d}) {
            const double h = 1e-6;
            const double numeric = (huber(r + h, d) - huber(r - h, d)) / (2 * h);
            EXPECT_NEAR(numeric, r > 0 ? d : -d, 1e-3);
        }
    }
}

// ---- non-DEG penalty --------------------------------------------------------------------------

TEST(NonDegLoss, MeanHuberOverNonDegs) {
    std::vector<double> control{1, 1, 1, 1};
    std::vector<double> pred{1.5, 3, 0, 9};
    std::vector<std::size_t> non{0, 1, 2};
    EXPECT_DOUBLE_EQ(non_deg_loss(pred, control, non, 1.0), (0.125 + 1.5 + 0.5) / 3);
    EXPECT_EQ(non_deg_loss(pred, control, std::vector<std::size_t>{}, 1.0), 0.0);
    EXPECT_EQ(non_deg_loss(control, control, non, 1.0), 0.0);
}

// ---- Huber threshold --------------------------------------------------------------------------

TEST(HuberDelta, PopulationStdOfPooledNonDegDeltas) {
    auto t = table_from({{-1, 5, 1}}, {{false, true, false}});
    EXPECT_DOUBLE_EQ(estimate_huber_delta(t), 1.0);
    EXPECT_DOUBLE_EQ(estimate_huber_delta(t, 2.5), 2.5);
    auto zeros = table_from({{0, 5, 0}}, {{false, true, false}});
    EXPECT_THROW(estimate_huber_delta(zeros), NumericalError);
    auto all_deg = table_from({{1, 2}}, {{true, true}});
    EXPECT_THROW(estimate_huber_delta(all_deg), UsageError);
}

TEST(HuberDelta, MatchesMonteCarloScaleOnSyntheticData) {
    // A non-DEG delta is a difference of two means of 20 cells with noise 0.1,
    // so its spread is about 0.1 * sqrt(2 / 20). Estimate that by simulation.
    Rng rng(77);
    double ss = 0;
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
        double a = 0, b = 0;
        for (int c = 0; c < 20; ++c) {
            a += 0.1 * rng.normal();
            b += 0.1 * rng.normal();
        }
        ss += (a / 20 - b / 20) * (a / 20 - b / 20);
    }
    const double oracle = std::sqrt(ss / draws);
    auto s = synth_generate(SynthConfig{}, 4);
    auto table = compute_degs(s.dataset);
    EXPECT_NEAR(estimate_huber_delta(table), oracle, 0.2 * oracle);
}

// ---- alignment --------------------------------------------------------------------------------

namespace {

/// Params whose alignment head copies the first d genes.
ModelParams head_copying(std::size_t genes, std::size_t d) {
    ModelConfig c;
    c.latent_dim = d;
    c.struct_dim = 2;
    c.score_dim = 2;
    c.hidden_dim = 2;
    auto p = init_params(c, genes, 2, {}, {}, 1);
    Matrix head(d, genes);
    for (std::size_t i = 0; i < d; ++i) head(i, i) = 1.0;
    p["align.head"] = head;
    return p;
}

} // namespace

TEST(AlignLoss, GeometryOfUnitVectors) {
    auto p = head_copying(4, 2);
    std::vector<double> delta{3, 4, 7, 7};
    std::vector<bool> all{true, true, true, true};
    EXPECT_NEAR(align_loss(std::vector<double>{6, 8}, delta, all, p), 0.0, 1e-15);
    EXPECT_NEAR(align_loss(std::vector<double>{-3, -4}, delta, all, p), 4.0, 1e-15);
    EXPECT_NEAR(align_loss(std::vector<double>{-4, 3}, delta, all, p), 2.0, 1e-15);
}

TEST(AlignLoss, MasksNonDegsAndDegenerateNormsGiveZero) {
    auto p = head_copying(4, 2);
    std::vector<double> delta{3, 4, 7, 7};
    // Gene 1 masked: target becomes (3, 0).
    EXPECT_NEAR(align_loss(std::vector<double>{0, 1}, delta, {true, false, true, true}, p), 2.0, 1e-15);
    EXPECT_EQ(align_loss(std::vector<double>{1, 1}, delta, {false, false, true, true}, p), 0.0);
    EXPECT_EQ(align_loss(std::vector<double>{0, 0}, delta, {true, true, true, true}, p), 0.0);
    EXPECT_EQ(masked_delta(delta, {true, false, false, true}), (std::vector<double>{3, 0, 0, 7}));
}

TEST(AlignLoss, DegenerateNormContributesZeroGradient) {
    auto p = head_copying(4, 2);
    ad::Tape t;
    BoundParams bp(t, p);
    auto z = t.parameter(Matrix(1, 2));
    auto g = t.backward(align_loss(bp, z, std::vector<double>{1, 2, 3, 4}, {true, true, true, true}));
    EXPECT_EQ(g.at(z), Matrix(1, 2));
    EXPECT_EQ(g.at(bp("align.head")), Matrix(2, 4));
}

// ---- total ------------------------------------------------------------------------------------

TEST(TotalLoss, WeightedSum) {
    LossWeights w;
    w.lambda_non = 0.5;
    w.lambda_align = 0.5;
    EXPECT_EQ(total_loss(1, 2, 3, w), 3.5);
    w.lambda_non = w.lambda_align = 0;
    EXPECT_EQ(total_loss(1.25, 2, 3, w), 1.25);
    w.lambda_non = -1;
    EXPECT_THROW(w.validate(), UsageError);
}

TEST(TotalLoss, ToyInstanceMatchesHandComposition) {
    auto toy = make_toy_instance(3);
    auto value = [&](ToyLoss which) { return toy_loss(toy, toy.params.values(), which).value; };
    EXPECT_NEAR(value(ToyLoss::total), value(ToyLoss::recon) + 0.5 * value(ToyLoss::non_deg) + 0.25 * value(ToyLoss::align),
                1e-12);
    EXPECT_GE(value(ToyLoss::recon), 0.0);
    EXPECT_GE(value(ToyLoss::non_deg), 0.0);
    EXPECT_GE(value(ToyLoss::align), 0.0);
}

TEST(LossGradients, EveryTermMatchesFiniteDifferences) {
    for (std::uint64_t seed : {1, 2, 3}) {
        for (auto which : {ToyLoss::recon, ToyLoss::non_deg, ToyLoss::align, ToyLoss::total}) {
            EXPECT_LT(toy_gradient_error(which, seed), 1e-4) << "seed " << seed << " loss " << int(which);
        }
    }
}
