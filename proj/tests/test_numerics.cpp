#include <gtest/gtest.h>

#include <random>
#include <set>

#include "test_support.hpp"

using namespace adapert;
using namespace testing_support;

// ---- matrix -----------------------------------------------------------------------------------

TEST(Matrix, ShapeAndLayout) {
    Matrix m{{1, 2, 3}, {4, 5, 6}};
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    EXPECT_EQ(m.size(), 6u);
    EXPECT_EQ(m(1, 0), 4);
    EXPECT_EQ(m[5], 6);
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Matrix, ProductsMatchNaiveLoops) {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a = random_matrix(3, 5, gen);
        Matrix b = random_matrix(5, 4, gen);
        Matrix c = matmul(a, b);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                double s = 0;
                for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
                EXPECT_NEAR(c(i, j), s, 1e-14);
            }
        }
        EXPECT_LT(max_abs_diff(matmul_nt(a, transpose(b)), c), 1e-14);
        EXPECT_LT(max_abs_diff(matmul_tn(transpose(a), b), c), 1e-14);
    }
    EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
}

TEST(Matrix, IdentityProduct) {
    Matrix m{{1, 2}, {3, 4}};
    EXPECT_EQ(matmul(m, Matrix::identity(2)), m);
}

// ---- rng --------------------------------------------------------------------------------------

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal();
        EXPECT_EQ(x, b.normal());
        differs = differs || x != c.normal();
    }
    EXPECT_TRUE(differs);
}

TEST(Rng, UniformAndBelowStayInRange) {
    Rng r(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        const double o = r.uniform_open();
        EXPECT_GT(o, 0.0);
        EXPECT_LT(o, 1.0);
        EXPECT_LT(r.below(13), 13u);
    }
}

TEST(Rng, NormalMomentsAreStandard) {
    Rng r(9);
    const int n = 200000;
    double s = 0, ss = 0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        ss += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(ss / n, 1.0, 0.02);
}

TEST(Rng, GumbelMeanIsEulerGamma) {
    Rng r(10);
    const int n = 200000;
    double s = 0;
    for (int i = 0; i < n; ++i) s += r.gumbel();
    EXPECT_NEAR(s / n, 0.5772156649, 0.01);
}

TEST(Rng, ShuffleIsPermutation) {
    Rng r(3);
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    r.shuffle(v);
    EXPECT_EQ(std::set<int>(v.begin(), v.end()).size(), 50u);
    std::vector<int> w(50);
    for (int i = 0; i < 50; ++i) w[i] = i;
    EXPECT_NE(v, w);
}

TEST(Rng, DerivedSeedsDependOnEveryTag) {
    EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
    EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}

// ---- grad_check -------------------------------------------------------------------------------

TEST(GradCheck, ExactQuadratic) {
    std::vector<Matrix> w{Matrix{{2.0}}};
    auto fn = [](const std::vector<Matrix>& p) {
        return ValueAndGradient{p[0][0] * p[0][0], {Matrix{{2 * p[0][0]}}}};
    };
    EXPECT_LT(grad_check(fn, w, 1e-5), 1e-8);
    EXPECT_EQ(w[0][0], 2.0);
}

TEST(GradCheck, DetectsWrongGradient) {
    std::vector<Matrix> w{Matrix{{2.0}}};
    auto fn = [](const std::vector<Matrix>& p) { return ValueAndGradient{p[0][0] * p[0][0], {Matrix{{3.0}}}}; };
    EXPECT_GT(grad_check(fn, w, 1e-5), 0.1);
}

TEST(GradCheck, RejectsNondeterministicFunction) {
    std::vector<Matrix> w{Matrix{{1.0}}};
    int calls = 0;
    auto fn = [&](const std::vector<Matrix>& p) {
        return ValueAndGradient{p[0][0] + 1e-3 * ++calls, {Matrix{{1.0}}}};
    };
    EXPECT_THROW(grad_check(fn, w, 1e-5), NumericalError);
    EXPECT_THROW(grad_check(fn, w, 0.0), UsageError);
}

TEST(GradCheck, HuberAtKinkWithinSmoothingTolerance) {
    for (double r : {1.0, -1.0}) {
        std::vector<Matrix> w{Matrix{{r}}};
        auto fn = [](const std::vector<Matrix>& p) {
            ad::Tape t;
            auto x = t.parameter(p[0]);
            auto loss = t.sum_all(t.huber(x, 1.0));
            auto g = t.backward(loss);
            return ValueAndGradient{t.scalar(loss), {g.at(x)}};
        };
        EXPECT_LT(grad_check(fn, w, 1e-5), 1e-3);
    }
}

// ---- optimizer --------------------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParametersButCountsStep) {
    std::vector<Matrix> p{Matrix{{1, 2}}};
    std::vector<Matrix> g{Matrix(1, 2)};
    OptimizerState s;
    adam_step(p, g, s, {});
    EXPECT_EQ(p[0], (Matrix{{1, 2}}));
    EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    std::vector<Matrix> p{Matrix{{0.0, 0.0}}};
    std::vector<Matrix> g{Matrix{{0.5, -4.0}}};
    OptimizerState s;
    AdamOptions o;
    o.learning_rate = 0.01;
    adam_step(p, g, s, o);
    EXPECT_NEAR(p[0][0], -0.01, 1e-9);
    EXPECT_NEAR(p[0][1], 0.01, 1e-9);
}

TEST(Adam, MatchesHandRolledRecurrence) {
    std::vector<Matrix> p{Matrix{{0.3}}};
    OptimizerState s;
    AdamOptions o;
    o.learning_rate = 0.05;
    double w = 0.3, m = 0, v = 0;
    for (int t = 1; t <= 25; ++t) {
        const double grad = std::sin(w) + 0.1 * t;
        std::vector<Matrix> g{Matrix{{std::sin(p[0][0]) + 0.1 * t}}};
        adam_step(p, g, s, o);
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        w -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
        EXPECT_NEAR(p[0][0], w, 1e-12);
    }
}

TEST(Adam, ConvergesOnScalarQuadratic) {
    std::vector<Matrix> p{Matrix{{0.0}}};
    OptimizerState s;
    AdamOptions o;
    o.learning_rate = 0.1;
    for (int i = 0; i < 100; ++i) {
        std::vector<Matrix> g{Matrix{{2 * (p[0][0] - 3)}}};
        adam_step(p, g, s, o);
    }
    EXPECT_LT(std::abs(p[0][0] - 3), 0.1);
}

TEST(Adam, ShapeMismatchIsDimensionError) {
    std::vector<Matrix> p{Matrix(2, 2)};
    std::vector<Matrix> g{Matrix(2, 3)};
    OptimizerState s;
    EXPECT_THROW(adam_step(p, g, s, {}), DimensionError);
    AdamOptions bad;
    bad.learning_rate = 0;
    std::vector<Matrix> ok{Matrix(2, 2)};
    EXPECT_THROW(adam_step(p, ok, s, bad), UsageError);
}

// ---- statistics -------------------------------------------------------------------------------

TEST(Welch, MatchesFrozenReferenceValues) {
    // Values from an independent statistics package (two-sided, unequal variances).
    const std::vector<double> control{1.1, 0.9, 1.0, 1.2};
    const std::vector<double> perturbed{2.0, 2.2, 1.9, 2.1};
    auto r = welch_t_test(control, perturbed);
    EXPECT_NEAR(r.t, 10.954451150103317, 1e-10);
    EXPECT_NEAR(r.p_value, 3.4364028076121673e-05, 1e-12);
    auto r2 = welch_t_test(std::vector<double>{0.5, 0.7, 0.2}, std::vector<double>{1, 2, 3, 4, 10});
    EXPECT_NEAR(r2.p_value, 0.08896504679225549, 1e-10);
}

TEST(Welch, MatchesQuadratureOfTDensity) {
    std::mt19937_64 gen(77);
    std::uniform_int_distribution<int> size(2, 30);
    for (int trial = 0; trial < 200; ++trial) {
        auto a = random_vector(size(gen), gen, 0, 2);
        auto b = random_vector(size(gen), gen, 0.2, 2.5);
        auto r = welch_t_test(a, b);
        EXPECT_NEAR(r.p_value, ref_t_two_sided(r.t, r.df), 1e-8) << "trial " << trial;
    }
}

TEST(Welch, ZeroVarianceConventions) {
    EXPECT_EQ(welch_t_test(std::vector<double>{1, 1, 1}, std::vector<double>{1, 1}).p_value, 1.0);
    EXPECT_EQ(welch_t_test(std::vector<double>{1, 1, 1}, std::vector<double>{2, 2}).p_value, 0.0);
    EXPECT_THROW(welch_t_test(std::vector<double>{1}, std::vector<double>{1, 2}), UsageError);
}

TEST(BenjaminiHochberg, HandComputedAdjustment) {
    auto q = benjamini_hochberg(std::vector<double>{0.01, 0.04, 0.03, 0.20});
    EXPECT_NEAR(q[0], 0.04, 1e-15);
    EXPECT_NEAR(q[1], 0.04 * 4 / 3, 1e-15);
    EXPECT_NEAR(q[2], 0.04 * 4 / 3, 1e-15);
    EXPECT_NEAR(q[3], 0.20, 1e-15);
}

TEST(BenjaminiHochberg, MonotoneAndNeverBelowRaw) {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = random_vector(40, gen, 0, 1);
        auto q = benjamini_hochberg(p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_GE(q[i], p[i]);
            EXPECT_LE(q[i], 1.0);
            for (std::size_t j = 0; j < p.size(); ++j) {
                if (p[i] < p[j]) {
                    EXPECT_LE(q[i], q[j]);
                }
            }
        }
    }
}

TEST(Ranks, AverageTiesMatchCounting) {
    std::mt19937_64 gen(8);
    std::uniform_int_distribution<int> value(0, 6);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(20);
        for (double& v : x) v = value(gen);
        auto got = average_ranks(x);
        auto want = ref_ranks(x);
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(got[i], want[i]);
    }
}

TEST(Correlation, FrozenReferenceValues) {
    EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 2, 3, 5}), 0.9827076298239907, 1e-14);
    EXPECT_NEAR(spearman(std::vector<double>{3, 1, 2}, std::vector<double>{2, 1, 3}), 0.5, 1e-15);
}

TEST(Correlation, WeightedAgreesWithMomentDefinition) {
    std::mt19937_64 gen(15);
    for (int trial = 0; trial < 200; ++trial) {
        auto x = random_vector(12, gen);
        auto y = random_vector(12, gen);
        auto w = random_vector(12, gen, 0.01, 3);
        EXPECT_NEAR(weighted_pearson(x, y, w), ref_weighted_pearson(x, y, w), 1e-12);
        EXPECT_NEAR(weighted_spearman(x, y, w), ref_weighted_spearman(x, y, w), 1e-12);
    }
}

TEST(Correlation, UniformWeightsReproduceUnweightedExactly) {
    std::mt19937_64 gen(16);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = random_vector(9, gen);
        auto y = random_vector(9, gen);
        std::vector<double> w(9, 2.5);
        EXPECT_EQ(weighted_spearman(x, y, w), spearman(x, y));
    }
}

TEST(Correlation, DegenerateInputsThrow) {
    std::vector<double> flat{1, 1, 1};
    std::vector<double> x{1, 2, 3};
    EXPECT_THROW(pearson(flat, x), DegenerateInputError);
    EXPECT_THROW(weighted_pearson(x, x, std::vector<double>{0, 0, 0}), DegenerateInputError);
    EXPECT_THROW(pearson(x, std::vector<double>{1, 2}), DimensionError);
}

// ---- text / parallel --------------------------------------------------------------------------

TEST(Text, ShortestRoundTripFormatting) {
    std::mt19937_64 gen(2);
    for (double v : random_vector(100, gen, -1e6, 1e6)) {
        double back = 0;
        ASSERT_TRUE(detail::parse_double(detail::format_double(v), back));
        EXPECT_EQ(back, v);
    }
    EXPECT_EQ(detail::format_double(0.1), "0.1");
    double out = 0;
    EXPECT_FALSE(detail::parse_double("1.5x", out));
    EXPECT_FALSE(detail::parse_double("", out));
}

TEST(Parallel, CoversEveryIndexOnceAndRethrows) {
    std::vector<int> hits(101, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
    EXPECT_THROW(parallel_for(10, 3,
                              [](std::size_t i) {
                                  if (i == 7) throw DataError("boom");
                              }),
                 DataError);
}
