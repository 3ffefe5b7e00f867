#include <gtest/gtest.h>

#include <functional>
#include <memory>
#include <random>

#include "test_support.hpp"

using namespace adapert;
using ad::NodeId;
using ad::Tape;
using testing_support::random_matrix;

namespace {

using Builder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

/// Max relative FD error of a scalar tape function of `inputs`.
double fd_error(const Builder& build, std::vector<Matrix> inputs, double eps = 1e-5) {
    auto fn = [&](const std::vector<Matrix>& xs) {
        Tape t;
        std::vector<NodeId> ids;
        for (const auto& x : xs) ids.push_back(t.parameter(x));
        NodeId loss = build(t, ids);
        auto grads = t.backward(loss);
        ValueAndGradient out{t.scalar(loss), {}};
        for (NodeId id : ids) out.gradients.push_back(grads.at(id));
        return out;
    };
    return grad_check(fn, inputs, eps);
}

/// Reduce any node to a scalar with fixed random weights so every output entry matters.
NodeId weighted_sum(Tape& t, NodeId x, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    const Matrix& v = t.value(x);
    return t.sum_all(t.mul(x, t.constant(random_matrix(v.rows(), v.cols(), gen))));
}

struct OpCase {
    const char* name;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    std::function<NodeId(Tape&, const std::vector<NodeId>&)> op;
};

std::shared_ptr<const ad::SparseRows> small_sparse() {
    auto s = std::make_shared<ad::SparseRows>();
    s->rows = 3;
    s->cols = 3;
    s->offsets = {0, 2, 5, 6};
    s->indices = {0, 1, 0, 1, 2, 2};
    s->coefs = {0.5, 0.5, 0.2, 0.3, 0.5, 1.0};
    return s;
}

std::vector<OpCase> op_cases() {
    return {
        {"matmul", {{3, 4}, {4, 2}}, [](Tape& t, auto& x) { return t.matmul(x[0], x[1]); }},
        {"add", {{2, 3}, {2, 3}}, [](Tape& t, auto& x) { return t.add(x[0], x[1]); }},
        {"sub", {{2, 3}, {2, 3}}, [](Tape& t, auto& x) { return t.sub(x[0], x[1]); }},
        {"mul", {{2, 3}, {2, 3}}, [](Tape& t, auto& x) { return t.mul(x[0], x[1]); }},
        {"scale", {{2, 3}}, [](Tape& t, auto& x) { return t.scale(x[0], -1.7); }},
        {"concat", {{2, 3}, {2, 1}, {2, 2}}, [](Tape& t, auto& x) { return t.concat_cols(x); }},
        {"relu", {{3, 3}}, [](Tape& t, auto& x) { return t.relu(x[0]); }},
        {"sigmoid", {{3, 3}}, [](Tape& t, auto& x) { return t.sigmoid(x[0]); }},
        {"softmax", {{3, 5}}, [](Tape& t, auto& x) { return t.row_softmax(x[0]); }},
        {"mean_all", {{3, 5}}, [](Tape& t, auto& x) { return t.mean_all(x[0]); }},
        {"sum_all", {{3, 5}}, [](Tape& t, auto& x) { return t.sum_all(x[0]); }},
        {"sum_rows", {{4, 3}}, [](Tape& t, auto& x) { return t.sum_rows(x[0]); }},
        {"l2_normalize", {{1, 6}}, [](Tape& t, auto& x) { return t.l2_normalize(x[0]); }},
        {"square", {{3, 3}}, [](Tape& t, auto& x) { return t.square(x[0]); }},
        {"huber", {{4, 4}}, [](Tape& t, auto& x) { return t.huber(x[0], 0.4); }},
        {"cosine_distance", {{1, 5}, {1, 5}}, [](Tape& t, auto& x) { return t.cosine_distance(x[0], x[1]); }},
        {"mse", {{2, 4}, {2, 4}}, [](Tape& t, auto& x) { return t.mse(x[0], x[1]); }},
        {"transpose", {{2, 5}}, [](Tape& t, auto& x) { return t.transpose(x[0]); }},
        {"repeat_rows", {{1, 4}}, [](Tape& t, auto& x) { return t.repeat_rows(x[0], 3); }},
        {"linear", {{2, 3}, {4, 3}}, [](Tape& t, auto& x) { return t.linear(x[0], x[1]); }},
        {"sparse_aggregate", {{3, 2}}, [](Tape& t, auto& x) { return t.sparse_aggregate(small_sparse(), x[0]); }},
    };
}

} // namespace

TEST(Tape, MatmulIdentity) {
    Tape t;
    NodeId a = t.constant(Matrix{{1, 2}, {3, 4}});
    NodeId out = t.matmul(a, t.constant(Matrix::identity(2)));
    EXPECT_EQ(t.value(out), (Matrix{{1, 2}, {3, 4}}));
}

TEST(Tape, Relu) {
    Tape t;
    NodeId out = t.relu(t.constant(Matrix{{-1, 0, 2}}));
    EXPECT_EQ(t.value(out), (Matrix{{0, 0, 2}}));
}

TEST(Tape, CosineDistanceOfVectorWithItselfIsZero) {
    std::mt19937_64 gen(3);
    for (int i = 0; i < 20; ++i) {
        Tape t;
        Matrix v = random_matrix(1, 7, gen);
        NodeId a = t.constant(v);
        EXPECT_NEAR(t.scalar(t.cosine_distance(a, t.constant(v))), 0.0, 1e-15);
    }
}

TEST(Tape, MseOfScalarAgainstZero) {
    Tape t;
    NodeId x = t.parameter(Matrix{{3}});
    NodeId loss = t.mse(x, t.constant(Matrix{{0}}));
    EXPECT_DOUBLE_EQ(t.scalar(loss), 9.0);
    EXPECT_DOUBLE_EQ(t.backward(loss).at(x)[0], 6.0);
}

TEST(Tape, UnreachedParameterHasExactZeroGradient) {
    Tape t;
    NodeId used = t.parameter(Matrix{{1, 2}});
    NodeId unused = t.parameter(Matrix{{5, 6}});
    auto grads = t.backward(t.sum_all(t.square(used)));
    EXPECT_EQ(grads.at(unused), Matrix(1, 2, 0.0));
    EXPECT_EQ(grads.at(used), (Matrix{{2, 4}}));
}

TEST(Tape, BackwardRequiresScalarLoss) {
    Tape t;
    NodeId x = t.parameter(Matrix(2, 2, 1.0));
    EXPECT_THROW(t.backward(x), UsageError);
}

TEST(Tape, ShapeMismatchIsDimensionError) {
    Tape t;
    NodeId a = t.constant(Matrix(2, 3));
    NodeId b = t.constant(Matrix(3, 2));
    EXPECT_THROW(t.add(a, b), DimensionError);
    EXPECT_THROW(t.matmul(a, a), DimensionError);
    EXPECT_THROW(t.cosine_distance(a, t.constant(Matrix(2, 2))), DimensionError);
}

TEST(Tape, LeafKindThroughApplyIsUsageError) {
    Tape t;
    NodeId a = t.constant(Matrix(1, 1));
    EXPECT_THROW(t.apply(ad::OpKind::leaf, {a}), UsageError);
    EXPECT_THROW(t.apply(ad::OpKind::relu, {a, a}), UsageError);
}

TEST(Tape, ParentsAreEarlierNodes) {
    Tape t;
    NodeId a = t.parameter(Matrix(2, 2, 0.5));
    NodeId b = t.relu(t.matmul(a, a));
    NodeId c = t.sum_all(t.add(b, a));
    EXPECT_LT(ad::index_of(a), ad::index_of(b));
    EXPECT_LT(ad::index_of(b), ad::index_of(c));
    EXPECT_EQ(t.size(), ad::index_of(c) + 1);
}

TEST(TapeProperty, EveryOpMatchesFiniteDifferences) {
    for (const auto& c : op_cases()) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 gen(seed * 7919 + 1);
            std::vector<Matrix> inputs;
            for (auto [r, k] : c.shapes) inputs.push_back(random_matrix(r, k, gen));
            Builder b = [&](Tape& t, const std::vector<NodeId>& x) { return weighted_sum(t, c.op(t, x), seed); };
            EXPECT_LT(fd_error(b, inputs), 1e-4) << c.name << " seed " << seed;
        }
    }
}

TEST(TapeProperty, SoftmaxRowsAreDistributions) {
    std::mt19937_64 gen(11);
    for (int i = 0; i < 50; ++i) {
        Tape t;
        Matrix x = random_matrix(4, 9, gen, -30, 30);
        const Matrix& s = t.value(t.row_softmax(t.constant(x)));
        for (std::size_t r = 0; r < s.rows(); ++r) {
            double sum = 0;
            for (double v : s.row_span(r)) {
                EXPECT_GT(v, 0.0);
                EXPECT_LT(v, 1.0);
                sum += v;
            }
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
    }
}

TEST(TapeProperty, L2NormalizeHasUnitNorm) {
    std::mt19937_64 gen(12);
    for (int i = 0; i < 50; ++i) {
        Tape t;
        Matrix x = random_matrix(1, 6, gen, -1e-6, 1e-6);
        const Matrix& n = t.value(t.l2_normalize(t.constant(x)));
        EXPECT_NEAR(squared_norm(n.values()), 1.0, 1e-9);
    }
}

TEST(Tape, L2NormalizeOfTinyVectorIsZeroWithZeroGradient) {
    Tape t;
    NodeId x = t.parameter(Matrix{{1e-14, -1e-14, 0}});
    NodeId n = t.l2_normalize(x);
    EXPECT_EQ(t.value(n), Matrix(1, 3, 0.0));
    auto g = t.backward(t.sum_all(n));
    EXPECT_EQ(g.at(x), Matrix(1, 3, 0.0));
}

TEST(Tape, HuberUsesExactPiecewiseSlope) {
    Tape t;
    NodeId x = t.parameter(Matrix{{-3, -0.5, 0.25, 1, 2}});
    auto g = t.backward(t.sum_all(t.huber(x, 1.0)));
    EXPECT_EQ(g.at(x), (Matrix{{-1, -0.5, 0.25, 1, 1}}));
}

TEST(Tape, StraightThroughForwardsHardAndRoutesGradientToSoft) {
    Tape t;
    NodeId hard = t.constant(Matrix{{1, 0, 1}});
    NodeId soft = t.parameter(Matrix{{0.5, 0.2, 0.3}});
    NodeId st = t.straight_through(hard, soft);
    EXPECT_EQ(t.value(st), (Matrix{{1, 0, 1}}));
    NodeId loss = t.sum_all(t.mul(st, t.constant(Matrix{{2, 3, 4}})));
    EXPECT_EQ(t.backward(loss).at(soft), (Matrix{{2, 3, 4}}));
    Tape r;
    NodeId relaxed = r.straight_through(r.constant(Matrix{{1, 0}}), r.constant(Matrix{{0.4, 0.6}}), true);
    EXPECT_EQ(r.value(relaxed), (Matrix{{0.4, 0.6}}));
}

TEST(Tape, BackwardIsBitDeterministic) {
    std::mt19937_64 gen(5);
    Matrix w = random_matrix(6, 6, gen);
    Matrix x = random_matrix(3, 6, gen);
    Tape t;
    NodeId wi = t.parameter(w);
    NodeId loss = t.mean_all(t.square(t.sigmoid(t.matmul(t.constant(x), wi))));
    auto first = t.backward(loss).at(wi);
    auto second = t.backward(loss).at(wi);
    EXPECT_EQ(first, second);
}

TEST(Tape, ThreeLayerMlpMatchesFiniteDifferences) {
    std::mt19937_64 gen(21);
    std::vector<Matrix> params{random_matrix(5, 4, gen), random_matrix(5, 5, gen), random_matrix(2, 5, gen)};
    Matrix input = random_matrix(3, 4, gen);
    Matrix target = random_matrix(3, 2, gen);
    Builder b = [&](Tape& t, const std::vector<NodeId>& p) {
        NodeId h = t.sigmoid(t.linear(t.constant(input), p[0]));
        h = t.relu(t.linear(h, p[1]));
        return t.mse(t.linear(h, p[2]), t.constant(target));
    };
    EXPECT_LT(fd_error(b, params), 1e-4);
}

TEST(Tape, LogFloorGradientVanishesAtFloor) {
    Tape t;
    NodeId x = t.parameter(Matrix{{0.5, 1e-20}});
    NodeId y = t.log_floor(x, 1e-12);
    EXPECT_DOUBLE_EQ(t.value(y)[1], std::log(1e-12));
    auto g = t.backward(t.sum_all(y));
    EXPECT_DOUBLE_EQ(g.at(x)[0], 2.0);
    EXPECT_DOUBLE_EQ(g.at(x)[1], 0.0);
}
