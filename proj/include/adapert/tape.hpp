#ifndef ADAPERT_TAPE_HPP
#define ADAPERT_TAPE_HPP

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"

/**
 * @file tape.hpp
 * @brief Define-by-run reverse-mode automatic differentiation over `Matrix` values.
 *
 * A `Tape` is an append-only list of nodes in topological order. Every node
 * records its operation, the ids of its parents (all strictly earlier), and
 * its value. `backward()` walks the tape once in reverse and accumulates
 * gradients. Tapes are rebuilt for every training step.
 */

namespace adapert::ad {

enum class NodeId : std::size_t {};

inline std::size_t index_of(NodeId id) { return static_cast<std::size_t>(id); }

enum class OpKind {
    leaf,
    matmul,
    add,
    sub,
    mul,
    scale,
    concat_cols,
    relu,
    sigmoid,
    row_softmax,
    mean_all,
    sum_all,
    sum_rows,
    l2_normalize,
    square,
    huber,
    cosine_distance,
    mse,
    transpose,
    log_floor,
    repeat_rows,
    sparse_aggregate,
    straight_through,
};

inline const char* op_name(OpKind kind) {
    switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::concat_cols: return "concat-cols";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::row_softmax: return "row-softmax";
    case OpKind::mean_all: return "mean-all";
    case OpKind::sum_all: return "sum-all";
    case OpKind::sum_rows: return "sum-rows";
    case OpKind::l2_normalize: return "l2-normalize-vector";
    case OpKind::square: return "elementwise-square";
    case OpKind::huber: return "huber";
    case OpKind::cosine_distance: return "cosine-distance";
    case OpKind::mse: return "mse";
    case OpKind::transpose: return "transpose";
    case OpKind::log_floor: return "log-floor";
    case OpKind::repeat_rows: return "repeat-rows";
    case OpKind::sparse_aggregate: return "sparse-aggregate";
    case OpKind::straight_through: return "straight-through";
    }
    return "unknown";
}

/// Norms at or below this are treated as zero by the normalizing ops.
inline constexpr double kNormFloor = 1e-12;

/// Constant sparse row operator, `out_i = sum_j coef_ij * in_j`.
struct SparseRows {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> indices;
    std::vector<double> coefs;
};

/// Per-op attributes; only the fields relevant to the op kind are read.
struct OpAttrs {
    double scalar = 0.0;    // scale factor, huber delta, log floor
    std::size_t count = 0;  // repeat_rows
    std::shared_ptr<const SparseRows> sparse{};
    bool relaxed = false;   // straight_through: forward the soft value instead of the hard one
};

struct TapeNode {
    OpKind kind = OpKind::leaf;
    std::vector<NodeId> parents;
    Matrix value;
    Matrix gradient;
    OpAttrs attrs;
    bool is_parameter = false;
    bool requires_grad = false;
};

class Tape {
public:
    NodeId parameter(Matrix value) { return push_leaf(std::move(value), true); }
    NodeId constant(Matrix value) { return push_leaf(std::move(value), false); }

    /// Append one operation node. Throws `DimensionError` on shape mismatch.
    NodeId apply(OpKind kind, std::span<const NodeId> inputs, OpAttrs attrs = {}) {
        for (NodeId id : inputs) {
            if (index_of(id) >= nodes_.size()) {
                throw UsageError(std::string(op_name(kind)) + ": parent id out of range");
            }
        }
        TapeNode node;
        node.kind = kind;
        node.parents.assign(inputs.begin(), inputs.end());
        node.attrs = std::move(attrs);
        node.value = compute(kind, node.parents, node.attrs);
        for (NodeId id : inputs) {
            node.requires_grad = node.requires_grad || nodes_[index_of(id)].requires_grad;
        }
        nodes_.push_back(std::move(node));
        return NodeId{nodes_.size() - 1};
    }

    NodeId apply(OpKind kind, std::initializer_list<NodeId> inputs, OpAttrs attrs = {}) {
        return apply(kind, std::span<const NodeId>(inputs.begin(), inputs.size()), std::move(attrs));
    }

    NodeId matmul(NodeId a, NodeId b) { return apply(OpKind::matmul, {a, b}); }
    NodeId add(NodeId a, NodeId b) { return apply(OpKind::add, {a, b}); }
    NodeId sub(NodeId a, NodeId b) { return apply(OpKind::sub, {a, b}); }
    NodeId mul(NodeId a, NodeId b) { return apply(OpKind::mul, {a, b}); }
    NodeId scale(NodeId a, double s) { return apply(OpKind::scale, {a}, {.scalar = s}); }
    NodeId concat_cols(std::span<const NodeId> parts) { return apply(OpKind::concat_cols, parts); }
    NodeId concat_cols(NodeId a, NodeId b) { return apply(OpKind::concat_cols, {a, b}); }
    NodeId relu(NodeId a) { return apply(OpKind::relu, {a}); }
    NodeId sigmoid(NodeId a) { return apply(OpKind::sigmoid, {a}); }
    NodeId row_softmax(NodeId a) { return apply(OpKind::row_softmax, {a}); }
    NodeId mean_all(NodeId a) { return apply(OpKind::mean_all, {a}); }
    NodeId sum_all(NodeId a) { return apply(OpKind::sum_all, {a}); }
    NodeId sum_rows(NodeId a) { return apply(OpKind::sum_rows, {a}); }
    NodeId l2_normalize(NodeId a) { return apply(OpKind::l2_normalize, {a}); }
    NodeId square(NodeId a) { return apply(OpKind::square, {a}); }
    NodeId huber(NodeId a, double delta) { return apply(OpKind::huber, {a}, {.scalar = delta}); }
    NodeId cosine_distance(NodeId a, NodeId b) { return apply(OpKind::cosine_distance, {a, b}); }
    NodeId mse(NodeId a, NodeId b) { return apply(OpKind::mse, {a, b}); }
    NodeId transpose(NodeId a) { return apply(OpKind::transpose, {a}); }
    NodeId log_floor(NodeId a, double floor) { return apply(OpKind::log_floor, {a}, {.scalar = floor}); }
    NodeId repeat_rows(NodeId a, std::size_t n) { return apply(OpKind::repeat_rows, {a}, {.count = n}); }
    NodeId sparse_aggregate(std::shared_ptr<const SparseRows> op, NodeId a) {
        return apply(OpKind::sparse_aggregate, {a}, {.sparse = std::move(op)});
    }
    /// Forward value of `hard` (or `soft` when relaxed); the gradient flows to `soft` unchanged.
    NodeId straight_through(NodeId hard, NodeId soft, bool relaxed = false) {
        return apply(OpKind::straight_through, {hard, soft}, {.relaxed = relaxed});
    }

    /// x * W^T, the usual dense layer with weights stored as (out x in).
    NodeId linear(NodeId x, NodeId weight) { return matmul(x, transpose(weight)); }

    const TapeNode& node(NodeId id) const { return nodes_.at(index_of(id)); }
    const Matrix& value(NodeId id) const { return node(id).value; }
    const Matrix& gradient(NodeId id) const { return node(id).gradient; }
    double scalar(NodeId id) const {
        const Matrix& v = value(id);
        if (v.rows() != 1 || v.cols() != 1) {
            throw UsageError("node value is not scalar: " + v.shape_string());
        }
        return v[0];
    }
    std::size_t size() const noexcept { return nodes_.size(); }

    /**
     * Reverse accumulation from a scalar loss node.
     * Returns the gradient of every parameter leaf; parameters the loss does
     * not reach get an exact zero matrix.
     */
    std::map<NodeId, Matrix> backward(NodeId loss) {
        const Matrix& lv = value(loss);
        if (lv.rows() != 1 || lv.cols() != 1) {
            throw UsageError("backward: loss must be a 1x1 value, got " + lv.shape_string());
        }
        for (auto& n : nodes_) {
            n.gradient = Matrix(n.value.rows(), n.value.cols());
        }
        nodes_[index_of(loss)].gradient[0] = 1.0;
        for (std::size_t i = index_of(loss) + 1; i-- > 0;) {
            TapeNode& n = nodes_[i];
            if (n.kind == OpKind::leaf || !n.requires_grad) {
                continue;
            }
            propagate(n);
        }
        std::map<NodeId, Matrix> out;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].is_parameter) {
                out.emplace(NodeId{i}, nodes_[i].gradient);
            }
        }
        return out;
    }

private:
    std::vector<TapeNode> nodes_;

    NodeId push_leaf(Matrix value, bool param) {
        TapeNode node;
        node.value = std::move(value);
        node.is_parameter = param;
        node.requires_grad = param;
        nodes_.push_back(std::move(node));
        return NodeId{nodes_.size() - 1};
    }

    const Matrix& in(const std::vector<NodeId>& parents, std::size_t k) const { return nodes_[index_of(parents[k])].value; }

    static void require_arity(OpKind kind, std::size_t got, std::size_t want) {
        if (got != want) {
            throw UsageError(std::string(op_name(kind)) + ": expected " + std::to_string(want) + " inputs, got " +
                             std::to_string(got));
        }
    }

    template<typename F>
    static Matrix map_values(const Matrix& a, F&& f) {
        Matrix out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.size(); ++i) {
            out[i] = f(a[i]);
        }
        return out;
    }

    static double huber_value(double r, double delta) {
        const double a = std::abs(r);
        return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
    }

    static double huber_slope(double r, double delta) {
        if (std::abs(r) <= delta) {
            return r;
        }
        return r > 0 ? delta : -delta;
    }

    static Matrix scalar_matrix(double v) { return Matrix(1, 1, v); }

    Matrix compute(OpKind kind, const std::vector<NodeId>& p, const OpAttrs& attrs) const {
        switch (kind) {
        case OpKind::leaf:
            throw UsageError("leaf nodes are created with parameter() or constant()");
        case OpKind::matmul:
            require_arity(kind, p.size(), 2);
            return adapert::matmul(in(p, 0), in(p, 1));
        case OpKind::add:
        case OpKind::sub:
        case OpKind::mul: {
            require_arity(kind, p.size(), 2);
            const Matrix& a = in(p, 0);
            const Matrix& b = in(p, 1);
            require_same_shape(a, b, op_name(kind));
            Matrix out(a.rows(), a.cols());
            for (std::size_t i = 0; i < a.size(); ++i) {
                out[i] = kind == OpKind::add ? a[i] + b[i] : kind == OpKind::sub ? a[i] - b[i] : a[i] * b[i];
            }
            return out;
        }
        case OpKind::scale:
            require_arity(kind, p.size(), 1);
            return map_values(in(p, 0), [s = attrs.scalar](double v) { return s * v; });
        case OpKind::concat_cols: {
            if (p.empty()) {
                throw UsageError("concat-cols: no inputs");
            }
            std::size_t rows = in(p, 0).rows();
            std::size_t cols = 0;
            for (std::size_t k = 0; k < p.size(); ++k) {
                if (in(p, k).rows() != rows) {
                    throw DimensionError("concat-cols: row counts differ");
                }
                cols += in(p, k).cols();
            }
            Matrix out(rows, cols);
            std::size_t offset = 0;
            for (std::size_t k = 0; k < p.size(); ++k) {
                const Matrix& part = in(p, k);
                for (std::size_t r = 0; r < rows; ++r) {
                    std::copy(part.row_span(r).begin(), part.row_span(r).end(), out.row_span(r).begin() + offset);
                }
                offset += part.cols();
            }
            return out;
        }
        case OpKind::relu:
            require_arity(kind, p.size(), 1);
            return map_values(in(p, 0), [](double v) { return v > 0 ? v : 0.0; });
        case OpKind::sigmoid:
            require_arity(kind, p.size(), 1);
            return map_values(in(p, 0), [](double v) {
                return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            });
        case OpKind::row_softmax: {
            require_arity(kind, p.size(), 1);
            const Matrix& a = in(p, 0);
            Matrix out(a.rows(), a.cols());
            for (std::size_t r = 0; r < a.rows(); ++r) {
                auto src = a.row_span(r);
                auto dst = out.row_span(r);
                double mx = -INFINITY;
                for (double v : src) {
                    mx = std::max(mx, v);
                }
                double total = 0;
                for (std::size_t j = 0; j < src.size(); ++j) {
                    dst[j] = std::exp(src[j] - mx);
                    total += dst[j];
                }
                for (double& v : dst) {
                    v /= total;
                }
            }
            return out;
        }
        case OpKind::mean_all:
        case OpKind::sum_all: {
            require_arity(kind, p.size(), 1);
            const Matrix& a = in(p, 0);
            double total = 0;
            for (double v : a.values()) {
                total += v;
            }
            if (kind == OpKind::mean_all) {
                if (a.size() == 0) {
                    throw DimensionError("mean-all: empty input");
                }
                total /= static_cast<double>(a.size());
            }
            return scalar_matrix(total);
        }
        case OpKind::sum_rows: {
            require_arity(kind, p.size(), 1);
            const Matrix& a = in(p, 0);
            Matrix out(1, a.cols());
            for (std::size_t r = 0; r < a.rows(); ++r) {
                for (std::size_t c = 0; c < a.cols(); ++c) {
                    out[c] += a(r, c);
                }
            }
            return out;
        }
        case OpKind::l2_normalize: {
            require_arity(kind, p.size(), 1);
            const Matrix& a = in(p, 0);
            const double norm = std::sqrt(squared_norm(a.values()));
            if (norm <= kNormFloor) {
                return Matrix(a.rows(), a.cols());
            }
            return map_values(a, [norm](double v) { return v / norm; });
        }
        case OpKind::square:
            require_arity(kind, p.size(), 1);
            return map_values(in(p, 0), [](double v) { return v * v; });
        case OpKind::huber: {
            require_arity(kind, p.size(), 1);
            if (!(attrs.scalar > 0)) {
                throw UsageError("huber: delta must be positive");
            }
            return map_values(in(p, 0), [d = attrs.scalar](double v) { return huber_value(v, d); });
        }
        case OpKind::cosine_distance: {
            require_arity(kind, p.size(), 2);
            const Matrix& a = in(p, 0);
            const Matrix& b = in(p, 1);
            if (a.size() != b.size()) {
                throw DimensionError("cosine-distance: lengths differ " + a.shape_string() + " vs " + b.shape_string());
            }
            const double na = std::sqrt(squared_norm(a.values()));
            const double nb = std::sqrt(squared_norm(b.values()));
            if (na <= kNormFloor || nb <= kNormFloor) {
                return scalar_matrix(0.0);
            }
            double total = 0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double diff = a[i] / na - b[i] / nb;
                total += diff * diff;
            }
            return scalar_matrix(total);
        }
        case OpKind::mse: {
            require_arity(kind, p.size(), 2);
            const Matrix& a = in(p, 0);
            const Matrix& b = in(p, 1);
            require_same_shape(a, b, "mse");
            double total = 0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                total += (a[i] - b[i]) * (a[i] - b[i]);
            }
            return scalar_matrix(total / static_cast<double>(a.size()));
        }
        case OpKind::transpose:
            require_arity(kind, p.size(), 1);
            return adapert::transpose(in(p, 0));
        case OpKind::log_floor:
            require_arity(kind, p.size(), 1);
            return map_values(in(p, 0), [f = attrs.scalar](double v) { return std::log(std::max(v, f)); });
        case OpKind::repeat_rows: {
            require_arity(kind, p.size(), 1);
            const Matrix& a = in(p, 0);
            if (a.rows() != 1) {
                throw DimensionError("repeat-rows: input must be a single row, got " + a.shape_string());
            }
            Matrix out(attrs.count, a.cols());
            for (std::size_t r = 0; r < attrs.count; ++r) {
                std::copy(a.values().begin(), a.values().end(), out.row_span(r).begin());
            }
            return out;
        }
        case OpKind::sparse_aggregate: {
            require_arity(kind, p.size(), 1);
            const Matrix& a = in(p, 0);
            const SparseRows* op = attrs.sparse.get();
            if (!op || op->cols != a.rows()) {
                throw DimensionError("sparse-aggregate: operator columns do not match input rows");
            }
            Matrix out(op->rows, a.cols());
            for (std::size_t r = 0; r < op->rows; ++r) {
                auto dst = out.row_span(r);
                for (std::size_t e = op->offsets[r]; e < op->offsets[r + 1]; ++e) {
                    const double coef = op->coefs[e];
                    auto src = a.row_span(op->indices[e]);
                    for (std::size_t c = 0; c < dst.size(); ++c) {
                        dst[c] += coef * src[c];
                    }
                }
            }
            return out;
        }
        case OpKind::straight_through: {
            require_arity(kind, p.size(), 2);
            require_same_shape(in(p, 0), in(p, 1), "straight-through");
            return attrs.relaxed ? in(p, 1) : in(p, 0);
        }
        }
        throw UsageError("unknown op kind " + std::to_string(static_cast<int>(kind)));
    }

    void accumulate(NodeId id, const Matrix& g) {
        TapeNode& target = nodes_[index_of(id)];
        if (target.requires_grad) {
            axpy(1.0, g, target.gradient);
        }
    }

    bool wants(NodeId id) const { return nodes_[index_of(id)].requires_grad; }
    Matrix& grad_of(NodeId id) { return nodes_[index_of(id)].gradient; }

    void propagate(const TapeNode& n) {
        const Matrix& g = n.gradient;
        const auto& p = n.parents;
        switch (n.kind) {
        case OpKind::leaf:
            return;
        case OpKind::matmul:
            if (wants(p[0])) accumulate(p[0], matmul_nt(g, in(p, 1)));
            if (wants(p[1])) accumulate(p[1], matmul_tn(in(p, 0), g));
            return;
        case OpKind::add:
            accumulate(p[0], g);
            accumulate(p[1], g);
            return;
        case OpKind::sub:
            accumulate(p[0], g);
            if (wants(p[1])) axpy(-1.0, g, grad_of(p[1]));
            return;
        case OpKind::mul: {
            for (std::size_t k = 0; k < 2; ++k) {
                if (!wants(p[k])) continue;
                const Matrix& other = in(p, 1 - k);
                Matrix& dst = grad_of(p[k]);
                for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * other[i];
            }
            return;
        }
        case OpKind::scale:
            if (wants(p[0])) axpy(n.attrs.scalar, g, grad_of(p[0]));
            return;
        case OpKind::concat_cols: {
            std::size_t offset = 0;
            for (NodeId id : p) {
                const std::size_t cols = value(id).cols();
                if (wants(id)) {
                    Matrix& dst = grad_of(id);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                        for (std::size_t c = 0; c < cols; ++c) dst(r, c) += g(r, offset + c);
                    }
                }
                offset += cols;
            }
            return;
        }
        case OpKind::relu: {
            if (!wants(p[0])) return;
            const Matrix& a = in(p, 0);
            Matrix& dst = grad_of(p[0]);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += a[i] > 0 ? g[i] : 0.0;
            return;
        }
        case OpKind::sigmoid: {
            if (!wants(p[0])) return;
            Matrix& dst = grad_of(p[0]);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
            return;
        }
        case OpKind::row_softmax: {
            if (!wants(p[0])) return;
            Matrix& dst = grad_of(p[0]);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                auto gr = g.row_span(r);
                auto vr = n.value.row_span(r);
                double dot = 0;
                for (std::size_t j = 0; j < gr.size(); ++j) dot += gr[j] * vr[j];
                for (std::size_t j = 0; j < gr.size(); ++j) dst(r, j) += vr[j] * (gr[j] - dot);
            }
            return;
        }
        case OpKind::mean_all:
        case OpKind::sum_all: {
            if (!wants(p[0])) return;
            Matrix& dst = grad_of(p[0]);
            const double share = n.kind == OpKind::mean_all ? g[0] / static_cast<double>(dst.size()) : g[0];
            for (double& v : dst.values()) v += share;
            return;
        }
        case OpKind::sum_rows: {
            if (!wants(p[0])) return;
            Matrix& dst = grad_of(p[0]);
            for (std::size_t r = 0; r < dst.rows(); ++r) {
                for (std::size_t c = 0; c < dst.cols(); ++c) dst(r, c) += g[c];
            }
            return;
        }
        case OpKind::l2_normalize: {
            if (!wants(p[0])) return;
            const Matrix& a = in(p, 0);
            const double norm = std::sqrt(squared_norm(a.values()));
            if (norm <= kNormFloor) return;
            double dot = 0;
            for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * n.value[i];
            Matrix& dst = grad_of(p[0]);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += (g[i] - n.value[i] * dot) / norm;
            return;
        }
        case OpKind::square: {
            if (!wants(p[0])) return;
            const Matrix& a = in(p, 0);
            Matrix& dst = grad_of(p[0]);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += 2.0 * a[i] * g[i];
            return;
        }
        case OpKind::huber: {
            if (!wants(p[0])) return;
            const Matrix& a = in(p, 0);
            Matrix& dst = grad_of(p[0]);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * huber_slope(a[i], n.attrs.scalar);
            return;
        }
        case OpKind::cosine_distance: {
            const Matrix& a = in(p, 0);
            const Matrix& b = in(p, 1);
            const double na = std::sqrt(squared_norm(a.values()));
            const double nb = std::sqrt(squared_norm(b.values()));
            if (na <= kNormFloor || nb <= kNormFloor) return;
            double cos = 0;
            for (std::size_t i = 0; i < a.size(); ++i) cos += (a[i] / na) * (b[i] / nb);
            if (wants(p[0])) {
                Matrix& dst = grad_of(p[0]);
                for (std::size_t i = 0; i < a.size(); ++i) dst[i] += -2.0 * g[0] * (b[i] / nb - cos * a[i] / na) / na;
            }
            if (wants(p[1])) {
                Matrix& dst = grad_of(p[1]);
                for (std::size_t i = 0; i < b.size(); ++i) dst[i] += -2.0 * g[0] * (a[i] / na - cos * b[i] / nb) / nb;
            }
            return;
        }
        case OpKind::mse: {
            const Matrix& a = in(p, 0);
            const Matrix& b = in(p, 1);
            const double factor = 2.0 * g[0] / static_cast<double>(a.size());
            if (wants(p[0])) {
                Matrix& dst = grad_of(p[0]);
                for (std::size_t i = 0; i < a.size(); ++i) dst[i] += factor * (a[i] - b[i]);
            }
            if (wants(p[1])) {
                Matrix& dst = grad_of(p[1]);
                for (std::size_t i = 0; i < a.size(); ++i) dst[i] -= factor * (a[i] - b[i]);
            }
            return;
        }
        case OpKind::transpose:
            if (wants(p[0])) accumulate(p[0], adapert::transpose(g));
            return;
        case OpKind::log_floor: {
            if (!wants(p[0])) return;
            const Matrix& a = in(p, 0);
            Matrix& dst = grad_of(p[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (a[i] > n.attrs.scalar) dst[i] += g[i] / a[i];
            }
            return;
        }
        case OpKind::repeat_rows: {
            if (!wants(p[0])) return;
            Matrix& dst = grad_of(p[0]);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += g(r, c);
            }
            return;
        }
        case OpKind::sparse_aggregate: {
            if (!wants(p[0])) return;
            const SparseRows& op = *n.attrs.sparse;
            Matrix& dst = grad_of(p[0]);
            for (std::size_t r = 0; r < op.rows; ++r) {
                auto gr = g.row_span(r);
                for (std::size_t e = op.offsets[r]; e < op.offsets[r + 1]; ++e) {
                    auto d = dst.row_span(op.indices[e]);
                    for (std::size_t c = 0; c < gr.size(); ++c) d[c] += op.coefs[e] * gr[c];
                }
            }
            return;
        }
        case OpKind::straight_through:
            accumulate(p[1], g);
            return;
        }
    }
};

} // namespace adapert::ad

#endif
