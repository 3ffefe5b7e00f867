#ifndef ADAPERT_GRAPH_HPP
#define ADAPERT_GRAPH_HPP

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "error.hpp"
#include "text.hpp"

/**
 * @file graph.hpp
 * @brief Gene vocabulary, undirected weighted interaction graph, top-k filtering and hop analyses.
 */

namespace adapert {

/// Ordered gene names with the inverse name -> index map.
class GeneVocab {
public:
    GeneVocab() = default;

    explicit GeneVocab(std::vector<std::string> names) : names_(std::move(names)) {
        index_.reserve(names_.size());
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (!index_.emplace(names_[i], i).second) {
                throw DataError("duplicate gene name '" + names_[i] + "'");
            }
        }
    }

    std::size_t size() const noexcept { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    std::optional<std::size_t> find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    std::size_t at(std::string_view name) const {
        auto found = find(name);
        if (!found) {
            throw UsageError("unknown gene '" + std::string(name) + "'");
        }
        return *found;
    }

    bool operator==(const GeneVocab& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct WeightedEdge {
    std::size_t u = 0;
    std::size_t v = 0;
    double weight = 0;
};

/**
 * Undirected graph in compressed sparse row form.
 *
 * Every edge is stored in both endpoint lists with equal weight; lists are
 * sorted by neighbor index and contain neither duplicates nor self-loops.
 */
class KnowledgeGraph {
public:
    KnowledgeGraph() : offsets_{0} {}

    /// Build from an edge list. Self-loops are dropped; repeated pairs keep the largest weight.
    KnowledgeGraph(std::size_t node_count, std::span<const WeightedEdge> edges) : node_count_(node_count) {
        std::map<std::pair<std::size_t, std::size_t>, double> unique;
        for (const auto& e : edges) {
            if (e.u >= node_count || e.v >= node_count) {
                throw UsageError("edge endpoint out of range");
            }
            if (e.weight < 0) {
                throw DataError("negative edge weight");
            }
            if (e.u == e.v) {
                continue;
            }
            auto key = std::minmax(e.u, e.v);
            auto [it, inserted] = unique.emplace(key, e.weight);
            if (!inserted) {
                it->second = std::max(it->second, e.weight);
            }
        }
        std::vector<std::vector<std::pair<std::size_t, double>>> lists(node_count);
        for (const auto& [key, w] : unique) {
            lists[key.first].emplace_back(key.second, w);
            lists[key.second].emplace_back(key.first, w);
        }
        offsets_.assign(1, 0);
        for (auto& list : lists) {
            std::sort(list.begin(), list.end());
            for (const auto& [v, w] : list) {
                neighbors_.push_back(v);
                weights_.push_back(w);
            }
            offsets_.push_back(neighbors_.size());
        }
    }

    std::size_t node_count() const noexcept { return node_count_; }
    std::size_t edge_count() const noexcept { return neighbors_.size() / 2; }
    std::size_t degree(std::size_t u) const { return offsets_.at(u + 1) - offsets_.at(u); }

    std::span<const std::size_t> neighbors(std::size_t u) const {
        return {neighbors_.data() + offsets_.at(u), degree(u)};
    }
    std::span<const double> weights(std::size_t u) const { return {weights_.data() + offsets_.at(u), degree(u)}; }

    bool has_edge(std::size_t u, std::size_t v) const {
        auto n = neighbors(u);
        return std::binary_search(n.begin(), n.end(), v);
    }

    /// Each undirected edge once, with u < v, in lexicographic order.
    std::vector<WeightedEdge> edges() const {
        std::vector<WeightedEdge> out;
        for (std::size_t u = 0; u < node_count_; ++u) {
            auto n = neighbors(u);
            auto w = weights(u);
            for (std::size_t k = 0; k < n.size(); ++k) {
                if (u < n[k]) {
                    out.push_back({u, n[k], w[k]});
                }
            }
        }
        return out;
    }

    bool operator==(const KnowledgeGraph& other) const = default;

private:
    std::size_t node_count_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> neighbors_;
    std::vector<double> weights_;
};

struct EdgeListLoad {
    KnowledgeGraph graph;
    std::size_t dropped = 0;
};


/**
 * Read a `geneA<TAB>geneB<TAB>weight` edge list restricted to `vocab`.
 * Edges touching genes outside the vocabulary are dropped and counted.
 */
inline EdgeListLoad load_edge_list(std::istream& input, const GeneVocab& vocab) {
    std::vector<WeightedEdge> edges;
    std::size_t dropped = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(input, line)) {
        ++line_no;
        std::string_view view = detail::trim(line);
        if (view.empty() || view.front() == '#') {
            continue;
        }
        auto fields = detail::split(view, '\t');
        if (fields.size() != 3) {
            throw ParseError("edge list: expected 3 tab-separated fields, got " + std::to_string(fields.size()),
                             line_no);
        }
        double weight = 0;
        if (!detail::parse_double(fields[2], weight)) {
            throw ParseError("edge list: bad weight '" + std::string(fields[2]) + "'", line_no);
        }
        if (weight < 0) {
            throw DataError("edge list: negative weight at line " + std::to_string(line_no));
        }
        auto a = vocab.find(detail::trim(fields[0]));
        auto b = vocab.find(detail::trim(fields[1]));
        if (!a || !b) {
            ++dropped;
            continue;
        }
        edges.push_back({*a, *b, weight});
    }
    return {KnowledgeGraph(vocab.size(), edges), dropped};
}

inline EdgeListLoad load_edge_list(const std::string& path, const GeneVocab& vocab) {
    std::ifstream input(path);
    if (!input) {
        throw DataError("cannot open edge list '" + path + "'");
    }
    return load_edge_list(input, vocab);
}

/// Gene names in order of first appearance in an edge list, for graphs without an expression file.
inline GeneVocab edge_list_vocab(std::istream& input) {
    std::vector<std::string> names;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(input, line)) {
        ++line_no;
        std::string_view view = detail::trim(line);
        if (view.empty() || view.front() == '#') {
            continue;
        }
        auto fields = detail::split(view, '\t');
        if (fields.size() != 3) {
            throw ParseError("edge list: expected 3 tab-separated fields, got " + std::to_string(fields.size()),
                             line_no);
        }
        for (int i = 0; i < 2; ++i) {
            std::string name(detail::trim(fields[i]));
            if (seen.emplace(name, names.size()).second) names.push_back(std::move(name));
        }
    }
    return GeneVocab(std::move(names));
}

inline void save_edge_list(std::ostream& out, const KnowledgeGraph& graph, const GeneVocab& vocab) {
    for (const auto& e : graph.edges()) {
        out << vocab.name(e.u) << '\t' << vocab.name(e.v) << '\t' << detail::format_double(e.weight) << '\n';
    }
}

enum class TopkMode { union_of_nominations, mutual };

/// The (at most k) neighbors each node nominates: highest weight first, ties to the lower index.
inline std::vector<std::vector<std::size_t>> topk_nominations(const KnowledgeGraph& graph, std::size_t k) {
    std::vector<std::vector<std::size_t>> out(graph.node_count());
    for (std::size_t u = 0; u < graph.node_count(); ++u) {
        auto n = graph.neighbors(u);
        auto w = graph.weights(u);
        std::vector<std::size_t> order(n.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (w[a] != w[b]) return w[a] > w[b];
            return n[a] < n[b];
        });
        order.resize(std::min(k, order.size()));
        for (std::size_t i : order) out[u].push_back(n[i]);
        std::sort(out[u].begin(), out[u].end());
    }
    return out;
}

/**
 * Keep each node's k highest-confidence edges.
 * Union mode keeps an edge nominated by either endpoint; mutual mode requires both.
 */
inline KnowledgeGraph topk_filter(const KnowledgeGraph& graph, std::size_t k,
                                  TopkMode mode = TopkMode::union_of_nominations) {
    if (k < 1) {
        throw UsageError("topk_filter: k must be at least 1");
    }
    auto nominated = topk_nominations(graph, k);
    auto picks = [&](std::size_t u, std::size_t v) {
        return std::binary_search(nominated[u].begin(), nominated[u].end(), v);
    };
    std::vector<WeightedEdge> kept;
    for (const auto& e : graph.edges()) {
        const bool by_u = picks(e.u, e.v);
        const bool by_v = picks(e.v, e.u);
        if (mode == TopkMode::mutual ? (by_u && by_v) : (by_u || by_v)) {
            kept.push_back(e);
        }
    }
    return KnowledgeGraph(graph.node_count(), kept);
}

struct DegreeStats {
    std::size_t nodes = 0;
    std::size_t edges = 0;
    double mean_degree = 0;
    double median_degree = 0;
    std::size_t max_degree = 0;
};

/// Each edge counts once toward both endpoints. Even-sized medians take the lower middle value.
inline DegreeStats degree_stats(const KnowledgeGraph& graph) {
    DegreeStats out;
    out.nodes = graph.node_count();
    out.edges = graph.edge_count();
    if (out.nodes == 0) {
        return out;
    }
    std::vector<std::size_t> degrees(out.nodes);
    for (std::size_t u = 0; u < out.nodes; ++u) degrees[u] = graph.degree(u);
    std::sort(degrees.begin(), degrees.end());
    out.mean_degree = 2.0 * static_cast<double>(out.edges) / static_cast<double>(out.nodes);
    out.median_degree = static_cast<double>(degrees[(out.nodes - 1) / 2]);
    out.max_degree = degrees.back();
    return out;
}

inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

/// Breadth-first hop counts from `source`; `kUnreachable` marks other components.
inline std::vector<std::size_t> hop_distances(const KnowledgeGraph& graph, std::size_t source) {
    if (source >= graph.node_count()) {
        throw UsageError("hop_distances: unknown source node " + std::to_string(source));
    }
    std::vector<std::size_t> dist(graph.node_count(), kUnreachable);
    std::queue<std::size_t> frontier;
    dist[source] = 0;
    frontier.push(source);
    while (!frontier.empty()) {
        std::size_t u = frontier.front();
        frontier.pop();
        for (std::size_t v : graph.neighbors(u)) {
            if (dist[v] == kUnreachable) {
                dist[v] = dist[u] + 1;
                frontier.push(v);
            }
        }
    }
    return dist;
}

/**
 * Fraction of `deg_set` within h hops of `pert_gene`, for h = 1..max_hops.
 * Element h-1 of the result holds the coverage at h hops.
 */
inline std::vector<double> deg_coverage(const KnowledgeGraph& graph, std::size_t pert_gene,
                                        std::span<const std::size_t> deg_set, std::size_t max_hops) {
    if (deg_set.empty()) {
        throw UsageError("deg_coverage: empty DEG set");
    }
    auto dist = hop_distances(graph, pert_gene);
    std::vector<double> out(max_hops, 0.0);
    for (std::size_t h = 1; h <= max_hops; ++h) {
        std::size_t hit = 0;
        for (std::size_t g : deg_set) {
            if (g >= dist.size()) {
                throw UsageError("deg_coverage: gene index out of range");
            }
            hit += dist[g] <= h ? 1 : 0;
        }
        out[h - 1] = static_cast<double>(hit) / static_cast<double>(deg_set.size());
    }
    return out;
}

} // namespace adapert

#endif
