#ifndef ADAPERT_EMBEDDINGS_HPP
#define ADAPERT_EMBEDDINGS_HPP

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "matrix.hpp"
#include "random.hpp"
#include "text.hpp"

namespace adapert {

/// Precomputed semantic vectors, one row per vocabulary gene.
struct SemanticEmbeddings {
    Matrix table;
    /// Number of rows that came from the input file rather than the fallback.
    std::size_t from_file = 0;

    std::size_t dim() const noexcept { return table.cols(); }
    std::span<const double> of(std::size_t gene) const { return table.row_span(gene); }
};

/// Deterministic pseudo-random unit vector seeded by the gene name.
inline std::vector<double> hash_embedding(std::string_view name, std::size_t dim) {
    if (dim == 0) {
        throw UsageError("hash_embedding: dimension must be positive");
    }
    Rng rng(hash_name(name));
    std::vector<double> v(dim);
    double norm = 0;
    do {
        for (double& x : v) x = rng.normal();
        norm = std::sqrt(squared_norm(v));
    } while (norm <= 1e-12);
    for (double& x : v) x /= norm;
    return v;
}

inline SemanticEmbeddings fallback_embeddings(const GeneVocab& vocab, std::size_t dim) {
    SemanticEmbeddings out{Matrix(vocab.size(), dim), 0};
    for (std::size_t g = 0; g < vocab.size(); ++g) {
        auto v = hash_embedding(vocab.name(g), dim);
        std::copy(v.begin(), v.end(), out.table.row_span(g).begin());
    }
    return out;
}

/**
 * Read `gene,v0,...,v{d-1}` rows. Genes missing from the file get
 * `hash_embedding`; rows for genes outside the vocabulary are ignored.
 * `fallback_dim` is used only when the file has no data rows.
 */
inline SemanticEmbeddings load_embeddings(std::istream& input, const GeneVocab& vocab, std::size_t fallback_dim) {
    std::vector<std::pair<std::size_t, std::vector<double>>> rows;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(input, line)) {
        ++line_no;
        auto view = detail::trim(line);
        if (view.empty() || view.front() == '#') continue;
        auto fields = detail::split(view, ',');
        if (line_no == 1 && detail::trim(fields[0]) == "gene") continue;
        if (fields.size() < 2) {
            throw ParseError("embedding CSV: expected gene followed by values", line_no);
        }
        std::vector<double> v(fields.size() - 1);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!detail::parse_double(fields[i + 1], v[i]) || !std::isfinite(v[i])) {
                throw ParseError("embedding CSV: bad value '" + std::string(fields[i + 1]) + "'", line_no);
            }
        }
        if (dim == 0) dim = v.size();
        if (v.size() != dim) {
            throw DataError("embedding CSV: inconsistent vector length at line " + std::to_string(line_no));
        }
        if (auto gene = vocab.find(detail::trim(fields[0]))) {
            rows.emplace_back(*gene, std::move(v));
        }
    }
    if (dim == 0) dim = fallback_dim;
    SemanticEmbeddings out = fallback_embeddings(vocab, dim);
    std::vector<bool> seen(vocab.size(), false);
    for (auto& [gene, v] : rows) {
        std::copy(v.begin(), v.end(), out.table.row_span(gene).begin());
        if (!seen[gene]) ++out.from_file;
        seen[gene] = true;
    }
    return out;
}

inline SemanticEmbeddings load_embeddings(const std::string& path, const GeneVocab& vocab, std::size_t fallback_dim) {
    std::ifstream input(path);
    if (!input) {
        throw DataError("cannot open embedding file '" + path + "'");
    }
    return load_embeddings(input, vocab, fallback_dim);
}

inline void save_embeddings(std::ostream& out, const SemanticEmbeddings& emb, const GeneVocab& vocab) {
    out << "gene";
    for (std::size_t j = 0; j < emb.dim(); ++j) out << ",v" << j;
    out << '\n';
    for (std::size_t g = 0; g < vocab.size(); ++g) {
        out << vocab.name(g);
        for (double v : emb.of(g)) out << ',' << detail::format_double(v);
        out << '\n';
    }
}

} // namespace adapert

#endif
