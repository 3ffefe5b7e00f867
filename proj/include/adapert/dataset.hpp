#ifndef ADAPERT_DATASET_HPP
#define ADAPERT_DATASET_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "graph.hpp"
#include "matrix.hpp"
#include "random.hpp"
#include "text.hpp"

/**
 * @file dataset.hpp
 * @brief Control and perturbed expression blocks over a shared gene vocabulary.
 */

namespace adapert {

/**
 * Log1p-normalized expression: a control block plus one sample block per
 * perturbation, keyed by the vocabulary index of the perturbed gene.
 *
 * Reads of perturbation blocks are counted so tests can prove that a code
 * path never touched a held-out perturbation.
 */
class PerturbationDataset {
public:
    PerturbationDataset() = default;

    PerturbationDataset(GeneVocab vocab, Matrix control, std::vector<std::pair<std::size_t, Matrix>> blocks)
        : vocab_(std::move(vocab)), control_(std::move(control)) {
        const std::size_t n = vocab_.size();
        check_block(control_, "control");
        for (auto& [gene, block] : blocks) {
            if (gene >= n) {
                throw DataError("perturbation gene index out of range");
            }
            if (position_.count(gene)) {
                throw DataError("duplicate perturbation block for '" + vocab_.name(gene) + "'");
            }
            check_block(block, vocab_.name(gene));
            position_.emplace(gene, genes_.size());
            genes_.push_back(gene);
            blocks_.push_back(std::move(block));
        }
        reads_.assign(genes_.size(), 0);
    }

    const GeneVocab& vocab() const noexcept { return vocab_; }
    std::size_t gene_count() const noexcept { return vocab_.size(); }
    const Matrix& control() const noexcept { return control_; }

    /// Perturbed gene ids in dataset order.
    std::span<const std::size_t> perturbations() const noexcept { return genes_; }
    std::size_t perturbation_count() const noexcept { return genes_.size(); }
    bool has_perturbation(std::size_t gene) const { return position_.count(gene) > 0; }

    const Matrix& block(std::size_t gene) const {
        auto it = position_.find(gene);
        if (it == position_.end()) {
            throw UsageError("no perturbation block for gene " + std::to_string(gene));
        }
        ++reads_[it->second];
        return blocks_[it->second];
    }

    std::size_t block_reads(std::size_t gene) const { return reads_.at(position_.at(gene)); }
    void reset_block_reads() const { std::fill(reads_.begin(), reads_.end(), 0); }

private:
    GeneVocab vocab_;
    Matrix control_;
    std::vector<std::size_t> genes_;
    std::vector<Matrix> blocks_;
    std::map<std::size_t, std::size_t> position_;
    mutable std::vector<std::size_t> reads_;

    void check_block(const Matrix& block, const std::string& label) const {
        if (block.cols() != vocab_.size()) {
            throw DataError("block '" + label + "' has " + std::to_string(block.cols()) + " genes, expected " +
                            std::to_string(vocab_.size()));
        }
        if (block.rows() < 2) {
            throw DataError("block '" + label + "' needs at least 2 samples");
        }
        for (double v : block.values()) {
            if (!std::isfinite(v) || v < 0) {
                throw DataError("block '" + label + "' contains a negative or non-finite value");
            }
        }
    }
};

/**
 * Parse `sample_id,perturbation,<gene1>,...` CSV. Rows labelled `control`
 * form the control block; every other label must name a gene column.
 */
inline PerturbationDataset load_expression(std::istream& input) {
    std::string line;
    if (!std::getline(input, line)) {
        throw ParseError("expression CSV: missing header", 1);
    }
    auto header = detail::split(detail::trim(line), ',');
    if (header.size() < 3 || detail::trim(header[0]) != "sample_id" || detail::trim(header[1]) != "perturbation") {
        throw ParseError("expression CSV: header must start with sample_id,perturbation", 1);
    }
    std::vector<std::string> names;
    for (std::size_t i = 2; i < header.size(); ++i) names.emplace_back(detail::trim(header[i]));
    GeneVocab vocab;
    try {
        vocab = GeneVocab(names);
    } catch (const DataError& e) {
        throw ParseError(std::string("expression CSV: ") + e.what(), 1);
    }
    const std::size_t n = names.size();

    std::vector<double> control;
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> grouped;
    std::size_t line_no = 1;
    while (std::getline(input, line)) {
        ++line_no;
        auto view = detail::trim(line);
        if (view.empty()) {
            continue;
        }
        auto fields = detail::split(view, ',');
        if (fields.size() != n + 2) {
            throw ParseError("expression CSV: expected " + std::to_string(n + 2) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        std::string label(detail::trim(fields[1]));
        std::vector<double>* target = &control;
        if (label != "control") {
            auto [it, inserted] = grouped.try_emplace(label);
            if (inserted) order.push_back(label);
            target = &it->second;
        }
        for (std::size_t i = 0; i < n; ++i) {
            double v = 0;
            if (!detail::parse_double(fields[i + 2], v)) {
                throw ParseError("expression CSV: bad number '" + std::string(fields[i + 2]) + "'", line_no);
            }
            target->push_back(v);
        }
    }
    if (control.empty()) {
        throw DataError("expression CSV: no control rows");
    }
    std::vector<std::pair<std::size_t, Matrix>> blocks;
    for (const auto& label : order) {
        auto gene = vocab.find(label);
        if (!gene) {
            throw DataError("expression CSV: perturbation '" + label + "' is not a gene column");
        }
        auto& values = grouped[label];
        const std::size_t rows = values.size() / n;
        blocks.emplace_back(*gene, Matrix(rows, n, std::move(values)));
    }
    const std::size_t control_rows = control.size() / n;
    return PerturbationDataset(std::move(vocab), Matrix(control_rows, n, std::move(control)), std::move(blocks));
}

inline PerturbationDataset load_expression(const std::string& path) {
    std::ifstream input(path);
    if (!input) {
        throw DataError("cannot open expression file '" + path + "'");
    }
    return load_expression(input);
}

inline void save_expression(std::ostream& out, const PerturbationDataset& data) {
    out << "sample_id,perturbation";
    for (const auto& name : data.vocab().names()) out << ',' << name;
    out << '\n';
    auto write_block = [&](const Matrix& block, const std::string& label) {
        for (std::size_t r = 0; r < block.rows(); ++r) {
            out << label << '_' << r << ',' << label;
            for (double v : block.row_span(r)) out << ',' << detail::format_double(v);
            out << '\n';
        }
    };
    write_block(data.control(), "control");
    for (std::size_t gene : data.perturbations()) {
        write_block(data.block(gene), data.vocab().name(gene));
    }
}

inline std::vector<double> column_means(const Matrix& block) {
    std::vector<double> out(block.cols(), 0.0);
    for (std::size_t r = 0; r < block.rows(); ++r) {
        auto row = block.row_span(r);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += row[c];
    }
    for (double& v : out) v /= static_cast<double>(block.rows());
    return out;
}

/// Mean profiles: control and one per requested perturbation.
struct Pseudobulk {
    std::vector<double> control;
    std::map<std::size_t, std::vector<double>> perturbed;
};

inline Pseudobulk pseudobulk(const PerturbationDataset& data, std::span<const std::size_t> genes) {
    Pseudobulk out;
    out.control = column_means(data.control());
    for (std::size_t gene : genes) {
        out.perturbed.emplace(gene, column_means(data.block(gene)));
    }
    return out;
}

inline Pseudobulk pseudobulk(const PerturbationDataset& data) { return pseudobulk(data, data.perturbations()); }

/// Disjoint perturbation sets; the control block is shared by all of them.
struct SplitSpec {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
};

/**
 * Seeded shuffle of the perturbations followed by floor-then-distribute sizing:
 * each split gets floor(f * P); leftovers go to the largest fractional parts
 * (earlier split on ties). A split with a nonzero fraction never ends up empty.
 */
inline SplitSpec split_by_perturbation(const PerturbationDataset& data, const std::array<double, 3>& fractions,
                                       std::uint64_t seed) {
    double total = 0;
    std::size_t nonzero = 0;
    for (double f : fractions) {
        if (f < 0) throw UsageError("split fractions must be nonnegative");
        total += f;
        nonzero += f > 0 ? 1 : 0;
    }
    if (std::abs(total - 1.0) > 1e-9 || nonzero == 0) {
        throw UsageError("split fractions must sum to 1");
    }
    const std::size_t count = data.perturbation_count();
    if (count < nonzero) {
        throw UsageError("split: " + std::to_string(count) + " perturbations cannot fill " + std::to_string(nonzero) +
                         " nonempty splits");
    }
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = fractions[i] * static_cast<double>(count);
        sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainders[i] = exact - static_cast<double>(sizes[i]);
        assigned += sizes[i];
    }
    while (assigned < count) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < 3; ++i) {
            if (remainders[i] > remainders[best]) best = i;
        }
        ++sizes[best];
        remainders[best] = -1;
        ++assigned;
    }
    for (std::size_t i = 0; i < 3; ++i) {
        if (fractions[i] > 0 && sizes[i] == 0) {
            std::size_t donor = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
            --sizes[donor];
            ++sizes[i];
        }
    }
    std::vector<std::size_t> genes(data.perturbations().begin(), data.perturbations().end());
    Rng rng(derive_seed(seed, 0x5b117));
    rng.shuffle(genes);
    SplitSpec out;
    out.seed = seed;
    auto it = genes.begin();
    out.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
    it += static_cast<std::ptrdiff_t>(sizes[0]);
    out.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
    it += static_cast<std::ptrdiff_t>(sizes[1]);
    out.test.assign(it, genes.end());
    return out;
}

} // namespace adapert

#endif
