#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sgc/dense_matrix.hpp"

namespace sgc {

// Raw cells x genes count matrix with identifiers and optional truth labels.
struct ExpressionMatrix {
    DenseMatrix counts;
    std::vector<std::string> gene_ids;
    std::vector<std::string> cell_ids;
    std::optional<std::vector<int>> labels;
};

enum class MatrixFormat { DenseCsv, SparseTriplet };

enum class GeneSelection { Expression, Variance };

struct PreprocessConfig {
    std::size_t min_cells_per_gene = 3;
    // 0 keeps every gene that survives filtering.
    std::size_t top_genes = 0;
    double normalize_target = 1e4;
    bool log_transform = true;
    GeneSelection selection = GeneSelection::Expression;
};

struct PreprocessResult {
    DenseMatrix x;
    std::vector<double> size_factors;
    // Indices into the raw gene axis, strictly increasing.
    std::vector<std::size_t> kept_genes;
    std::vector<std::string> gene_ids;
    std::vector<std::string> cell_ids;
};

MatrixFormat parse_format(const std::string& name);

// Dense CSV: one row per cell; a leading header row and a leading id column
// are auto-detected by a non-numeric first token. Missing identifiers are
// synthesized as cell_<i> / gene_<j>.
// Sparse triplet: header "rows cols nnz", then nnz lines "row col value" with
// 1-based indices; duplicate coordinates accumulate.
ExpressionMatrix load_matrix(const std::string& path, MatrixFormat format);

// One integer label per line; size checked against expected_cells when nonzero.
std::vector<int> load_labels(const std::string& path, std::size_t expected_cells = 0);

// Gene filter, per-cell library-size normalization, log1p, optional top-gene
// restriction. Size factors come from raw totals before any scaling.
PreprocessResult preprocess(const ExpressionMatrix& raw, const PreprocessConfig& cfg);

// Writers used by the simulator and the CLI; every write goes through a
// temp-file + rename so partial outputs never appear.
void write_dense_csv(const std::string& path, const DenseMatrix& m,
                     const std::vector<std::string>& gene_ids = {},
                     const std::vector<std::string>& cell_ids = {});
void write_labels(const std::string& path, const std::vector<int>& labels);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace sgc
