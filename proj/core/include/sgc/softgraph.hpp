#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sgc/autodiff.hpp"
#include "sgc/dense_matrix.hpp"

namespace sgc {

// Two dense similarity channels over the same cells plus their normalized
// Laplacians. Built once from the preprocessed matrix and frozen.
struct SoftGraphPair {
    DenseMatrix a1;  // inner-product channel X X^T
    DenseMatrix a2;  // absolute-cosine channel |C| |C|^T
    std::vector<double> d1;
    std::vector<double> d2;
    DenseMatrix l1;
    DenseMatrix l2;
};

struct NCutConfig {
    double alpha = 0.7;  // channel mix, in [0,1]
    double beta = 15.0;  // orthogonality weight, >= 0
};

DenseMatrix build_adjacency_feature(const DenseMatrix& x);
DenseMatrix build_adjacency_cosine(const DenseMatrix& x);
// L = I - D^{-1/2} A D^{-1/2}; requires symmetric nonnegative A with positive
// row sums.
DenseMatrix normalized_laplacian(const DenseMatrix& a);

// Both channels plus Laplacians. max_cells caps the dense N x N memory
// footprint; exceeding it is an error, not a silent truncation.
SoftGraphPair build_soft_graphs(const DenseMatrix& x, std::size_t max_cells = 20000);

// alpha L1 + (1-alpha) L2 as a plain matrix; trainers hoist this out of the
// epoch loop.
DenseMatrix mixed_laplacian(const SoftGraphPair& pair, double alpha);

// Tr(Z^T (alpha L1 + (1-alpha) L2) Z) + beta * ||Z^T Z - I||_F^2
ad::Var ncut_loss(const ad::Var& z, const SoftGraphPair& pair, const NCutConfig& cfg);
// Same loss over a prebuilt mixed Laplacian.
ad::Var ncut_loss_mixed(const ad::Var& z, const ad::Var& mixed, double beta);

// Debug dump of A1/A2/L1/L2 as dense CSV files into a directory.
void dump_graphs(const SoftGraphPair& pair, const std::string& dir);

}  // namespace sgc
