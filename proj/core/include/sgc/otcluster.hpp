#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sgc/autodiff.hpp"
#include "sgc/dense_matrix.hpp"

namespace sgc {

struct SinkhornConfig {
    double lambda = 50.0;  // entropy trade-off, > 0
    std::size_t max_iters = 500;
    double marginal_tol = 1e-6;
};

struct SinkhornResult {
    DenseMatrix plan;  // N x C, rows sum to 1, columns to N*pi
    bool converged = false;
    std::size_t iterations = 0;
    double max_violation = 0.0;
};

// Row-stochastic soft assignment q_ij proportional to 1 / (1 + ||z_i - c_j||^2).
// Differentiable w.r.t. both Z and centers. Requires C >= 2.
ad::Var soft_assign(const ad::Var& z, const ad::Var& centers);

// Cluster mass from hard argmax of Q rows (ties toward the lowest index),
// floored at 1/(10C) and renormalized so every entry stays positive.
std::vector<double> estimate_proportions(const DenseMatrix& q);

// Scales Q^lambda to row sums 1 and column sums N*pi by alternating diagonal
// updates. Q is floored at 1e-12 and each row is shifted by its maximum before
// powering, which changes nothing about the fixed point but keeps exp in range.
// Returns the best plan seen with its violation when max_iters runs out.
SinkhornResult sinkhorn(const DenseMatrix& q, const std::vector<double>& proportions,
                        const SinkhornConfig& cfg);

// KL(P || Q) / N with P fixed; differentiable w.r.t. Q only. 0*log0 := 0.
ad::Var kl_loss(const DenseMatrix& plan, const ad::Var& q);

struct KmeansResult {
    DenseMatrix centers;  // C x d
    std::vector<int> labels;
    double inertia = 0.0;
    // Inertia after every Lloyd assignment step, non-increasing.
    std::vector<double> inertia_history;
};

// Greedy distance-weighted seeding then Lloyd iterations until the largest
// center shift drops below 1e-8 or 300 rounds. Empty clusters take over the
// point farthest from its current center. Deterministic given seed.
KmeansResult kmeans(const DenseMatrix& z, std::size_t c, std::uint64_t seed,
                    std::size_t max_iters = 300);

}  // namespace sgc
