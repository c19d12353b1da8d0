#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sgc {

// All three take (truth, pred) of equal length with nonnegative labels and are
// invariant to relabeling either side.

// Contingency-matrix maximum-weight matching (augmenting-path assignment
// solver), matched count / N.
double accuracy_hungarian(const std::vector<int>& truth, const std::vector<int>& pred);

// I(T;P) normalized by the arithmetic mean of the entropies. Two identical
// single-cluster partitions score 1, zero mutual information scores 0.
double nmi(const std::vector<int>& truth, const std::vector<int>& pred);

// Pair-counting index adjusted for chance. The numerator and denominator are
// assembled from integer pair counts and divided once, so textbook rational
// values (1, -0.5, ...) come out exact. A zero denominator means both
// partitions are trivial: 1 on exact agreement, else 0.
double ari(const std::vector<int>& truth, const std::vector<int>& pred);

struct MetricsReport {
    double acc = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
    std::size_t n_cells = 0;
    std::size_t n_clusters_true = 0;
    std::size_t n_clusters_pred = 0;
};

MetricsReport evaluate(const std::vector<int>& truth, const std::vector<int>& pred);

// Flat JSON object with the six report fields.
std::string to_json(const MetricsReport& report);

}  // namespace sgc
