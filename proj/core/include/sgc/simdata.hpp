#pragma once

#include <cstddef>
#include <cstdint>

#include "sgc/io.hpp"

namespace sgc {

struct SimConfig {
    std::size_t n_cells = 3000;
    std::size_t n_genes = 2500;
    std::size_t n_clusters = 6;
    bool balanced = true;
    // Probability that any observed count is zeroed out (technical dropout).
    double dropout_rate = 0.0;
    // Fraction of genes differentially expressed per cluster.
    double de_fraction = 0.1;
    // Marker genes get their mean scaled by 2^(+-de_log_fold).
    double de_log_fold = 1.0;
    double base_mean = 2.0;
    // NB dispersion; variance = m + m^2 / dispersion.
    double dispersion = 2.0;
    std::uint64_t seed = 0;
};

// NB counts via gamma-Poisson mixing, then independent zero injection.
// Deterministic given cfg.seed. Labels attached; cells ordered by cluster.
// Unbalanced cluster sizes follow proportions proportional to (1, 1/2, ..., 1/k).
ExpressionMatrix generate(const SimConfig& cfg);

}  // namespace sgc
