#include "sgc/simdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sgc/errors.hpp"

namespace sgc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void validate(const SimConfig& cfg) {
    if (cfg.n_clusters < 2) throw ValueError("simdata: n_clusters must be at least 2");
    if (cfg.n_cells < cfg.n_clusters) throw ValueError("simdata: n_cells must be at least n_clusters");
    if (cfg.n_genes == 0) throw ValueError("simdata: n_genes must be positive");
    if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) throw ValueError("simdata: dropout_rate must lie in [0,1)");
    if (!(cfg.de_fraction >= 0.0 && cfg.de_fraction <= 1.0)) throw ValueError("simdata: de_fraction must lie in [0,1]");
    if (!(cfg.base_mean > 0.0)) throw ValueError("simdata: base_mean must be positive");
    if (!(cfg.dispersion > 0.0)) throw ValueError("simdata: dispersion must be positive");
}

std::vector<std::size_t> cluster_sizes(const SimConfig& cfg) {
    const std::size_t k = cfg.n_clusters;
    const std::size_t n = cfg.n_cells;
    std::vector<std::size_t> sizes(k, 0);
    if (cfg.balanced) {
        const std::size_t base = n / k;
        const std::size_t rem = n % k;
        for (std::size_t c = 0; c < k; ++c) sizes[c] = base + (c < rem ? 1 : 0);
        return sizes;
    }
    // Skewed profile proportional to (1, 1/2, ..., 1/k), largest remainders
    // settle the rounding, every cluster keeps at least one cell.
    std::vector<double> weights(k);
    for (std::size_t c = 0; c < k; ++c) weights[c] = 1.0 / static_cast<double>(c + 1);
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<double> frac(k);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const double exact = static_cast<double>(n) * weights[c] / wsum;
        sizes[c] = static_cast<std::size_t>(exact);
        frac[c] = exact - static_cast<double>(sizes[c]);
        assigned += sizes[c];
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (frac[a] != frac[b]) return frac[a] > frac[b];
        return a < b;
    });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % k]];
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] == 0) {
            auto big = std::max_element(sizes.begin(), sizes.end());
            --*big;
            sizes[c] = 1;
        }
    }
    return sizes;
}

}  // namespace

ExpressionMatrix generate(const SimConfig& cfg) {
    validate(cfg);
    const std::size_t k = cfg.n_clusters;
    const std::size_t g = cfg.n_genes;
    const std::vector<std::size_t> sizes = cluster_sizes(cfg);

    ExpressionMatrix out;
    out.counts = DenseMatrix(cfg.n_cells, g);
    std::vector<int> labels(cfg.n_cells, 0);

    const std::size_t n_de = static_cast<std::size_t>(std::llround(cfg.de_fraction * static_cast<double>(g)));
    std::size_t row = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::mt19937_64 rng(splitmix64(cfg.seed ^ ((c + 1) * 0x9e3779b97f4a7c15ULL)));
        // Marker set: n_de genes sampled without replacement, each scaled up or
        // down by 2^de_log_fold.
        std::vector<double> means(g, cfg.base_mean);
        std::vector<std::size_t> idx(g);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t t = 0; t < n_de && t < g; ++t) {
            std::uniform_int_distribution<std::size_t> pick(t, g - 1);
            std::swap(idx[t], idx[pick(rng)]);
            std::bernoulli_distribution up(0.5);
            const double fold = std::exp2(up(rng) ? cfg.de_log_fold : -cfg.de_log_fold);
            means[idx[t]] *= fold;
        }

        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t cell = 0; cell < sizes[c]; ++cell, ++row) {
            labels[row] = static_cast<int>(c);
            for (std::size_t j = 0; j < g; ++j) {
                // NB(mean, dispersion) through its gamma-Poisson mixture.
                std::gamma_distribution<double> shape(cfg.dispersion, means[j] / cfg.dispersion);
                const double rate = shape(rng);
                std::poisson_distribution<long> pois(rate);
                double value = static_cast<double>(rate > 0.0 ? pois(rng) : 0);
                // The dropout uniform is always consumed so the count stream is
                // identical across dropout rates for one seed; higher rates then
                // zero out strict supersets of entries.
                const double u = unit(rng);
                if (u < cfg.dropout_rate) value = 0.0;
                out.counts(row, j) = value;
            }
        }
    }

    for (std::size_t j = 0; j < g; ++j) out.gene_ids.push_back("gene_" + std::to_string(j));
    for (std::size_t i = 0; i < cfg.n_cells; ++i) out.cell_ids.push_back("cell_" + std::to_string(i));
    out.labels = std::move(labels);
    return out;
}

}  // namespace sgc
