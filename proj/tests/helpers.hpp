#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sgc/dense_matrix.hpp"

namespace testutil {

inline sgc::DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                      double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    sgc::DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

// Entries in [lo, hi] with |entry| >= margin, for kernels kinked at zero.
inline sgc::DenseMatrix random_matrix_away_from_zero(std::size_t rows, std::size_t cols,
                                                     std::mt19937_64& rng, double margin,
                                                     double hi = 1.0) {
    std::uniform_real_distribution<double> mag(margin, hi);
    std::bernoulli_distribution sign(0.5);
    sgc::DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        double v = mag(rng);
        m.data()[i] = sign(rng) ? v : -v;
    }
    return m;
}

inline sgc::DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = rows.begin()->size();
    sgc::DenseMatrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        std::size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

}  // namespace testutil
