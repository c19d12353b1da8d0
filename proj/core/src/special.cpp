#include "sgc/special.hpp"

#include <cmath>

#include "sgc/errors.hpp"

namespace sgc {

double digamma(double x) {
    if (!(x > 0.0)) throw ValueError("digamma: argument must be positive, got " + std::to_string(x));
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    // psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^2n), truncated where the tail is < 1e-14 for x >= 10
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    return acc + std::log(x) - 0.5 * inv - series;
}

}  // namespace sgc
