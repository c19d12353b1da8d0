#include "sgc/otcluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "sgc/errors.hpp"

namespace sgc {

ad::Var soft_assign(const ad::Var& z, const ad::Var& centers) {
    const std::size_t n = z.rows();
    const std::size_t d = z.cols();
    const std::size_t c = centers.rows();
    if (c < 2) throw ValueError("soft_assign: need at least 2 centers");
    if (centers.cols() != d) {
        throw ShapeError("soft_assign: embedding width " + std::to_string(d) + " vs center width " + std::to_string(centers.cols()));
    }
    // ||z_i - c_j||^2 = |z_i|^2 + |c_j|^2 - 2 z_i . c_j, assembled with
    // rank-one broadcasts so the whole thing stays differentiable.
    const ad::Var zsq = ad::row_sum(ad::mul(z, z));          // N x 1
    const ad::Var csq = ad::row_sum(ad::mul(centers, centers));  // C x 1
    const ad::Var cross = ad::matmul(z, ad::transpose(centers));  // N x C
    const ad::Var ones_row = ad::constant(DenseMatrix(1, c, 1.0));
    const ad::Var ones_col = ad::constant(DenseMatrix(n, 1, 1.0));
    const ad::Var dist2 = ad::sub(ad::add(ad::matmul(zsq, ones_row), ad::matmul(ones_col, ad::transpose(csq))),
                                  ad::scale(cross, 2.0));
    const ad::Var kernel = ad::pow(ad::add_scalar(dist2, 1.0), -1.0);
    const ad::Var inv_rows = ad::pow(ad::row_sum(kernel), -1.0);
    return ad::row_scale(kernel, inv_rows);
}

std::vector<double> estimate_proportions(const DenseMatrix& q) {
    const std::size_t n = q.rows();
    const std::size_t c = q.cols();
    if (n == 0 || c == 0) throw ValueError("estimate_proportions: empty assignment matrix");
    std::vector<double> pi(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (q(i, j) > q(i, best)) best = j;  // ties keep the lowest index
        }
        pi[best] += 1.0;
    }
    const double floor = 1.0 / (10.0 * static_cast<double>(c));
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
        pi[j] = std::max(pi[j] / static_cast<double>(n), floor);
        total += pi[j];
    }
    for (std::size_t j = 0; j < c; ++j) pi[j] /= total;
    return pi;
}

SinkhornResult sinkhorn(const DenseMatrix& q, const std::vector<double>& proportions,
                        const SinkhornConfig& cfg) {
    const std::size_t n = q.rows();
    const std::size_t c = q.cols();
    if (n == 0 || c == 0) throw ValueError("sinkhorn: empty assignment matrix");
    if (proportions.size() != c) {
        throw ShapeError("sinkhorn: " + std::to_string(proportions.size()) + " proportions for " + std::to_string(c) + " clusters");
    }
    double pi_sum = 0.0;
    for (double p : proportions) {
        if (!(p > 0.0)) throw ValueError("sinkhorn: proportions must be strictly positive");
        pi_sum += p;
    }
    if (std::abs(pi_sum - 1.0) > 1e-9) throw ValueError("sinkhorn: proportions must sum to 1");
    if (!(cfg.lambda > 0.0)) throw ValueError("sinkhorn: lambda must be positive");
    if (cfg.max_iters == 0) throw ValueError("sinkhorn: max_iters must be positive");

    // K holds Q^lambda with each row divided by its own max power. The row
    // scaling is absorbed by u at the fixed point, so the plan is unchanged,
    // but exp never sees a positive argument and cannot overflow.
    DenseMatrix k(n, c);
    for (std::size_t i = 0; i < n; ++i) {
        double row_max = 0.0;
        for (std::size_t j = 0; j < c; ++j) row_max = std::max(row_max, std::max(q(i, j), 1e-12));
        const double log_max = std::log(row_max);
        for (std::size_t j = 0; j < c; ++j) {
            k(i, j) = std::exp(cfg.lambda * (std::log(std::max(q(i, j), 1e-12)) - log_max));
        }
    }

    std::vector<double> u(n, 1.0), v(c, 1.0), target(c);
    for (std::size_t j = 0; j < c; ++j) target[j] = static_cast<double>(n) * proportions[j];

    SinkhornResult res;
    res.max_violation = std::numeric_limits<double>::infinity();
    DenseMatrix plan(n, c);
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double kv = 0.0;
            for (std::size_t j = 0; j < c; ++j) kv += k(i, j) * v[j];
            u[i] = 1.0 / kv;
            if (!std::isfinite(u[i])) {
                throw ValueError("sinkhorn: non-finite row scaling at iteration " + std::to_string(it) +
                                 " (lambda too large for Q's dynamic range)");
            }
        }
        for (std::size_t j = 0; j < c; ++j) {
            double ku = 0.0;
            for (std::size_t i = 0; i < n; ++i) ku += k(i, j) * u[i];
            v[j] = target[j] / ku;
            if (!std::isfinite(v[j])) {
                throw ValueError("sinkhorn: non-finite column scaling at iteration " + std::to_string(it) +
                                 " (lambda too large for Q's dynamic range)");
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) plan(i, j) = u[i] * k(i, j) * v[j];
        double violation = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double rs = 0.0;
            for (std::size_t j = 0; j < c; ++j) rs += plan(i, j);
            violation = std::max(violation, std::abs(rs - 1.0));
        }
        for (std::size_t j = 0; j < c; ++j) {
            double cs = 0.0;
            for (std::size_t i = 0; i < n; ++i) cs += plan(i, j);
            violation = std::max(violation, std::abs(cs - target[j]));
        }
        res.iterations = it;
        if (violation < res.max_violation) {
            res.max_violation = violation;
            res.plan = plan;
        }
        if (violation <= cfg.marginal_tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

ad::Var kl_loss(const DenseMatrix& plan, const ad::Var& q) {
    if (!plan.same_shape(q.value())) {
        throw ShapeError("kl_loss: plan " + plan.shape_str() + " vs assignment " + q.value().shape_str());
    }
    double p_log_p = 0.0;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const double p = plan.data()[i];
        if (p < 0.0) throw ValueError("kl_loss: negative plan entry at " + std::to_string(i));
        if (p > 0.0) p_log_p += p * std::log(p);
    }
    const ad::Var log_q = ad::log(ad::clamp(q, 1e-12, std::numeric_limits<double>::max()));
    const ad::Var cross = ad::full_sum(ad::mul(ad::constant(plan), log_q));
    // KL(P||Q) = sum p log p - sum p log q, averaged over rows.
    return ad::scale(ad::add_scalar(ad::scale(cross, -1.0), p_log_p), 1.0 / static_cast<double>(plan.rows()));
}

namespace {

double sq_dist(const DenseMatrix& a, std::size_t i, const DenseMatrix& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t t = 0; t < a.cols(); ++t) {
        const double d = a(i, t) - b(j, t);
        s += d * d;
    }
    return s;
}

}  // namespace

KmeansResult kmeans(const DenseMatrix& z, std::size_t c, std::uint64_t seed, std::size_t max_iters) {
    const std::size_t n = z.rows();
    const std::size_t d = z.cols();
    if (c < 1) throw ValueError("kmeans: need at least 1 cluster");
    if (n < c) throw ValueError("kmeans: fewer points than clusters");

    std::mt19937_64 rng(seed);
    DenseMatrix centers(c, d);
    std::vector<double> best_dist(n, std::numeric_limits<double>::infinity());
    {
        // Greedy distance-weighted seeding.
        std::uniform_int_distribution<std::size_t> first(0, n - 1);
        const std::size_t f = first(rng);
        for (std::size_t t = 0; t < d; ++t) centers(0, t) = z(f, t);
        for (std::size_t picked = 1; picked < c; ++picked) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                best_dist[i] = std::min(best_dist[i], sq_dist(z, i, centers, picked - 1));
                total += best_dist[i];
            }
            std::size_t chosen = 0;
            if (total > 0.0) {
                std::uniform_real_distribution<double> pick(0.0, total);
                double r = pick(rng);
                for (std::size_t i = 0; i < n; ++i) {
                    r -= best_dist[i];
                    if (r <= 0.0) {
                        chosen = i;
                        break;
                    }
                    if (i + 1 == n) chosen = i;
                }
            } else {
                std::uniform_int_distribution<std::size_t> any(0, n - 1);
                chosen = any(rng);
            }
            for (std::size_t t = 0; t < d; ++t) centers(picked, t) = z(chosen, t);
        }
    }

    KmeansResult res;
    res.labels.assign(n, 0);
    std::vector<double> point_dist(n, 0.0);
    std::vector<std::size_t> counts(c, 0);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        // Assignment; ties keep the lowest cluster index.
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double bd = sq_dist(z, i, centers, 0);
            for (std::size_t j = 1; j < c; ++j) {
                const double dj = sq_dist(z, i, centers, j);
                if (dj < bd) {
                    bd = dj;
                    best = j;
                }
            }
            res.labels[i] = static_cast<int>(best);
            point_dist[i] = bd;
            inertia += bd;
        }
        res.inertia_history.push_back(inertia);
        res.inertia = inertia;

        std::fill(counts.begin(), counts.end(), 0);
        DenseMatrix next(c, d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto lbl = static_cast<std::size_t>(res.labels[i]);
            ++counts[lbl];
            for (std::size_t t = 0; t < d; ++t) next(lbl, t) += z(i, t);
        }
        std::vector<bool> taken(n, false);
        for (std::size_t j = 0; j < c; ++j) {
            if (counts[j] > 0) {
                for (std::size_t t = 0; t < d; ++t) next(j, t) /= static_cast<double>(counts[j]);
            } else {
                // Empty cluster: seize the point farthest from its center.
                std::size_t far = 0;
                double fd = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (!taken[i] && point_dist[i] > fd) {
                        fd = point_dist[i];
                        far = i;
                    }
                }
                taken[far] = true;
                for (std::size_t t = 0; t < d; ++t) next(j, t) = z(far, t);
            }
        }

        double shift = 0.0;
        for (std::size_t j = 0; j < c; ++j) shift = std::max(shift, sq_dist(next, j, centers, j));
        centers = std::move(next);
        if (std::sqrt(shift) < 1e-8) break;
    }

    // Final assignment against the converged centers.
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double bd = sq_dist(z, i, centers, 0);
        for (std::size_t j = 1; j < c; ++j) {
            const double dj = sq_dist(z, i, centers, j);
            if (dj < bd) {
                bd = dj;
                best = j;
            }
        }
        res.labels[i] = static_cast<int>(best);
        inertia += bd;
    }
    res.inertia_history.push_back(inertia);
    res.inertia = inertia;
    res.centers = std::move(centers);
    return res;
}

}  // namespace sgc
