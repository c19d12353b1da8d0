#include "sgc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sgc/errors.hpp"

namespace sgc {

namespace {

void validate_common(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw ValueError("trainer: learning_rate must be positive");
    if (cfg.weight_decay < 0.0) throw ValueError("trainer: weight_decay must be nonnegative");
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ValueError("trainer: alpha must lie in [0,1]");
    if (cfg.beta < 0.0 || cfg.gamma < 0.0 || cfg.mu_weight < 0.0) {
        throw ValueError("trainer: loss weights must be nonnegative");
    }
    if (!(cfg.lambda > 0.0)) throw ValueError("trainer: lambda must be positive");
}

double component_value(const ad::Var& v) { return v.defined() ? v.value()(0, 0) : 0.0; }

void check_components_finite(const EpochLoss& el, const char* phase, std::size_t epoch) {
    if (!std::isfinite(el.ncut) || !std::isfinite(el.zinb) || !std::isfinite(el.kl) || !std::isfinite(el.total)) {
        throw Error(std::string(phase) + ": non-finite loss at epoch " + std::to_string(epoch));
    }
}

std::vector<int> argmax_labels(const DenseMatrix& q) {
    std::vector<int> labels(q.rows(), 0);
    for (std::size_t i = 0; i < q.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < q.cols(); ++j) {
            if (q(i, j) > q(i, best)) best = j;
        }
        labels[i] = static_cast<int>(best);
    }
    return labels;
}

}  // namespace

void adam_step(std::vector<ad::Var>& params, AdamState& state, double lr, double weight_decay) {
    if (!(lr > 0.0)) throw ValueError("adam_step: learning rate must be positive");
    if (state.m.empty()) {
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const auto& p : params) {
            state.m.emplace_back(p.value().rows(), p.value().cols(), 0.0);
            state.v.emplace_back(p.value().rows(), p.value().cols(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw ValueError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        // Parameters cut off from the loss (e.g. decoder heads at gamma=0) get a
        // zero gradient rather than an error.
        const DenseMatrix* gp = params[k].has_grad() ? &params[k].grad() : nullptr;
        if (gp && !gp->all_finite()) {
            throw ValueError("adam_step: non-finite gradient for parameter '" + params[k].name() + "'");
        }
        DenseMatrix& value = params[k].mutable_value();
        if ((gp && !gp->same_shape(value)) || !state.m[k].same_shape(value)) {
            throw ShapeError("adam_step: shape mismatch for parameter '" + params[k].name() + "'");
        }
        if (weight_decay != 0.0) {
            const double keep = 1.0 - lr * weight_decay;
            for (std::size_t i = 0; i < value.size(); ++i) value.data()[i] *= keep;
        }
        double* m = state.m[k].data();
        double* v = state.v[k].data();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double gi = gp ? gp->data()[i] : 0.0;
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            value.data()[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

PretrainResult pretrain(const DenseMatrix& x, const std::vector<double>& size_factors,
                        const SoftGraphPair& graphs, ModelParams& params,
                        const TrainConfig& cfg, const EpochCallback& on_epoch,
                        const DenseMatrix* zinb_target) {
    validate_common(cfg);
    if (graphs.l1.rows() != x.rows()) {
        throw ShapeError("pretrain: graphs built for " + std::to_string(graphs.l1.rows()) + " cells, X has " +
                         std::to_string(x.rows()));
    }
    const DenseMatrix& target = zinb_target ? *zinb_target : x;
    if (!target.same_shape(x)) {
        throw ShapeError("pretrain: likelihood target shape differs from X");
    }

    const ad::Var xc = ad::constant(x, "x");
    const ad::Var mixed = ad::constant(mixed_laplacian(graphs, cfg.alpha), "mixed_laplacian");
    std::vector<ad::Var> trainable = params.trainable();
    AdamState opt;

    PretrainResult res;
    for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const ad::Var z = encode(xc, params);
        const ad::Var l_ncut = ncut_loss_mixed(z, mixed, cfg.beta);
        ad::Var l_zinb;
        ad::Var total = l_ncut;
        if (cfg.gamma > 0.0) {
            l_zinb = zinb_nll(target, decode_heads(z, params, size_factors));
            total = ad::add(l_ncut, ad::scale(l_zinb, cfg.gamma));
        }
        EpochLoss el;
        el.ncut = component_value(l_ncut);
        el.zinb = component_value(l_zinb);
        try {
            el.total = ad::forward(total);
        } catch (const ValueError&) {
            throw Error("pretrain: non-finite loss at epoch " + std::to_string(epoch));
        }
        check_components_finite(el, "pretrain", epoch);
        ad::backward(total);
        adam_step(trainable, opt, cfg.learning_rate, cfg.weight_decay);
        res.history.push_back(el);
        if (on_epoch) on_epoch(epoch, el);
    }
    res.z = encode(xc, params).value();
    return res;
}

TrainResult train_joint(const DenseMatrix& x, const std::vector<double>& size_factors,
                        const SoftGraphPair& graphs, ModelParams& params,
                        const TrainConfig& cfg, const EpochCallback& on_epoch,
                        const DenseMatrix* zinb_target) {
    validate_common(cfg);
    if (cfg.clusters < 2) throw ValueError("train_joint: clusters must be at least 2");
    if (x.rows() < cfg.clusters) throw ValueError("train_joint: fewer cells than clusters");
    if (graphs.l1.rows() != x.rows()) {
        throw ShapeError("train_joint: graphs built for " + std::to_string(graphs.l1.rows()) + " cells, X has " +
                         std::to_string(x.rows()));
    }
    const DenseMatrix& target = zinb_target ? *zinb_target : x;
    if (!target.same_shape(x)) {
        throw ShapeError("train_joint: likelihood target shape differs from X");
    }

    const ad::Var xc = ad::constant(x, "x");
    const ad::Var mixed = ad::constant(mixed_laplacian(graphs, cfg.alpha), "mixed_laplacian");

    const DenseMatrix z0 = encode(xc, params).value();
    const KmeansResult seed_km = kmeans(z0, cfg.clusters, cfg.seed);
    ad::Var centers = ad::leaf(seed_km.centers, "centers");

    // Without the transport term no gradient reaches the centers; they stay a
    // frozen leaf and the final labels fall back to kmeans on the embedding.
    const bool align = cfg.mu_weight > 0.0;
    std::vector<ad::Var> trainable = params.trainable();
    if (align && !cfg.recompute_centers) trainable.push_back(centers);
    AdamState opt;
    SinkhornConfig sink{cfg.lambda, cfg.sinkhorn_max_iters, cfg.sinkhorn_tol};

    TrainResult res;
    for (std::size_t epoch = 0; epoch < cfg.train_epochs; ++epoch) {
        if (align && cfg.recompute_centers && epoch > 0) {
            const DenseMatrix z_now = encode(xc, params).value();
            centers.mutable_value() = kmeans(z_now, cfg.clusters, cfg.seed + epoch).centers;
        }
        const ad::Var z = encode(xc, params);

        const ad::Var l_ncut = ncut_loss_mixed(z, mixed, cfg.beta);
        ad::Var total = l_ncut;
        ad::Var l_zinb;
        if (cfg.gamma > 0.0) {
            l_zinb = zinb_nll(target, decode_heads(z, params, size_factors));
            total = ad::add(total, ad::scale(l_zinb, cfg.gamma));
        }
        ad::Var l_kl;
        if (align) {
            const ad::Var q = soft_assign(z, centers);
            const std::vector<double> pi = estimate_proportions(q.value());
            const SinkhornResult plan = sinkhorn(q.value(), pi, sink);
            if (!plan.converged) ++res.sinkhorn_failures;
            l_kl = kl_loss(plan.plan, q);
            total = ad::add(total, ad::scale(l_kl, cfg.mu_weight));
        }

        EpochLoss el;
        el.ncut = component_value(l_ncut);
        el.zinb = component_value(l_zinb);
        el.kl = component_value(l_kl);
        try {
            el.total = ad::forward(total);
        } catch (const ValueError&) {
            throw Error("train_joint: non-finite loss at epoch " + std::to_string(epoch));
        }
        check_components_finite(el, "train_joint", epoch);
        ad::backward(total);
        adam_step(trainable, opt, cfg.learning_rate, cfg.weight_decay);
        res.history.push_back(el);
        if (on_epoch) on_epoch(epoch, el);
    }

    res.embedding = encode(xc, params).value();
    if (align) {
        const ad::Var q_final = soft_assign(ad::constant(res.embedding), centers);
        res.labels = argmax_labels(q_final.value());
        res.centers = centers.value();
    } else {
        const KmeansResult km = kmeans(res.embedding, cfg.clusters, cfg.seed);
        res.labels = km.labels;
        res.centers = km.centers;
    }
    return res;
}

std::size_t select_k(const DenseMatrix& z, std::size_t k_min, std::size_t k_max,
                     std::uint64_t seed, std::vector<double>* scores) {
    const std::size_t n = z.rows();
    if (k_min < 2) throw ValueError("select_k: k_min must be at least 2");
    if (k_max < k_min) throw ValueError("select_k: k_max must be at least k_min");
    if (n < k_max + 1) throw ValueError("select_k: need more cells than k_max");

    // Pairwise distances once; silhouettes reuse them for every k.
    DenseMatrix dist(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < z.cols(); ++t) {
                const double d = z(i, t) - z(j, t);
                s += d * d;
            }
            const double e = std::sqrt(s);
            dist(i, j) = e;
            dist(j, i) = e;
        }
    }

    std::size_t best_k = k_min;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = k_min; k <= k_max; ++k) {
        const KmeansResult km = kmeans(z, k, seed);
        std::vector<std::size_t> counts(k, 0);
        for (int l : km.labels) ++counts[static_cast<std::size_t>(l)];
        double mean_s = 0.0;
        std::vector<double> cluster_sum(k);
        for (std::size_t i = 0; i < n; ++i) {
            std::fill(cluster_sum.begin(), cluster_sum.end(), 0.0);
            for (std::size_t j = 0; j < n; ++j) cluster_sum[static_cast<std::size_t>(km.labels[j])] += dist(i, j);
            const auto own = static_cast<std::size_t>(km.labels[i]);
            if (counts[own] <= 1) continue;  // silhouette 0 for singletons
            const double a = cluster_sum[own] / static_cast<double>(counts[own] - 1);
            double b = std::numeric_limits<double>::infinity();
            for (std::size_t cidx = 0; cidx < k; ++cidx) {
                if (cidx == own || counts[cidx] == 0) continue;
                b = std::min(b, cluster_sum[cidx] / static_cast<double>(counts[cidx]));
            }
            const double denom = std::max(a, b);
            if (denom > 0.0) mean_s += (b - a) / denom;
        }
        mean_s /= static_cast<double>(n);
        if (scores) scores->push_back(mean_s);
        if (mean_s > best_score) {
            best_score = mean_s;
            best_k = k;
        }
    }
    return best_k;
}

}  // namespace sgc
