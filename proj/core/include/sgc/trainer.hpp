#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sgc/autodiff.hpp"
#include "sgc/otcluster.hpp"
#include "sgc/softgraph.hpp"
#include "sgc/zinb.hpp"

namespace sgc {

struct TrainConfig {
    std::size_t pretrain_epochs = 200;
    std::size_t train_epochs = 200;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double alpha = 0.7;      // channel mix inside the cut loss
    double beta = 15.0;      // orthogonality weight
    double gamma = 50.0;     // reconstruction weight
    double mu_weight = 1e-3; // transport alignment weight
    double lambda = 50.0;    // entropy trade-off for the transport solve
    std::size_t clusters = 0;
    std::uint64_t seed = 0;
    std::size_t embedding_dim = 16;
    std::vector<std::size_t> hidden = {256, 64};
    std::size_t sinkhorn_max_iters = 500;
    double sinkhorn_tol = 1e-6;
    // Re-derive centers by kmeans every epoch instead of gradient updates.
    bool recompute_centers = false;
};

struct EpochLoss {
    double ncut = 0.0;
    double zinb = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

// One accumulator pair per trainable parameter, aligned by index.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<DenseMatrix> m;
    std::vector<DenseMatrix> v;
};

// Decoupled weight decay, then the bias-corrected moment update, applied in
// place to every leaf. Gradients must have been produced by backward();
// a non-finite gradient aborts with the parameter name.
void adam_step(std::vector<ad::Var>& params, AdamState& state, double lr, double weight_decay);

using EpochCallback = std::function<void(std::size_t epoch, const EpochLoss&)>;

struct PretrainResult {
    DenseMatrix z;
    std::vector<EpochLoss> history;
};

// Full-batch descent on cut loss + gamma * reconstruction loss.
// zinb_target overrides the matrix the likelihood is evaluated against
// (e.g. raw counts restricted to the kept genes); null means X itself.
PretrainResult pretrain(const DenseMatrix& x, const std::vector<double>& size_factors,
                        const SoftGraphPair& graphs, ModelParams& params,
                        const TrainConfig& cfg, const EpochCallback& on_epoch = nullptr,
                        const DenseMatrix* zinb_target = nullptr);

struct TrainResult {
    std::vector<int> labels;
    DenseMatrix embedding;
    DenseMatrix centers;
    std::vector<EpochLoss> history;
    std::size_t sinkhorn_failures = 0;
};

// Joint phase: centers seeded by kmeans on the current embedding, then every
// epoch refreshes Q, the cluster proportions, and the transport target before
// one optimizer step on the combined loss. Labels are the argmax of final Q.
TrainResult train_joint(const DenseMatrix& x, const std::vector<double>& size_factors,
                        const SoftGraphPair& graphs, ModelParams& params,
                        const TrainConfig& cfg, const EpochCallback& on_epoch = nullptr,
                        const DenseMatrix* zinb_target = nullptr);

// Mean silhouette over kmeans labelings for each k in [k_min, k_max];
// returns the best k.
std::size_t select_k(const DenseMatrix& z, std::size_t k_min, std::size_t k_max,
                     std::uint64_t seed, std::vector<double>* scores = nullptr);

}  // namespace sgc
