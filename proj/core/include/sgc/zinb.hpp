#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sgc/autodiff.hpp"
#include "sgc/dense_matrix.hpp"

namespace sgc {

enum class Activation { Linear, Sigmoid, Tanh };

struct AutoencoderConfig {
    std::vector<std::size_t> hidden = {256, 64};
    std::size_t embedding_dim = 16;
    Activation hidden_activation = Activation::Tanh;
};

// Fully connected encoder, mirrored decoder, and the three distribution heads.
// All weights live in autodiff leaves so one backward pass covers everything.
struct ModelParams {
    struct Layer {
        ad::Var weight;  // in x out
        ad::Var bias;    // 1 x out
        Activation act = Activation::Linear;
    };
    std::vector<Layer> encoder;
    std::vector<Layer> decoder;
    Layer head_pi;
    Layer head_mu;
    Layer head_theta;
    std::size_t input_dim = 0;
    std::size_t embedding_dim = 0;

    std::vector<ad::Var> trainable() const;
};

// Dropout probability, mean, and dispersion per matrix entry.
struct ZinbOutput {
    ad::Var pi;
    ad::Var mu;
    ad::Var theta;
};

// Glorot-uniform weights, zero biases, seeded.
ModelParams init_params(std::size_t input_dim, const AutoencoderConfig& cfg, std::uint64_t seed);

// Z = encoder stack applied to X; final layer linear.
ad::Var encode(const ad::Var& x, const ModelParams& params);

// Runs the mirrored decoder then the heads: sigmoid for pi (kept inside
// (1e-6, 1-1e-6)), exp for mu scaled per row by size factors, exp for theta;
// mu and theta clamped to [1e-6, 1e6].
ZinbOutput decode_heads(const ad::Var& z, const ModelParams& params,
                        const std::vector<double>& size_factors);

// Per-entry log of the zero-inflated NB likelihood:
//   log[ pi * 1{x=0} + (1 - pi) * NB(x; mu, theta) ]
// Zero entries evaluate the mixture in the linear domain, floored at 1e-10
// before the log. Positive entries evaluate log(1 - pi) + log NB(x) directly
// in the log domain (1 - pi floored at 1e-12), so far-tail counts keep exact
// log likelihoods. The NB term carries the full lgamma normalization so the
// pmf sums to 1 over integer x.
ad::Var zinb_log_likelihood(const DenseMatrix& x, const ZinbOutput& out);

// Mean negative log likelihood over all entries; errors with the first
// offending indices if any per-entry term is non-finite.
ad::Var zinb_nll(const DenseMatrix& x, const ZinbOutput& out);

// Binary little-endian checkpoint, lossless at fp64. Layout documented in the
// repository README.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace sgc
