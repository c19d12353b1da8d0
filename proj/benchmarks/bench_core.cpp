#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sgc/autodiff.hpp"
#include "sgc/dense_matrix.hpp"
#include "sgc/otcluster.hpp"
#include "sgc/softgraph.hpp"
#include "sgc/zinb.hpp"

using namespace sgc;

namespace {

DenseMatrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.0,
                          double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    DenseMatrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

DenseMatrix random_counts(std::mt19937_64& rng, std::size_t r, std::size_t c) {
    std::poisson_distribution<int> pois(3.0);
    DenseMatrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = pois(rng);
    return m;
}

}  // namespace

static void BM_matmul_forward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const DenseMatrix a = random_matrix(rng, n, n);
    const DenseMatrix b = random_matrix(rng, n, n);
    for (auto _ : state) {
        DenseMatrix c = matmul(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}
BENCHMARK(BM_matmul_forward)->Arg(128)->Arg(256)->Arg(512);

static void BM_gemm_forward_backward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(2);
    auto a = ad::leaf(random_matrix(rng, n, n), "a");
    auto b = ad::leaf(random_matrix(rng, n, n), "b");
    for (auto _ : state) {
        auto loss = ad::frobenius_sq(ad::matmul(a, b));
        ad::forward(loss);
        ad::backward(loss);
        benchmark::DoNotOptimize(a.grad().data());
    }
}
BENCHMARK(BM_gemm_forward_backward)->Arg(128)->Arg(256);

static void BM_build_soft_graphs(benchmark::State& state) {
    const auto cells = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(3);
    const DenseMatrix x = random_matrix(rng, cells, 300, 0.0, 4.0);
    for (auto _ : state) {
        SoftGraphPair pair = build_soft_graphs(x);
        benchmark::DoNotOptimize(pair.l1.data());
    }
}
BENCHMARK(BM_build_soft_graphs)->Arg(200)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_ncut_loss_step(benchmark::State& state) {
    const auto cells = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(4);
    const SoftGraphPair pair = build_soft_graphs(random_matrix(rng, cells, 200, 0.0, 4.0));
    auto z = ad::leaf(random_matrix(rng, cells, 16), "z");
    NCutConfig cfg;
    for (auto _ : state) {
        auto loss = ncut_loss(z, pair, cfg);
        ad::forward(loss);
        ad::backward(loss);
        benchmark::DoNotOptimize(z.grad().data());
    }
}
BENCHMARK(BM_ncut_loss_step)->Arg(200)->Arg(600)->Unit(benchmark::kMillisecond);

static void BM_zinb_epoch(benchmark::State& state) {
    const auto cells = static_cast<std::size_t>(state.range(0));
    const std::size_t genes = 200;
    std::mt19937_64 rng(5);
    const DenseMatrix x = random_counts(rng, cells, genes);
    std::vector<double> size_factors(cells, 1.0);

    AutoencoderConfig cfg;
    cfg.hidden = {64, 32};
    cfg.embedding_dim = 8;
    ModelParams params = init_params(genes, cfg, 1);
    auto xc = ad::constant(x, "x");

    for (auto _ : state) {
        auto z = encode(xc, params);
        auto loss = zinb_nll(x, decode_heads(z, params, size_factors));
        ad::forward(loss);
        ad::backward(loss);
        benchmark::DoNotOptimize(params.encoder[0].weight.grad().data());
    }
}
BENCHMARK(BM_zinb_epoch)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

static void BM_sinkhorn(benchmark::State& state) {
    const auto cells = static_cast<std::size_t>(state.range(0));
    const std::size_t clusters = 8;
    std::mt19937_64 rng(6);
    DenseMatrix q = random_matrix(rng, cells, clusters, 0.05, 1.0);
    for (std::size_t i = 0; i < cells; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < clusters; ++j) s += q(i, j);
        for (std::size_t j = 0; j < clusters; ++j) q(i, j) /= s;
    }
    std::vector<double> pi(clusters, 1.0 / clusters);
    SinkhornConfig cfg;
    for (auto _ : state) {
        SinkhornResult r = sinkhorn(q, pi, cfg);
        benchmark::DoNotOptimize(r.plan.data());
    }
}
BENCHMARK(BM_sinkhorn)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
