#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "helpers.hpp"
#include "sgc/autodiff.hpp"
#include "sgc/errors.hpp"
#include "sgc/metrics.hpp"
#include "sgc/trainer.hpp"

using namespace sgc;

namespace {

// Two far-apart expression blocks with mild deterministic jitter. Cells
// 0..n/2-1 express the first half of the genes, the rest the second half.
DenseMatrix two_blobs(std::size_t n, std::size_t genes, std::vector<int>* truth) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> noise(0.0, 0.5);
    DenseMatrix x(n, genes);
    truth->assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const bool second = i >= n / 2;
        (*truth)[i] = second ? 1 : 0;
        for (std::size_t j = 0; j < genes; ++j) {
            const bool hot = (j >= genes / 2) == second;
            x(i, j) = (hot ? 8.0 : 0.2) + noise(rng);
        }
    }
    return x;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.hidden = {6};
    cfg.embedding_dim = 2;
    cfg.pretrain_epochs = 10;
    cfg.train_epochs = 10;
    cfg.clusters = 2;
    cfg.gamma = 1.0;
    cfg.seed = 1;
    return cfg;
}

}  // namespace

TEST_CASE("adam_step: first step moves a unit-gradient scalar by -lr") {
    auto w = ad::leaf(DenseMatrix(1, 1, 0.0), "w");
    auto loss = ad::full_sum(w);
    ad::forward(loss);
    ad::backward(loss);
    std::vector<ad::Var> params{w};
    AdamState st;
    adam_step(params, st, 0.1, 0.0);
    // m-hat = g, v-hat = g^2, so the step is lr * g / (|g| + eps).
    CHECK(w.value()(0, 0) == doctest::Approx(-0.1).epsilon(1e-7));
    CHECK(st.step == 1);
}

TEST_CASE("adam_step: no gradient and no decay leaves parameters untouched") {
    auto w = ad::leaf(DenseMatrix(2, 2, 3.0), "w");
    std::vector<ad::Var> params{w};
    AdamState st;
    adam_step(params, st, 0.5, 0.0);
    CHECK(max_abs_diff(w.value(), DenseMatrix(2, 2, 3.0)) == 0.0);
}

TEST_CASE("adam_step: decoupled decay applies even without a gradient") {
    auto w = ad::leaf(DenseMatrix(1, 1, 2.0), "w");
    std::vector<ad::Var> params{w};
    AdamState st;
    adam_step(params, st, 1.0, 0.01);
    CHECK(w.value()(0, 0) == doctest::Approx(2.0 * 0.99).epsilon(1e-12));
}

TEST_CASE("adam_step: a non-finite gradient aborts with the parameter name") {
    auto w = ad::leaf(DenseMatrix(1, 1, 0.0), "badleaf");
    // d/dw sqrt(w) at w = 0 is infinite while the loss itself is finite.
    auto loss = ad::full_sum(ad::pow(w, 0.5));
    ad::forward(loss);
    ad::backward(loss);
    std::vector<ad::Var> params{w};
    AdamState st;
    try {
        adam_step(params, st, 0.1, 0.0);
        FAIL("expected ValueError");
    } catch (const ValueError& e) {
        CHECK(std::string(e.what()).find("badleaf") != std::string::npos);
    }
}

TEST_CASE("adam_step: validation") {
    auto w = ad::leaf(DenseMatrix(1, 1, 0.0), "w");
    std::vector<ad::Var> params{w};
    AdamState st;
    CHECK_THROWS_AS(adam_step(params, st, 0.0, 0.0), ValueError);
    adam_step(params, st, 0.1, 0.0);
    auto w2 = ad::leaf(DenseMatrix(1, 1, 0.0), "w2");
    params.push_back(w2);
    CHECK_THROWS_AS(adam_step(params, st, 0.1, 0.0), ValueError);
}

TEST_CASE("pretrain: loss descends and the embedding drifts toward orthonormal columns") {
    std::vector<int> truth;
    auto x = two_blobs(30, 8, &truth);
    std::vector<double> s(30, 1.0);
    auto graphs = build_soft_graphs(x);
    auto cfg = tiny_config();
    cfg.pretrain_epochs = 40;

    AutoencoderConfig net;
    net.hidden = cfg.hidden;
    net.embedding_dim = cfg.embedding_dim;
    auto params = init_params(8, net, cfg.seed);

    auto ortho_gap = [](const DenseMatrix& z) {
        auto g = matmul(transposed(z), z);
        double acc = 0.0;
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) {
                const double d = g(i, j) - (i == j ? 1.0 : 0.0);
                acc += d * d;
            }
        return acc;
    };
    const double gap_before = ortho_gap(encode(ad::constant(x, "x"), params).value());

    auto res = pretrain(x, s, graphs, params, cfg);
    REQUIRE(res.history.size() == 40);
    CHECK(res.history.back().total < res.history.front().total);
    for (const auto& el : res.history) {
        CHECK(std::isfinite(el.total));
        CHECK(el.kl == 0.0);
    }
    CHECK(ortho_gap(res.z) < gap_before);
}

TEST_CASE("pretrain: zero epochs is a no-op") {
    std::vector<int> truth;
    auto x = two_blobs(12, 6, &truth);
    std::vector<double> s(12, 1.0);
    auto graphs = build_soft_graphs(x);
    auto cfg = tiny_config();
    cfg.pretrain_epochs = 0;

    AutoencoderConfig net;
    net.hidden = cfg.hidden;
    net.embedding_dim = cfg.embedding_dim;
    auto params = init_params(6, net, 2);
    const auto w0 = params.encoder[0].weight.value();
    auto res = pretrain(x, s, graphs, params, cfg);
    CHECK(res.history.empty());
    CHECK(max_abs_diff(params.encoder[0].weight.value(), w0) == 0.0);
    CHECK(max_abs_diff(res.z, encode(ad::constant(x, "x"), params).value()) == 0.0);
}

TEST_CASE("pretrain: gamma = 0 trains the encoder and freezes the likelihood stack") {
    std::vector<int> truth;
    auto x = two_blobs(16, 6, &truth);
    std::vector<double> s(16, 1.0);
    auto graphs = build_soft_graphs(x);
    auto cfg = tiny_config();
    cfg.gamma = 0.0;
    cfg.pretrain_epochs = 5;

    AutoencoderConfig net;
    net.hidden = cfg.hidden;
    net.embedding_dim = cfg.embedding_dim;
    auto params = init_params(6, net, 3);
    const auto enc0 = params.encoder[0].weight.value();
    const auto dec0 = params.decoder[0].weight.value();
    const auto head0 = params.head_mu.weight.value();

    auto res = pretrain(x, s, graphs, params, cfg);
    REQUIRE(res.history.size() == 5);
    for (const auto& el : res.history) CHECK(el.zinb == 0.0);
    CHECK(max_abs_diff(params.encoder[0].weight.value(), enc0) > 0.0);
    CHECK(max_abs_diff(params.decoder[0].weight.value(), dec0) == 0.0);
    CHECK(max_abs_diff(params.head_mu.weight.value(), head0) == 0.0);
}

TEST_CASE("pretrain: overriding the likelihood target changes only the zinb component") {
    std::vector<int> truth;
    auto x = two_blobs(12, 6, &truth);
    std::vector<double> s(12, 1.0);
    auto graphs = build_soft_graphs(x);
    auto cfg = tiny_config();
    cfg.pretrain_epochs = 3;

    AutoencoderConfig net;
    net.hidden = cfg.hidden;
    net.embedding_dim = cfg.embedding_dim;

    auto pa = init_params(6, net, 4);
    auto ra = pretrain(x, s, graphs, pa, cfg);

    DenseMatrix doubled = x;
    for (std::size_t i = 0; i < doubled.size(); ++i) doubled.data()[i] *= 2.0;
    auto pb = init_params(6, net, 4);
    auto rb = pretrain(x, s, graphs, pb, cfg, nullptr, &doubled);

    CHECK(ra.history[0].ncut == rb.history[0].ncut);
    CHECK(ra.history[0].zinb != rb.history[0].zinb);

    DenseMatrix wrong(11, 6, 0.0);
    auto pc = init_params(6, net, 4);
    CHECK_THROWS_AS(pretrain(x, s, graphs, pc, cfg, nullptr, &wrong), ShapeError);
}

TEST_CASE("train_joint: separated blobs are labeled perfectly and deterministically") {
    std::vector<int> truth;
    auto x = two_blobs(40, 8, &truth);
    std::vector<double> s(40, 1.0);
    auto graphs = build_soft_graphs(x);
    auto cfg = tiny_config();

    auto run = [&] {
        AutoencoderConfig net;
        net.hidden = cfg.hidden;
        net.embedding_dim = cfg.embedding_dim;
        auto params = init_params(8, net, cfg.seed);
        pretrain(x, s, graphs, params, cfg);
        return train_joint(x, s, graphs, params, cfg);
    };
    auto a = run();
    REQUIRE(a.labels.size() == 40);
    REQUIRE(a.history.size() == 10);
    CHECK(accuracy_hungarian(truth, a.labels) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.sinkhorn_failures == 0);
    CHECK(a.centers.rows() == 2);
    for (const auto& el : a.history) CHECK(el.kl >= 0.0);

    auto b = run();
    CHECK(a.labels == b.labels);
    CHECK(max_abs_diff(a.embedding, b.embedding) == 0.0);
    CHECK(max_abs_diff(a.centers, b.centers) == 0.0);
}

TEST_CASE("train_joint: mu = 0 ignores the likelihood stack and falls back to kmeans") {
    std::vector<int> truth;
    auto x = two_blobs(24, 8, &truth);
    std::vector<double> s(24, 1.0);
    auto graphs = build_soft_graphs(x);
    auto cfg = tiny_config();
    cfg.gamma = 0.0;
    cfg.mu_weight = 0.0;
    cfg.train_epochs = 5;

    AutoencoderConfig net;
    net.hidden = cfg.hidden;
    net.embedding_dim = cfg.embedding_dim;

    // Same seed, one run with the likelihood heads knocked out: the loss only
    // sees the encoder, so the trajectories must coincide.
    auto pa = init_params(8, net, 7);
    auto pb = init_params(8, net, 7);
    pb.head_pi.weight.mutable_value().fill(0.4);
    pb.head_mu.weight.mutable_value().fill(-0.2);

    auto ra = train_joint(x, s, graphs, pa, cfg);
    auto rb = train_joint(x, s, graphs, pb, cfg);
    REQUIRE(ra.history.size() == 5);
    for (std::size_t e = 0; e < 5; ++e) {
        CHECK(ra.history[e].total == rb.history[e].total);
        CHECK(ra.history[e].kl == 0.0);
    }
    CHECK(ra.labels == rb.labels);

    // Fallback labels are exactly kmeans on the final embedding.
    auto km = kmeans(ra.embedding, cfg.clusters, cfg.seed);
    CHECK(ra.labels == km.labels);
    CHECK(max_abs_diff(ra.centers, km.centers) == 0.0);
}

TEST_CASE("train_joint: recomputing centers every epoch stays on the blobs") {
    std::vector<int> truth;
    auto x = two_blobs(30, 8, &truth);
    std::vector<double> s(30, 1.0);
    auto graphs = build_soft_graphs(x);
    auto cfg = tiny_config();
    cfg.recompute_centers = true;
    cfg.train_epochs = 6;

    AutoencoderConfig net;
    net.hidden = cfg.hidden;
    net.embedding_dim = cfg.embedding_dim;
    auto params = init_params(8, net, 5);
    pretrain(x, s, graphs, params, cfg);
    auto res = train_joint(x, s, graphs, params, cfg);
    CHECK(accuracy_hungarian(truth, res.labels) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("train_joint: validation") {
    std::vector<int> truth;
    auto x = two_blobs(8, 6, &truth);
    std::vector<double> s(8, 1.0);
    auto graphs = build_soft_graphs(x);
    AutoencoderConfig net;
    net.hidden = {4};
    net.embedding_dim = 2;

    auto cfg = tiny_config();
    cfg.hidden = {4};
    cfg.clusters = 1;
    auto p1 = init_params(6, net, 1);
    CHECK_THROWS_AS(train_joint(x, s, graphs, p1, cfg), ValueError);

    cfg.clusters = 9;
    auto p2 = init_params(6, net, 1);
    CHECK_THROWS_AS(train_joint(x, s, graphs, p2, cfg), ValueError);

    cfg.clusters = 2;
    cfg.alpha = 1.5;
    auto p3 = init_params(6, net, 1);
    CHECK_THROWS_AS(train_joint(x, s, graphs, p3, cfg), ValueError);
}

TEST_CASE("select_k: three separated blobs prefer k = 3") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 0.1);
    DenseMatrix z(45, 2);
    for (std::size_t i = 0; i < 45; ++i) {
        const int g = static_cast<int>(i / 15);
        z(i, 0) = 6.0 * g + noise(rng);
        z(i, 1) = (g == 1 ? 5.0 : 0.0) + noise(rng);
    }
    std::vector<double> scores;
    CHECK(select_k(z, 2, 5, 1, &scores) == 3);
    CHECK(scores.size() == 4);

    CHECK_THROWS_AS(select_k(z, 1, 4, 1), ValueError);
    CHECK_THROWS_AS(select_k(z, 4, 3, 1), ValueError);
    DenseMatrix small(3, 2, 0.0);
    CHECK_THROWS_AS(select_k(small, 2, 3, 1), ValueError);
}
