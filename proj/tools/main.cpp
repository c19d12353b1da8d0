#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "run_config.hpp"
#include "sgc/autodiff.hpp"
#include "sgc/errors.hpp"
#include "sgc/io.hpp"
#include "sgc/metrics.hpp"
#include "sgc/simdata.hpp"
#include "sgc/softgraph.hpp"
#include "sgc/trainer.hpp"
#include "sgc/zinb.hpp"

namespace fs = std::filesystem;

namespace {

// Every flag is optional at the CLI layer; set values override the config
// file, which overrides RunConfig defaults.
struct Overrides {
    std::optional<std::string> config;
    std::optional<std::string> input;
    std::optional<std::string> labels;
    std::optional<std::string> out;
    std::optional<std::string> format;
    std::optional<std::string> save_model;
    std::optional<std::string> selection;
    std::optional<std::string> hidden;
    std::optional<std::size_t> clusters;
    std::optional<std::size_t> top_genes;
    std::optional<std::size_t> min_cells_per_gene;
    std::optional<std::size_t> seed;
    std::optional<std::size_t> pretrain_epochs;
    std::optional<std::size_t> train_epochs;
    std::optional<std::size_t> embedding_dim;
    std::optional<std::size_t> sinkhorn_max_iters;
    std::optional<std::size_t> max_graph_cells;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<double> gamma;
    std::optional<double> mu;
    std::optional<double> lambda;
    std::optional<double> learning_rate;
    std::optional<double> weight_decay;
    std::optional<double> normalize_target;
    std::optional<double> sinkhorn_tol;
    std::optional<bool> deterministic;
    std::optional<bool> log_transform;
    std::optional<bool> recompute_centers;
    std::optional<std::string> zinb_target;
    std::optional<std::size_t> sim_cells;
    std::optional<std::size_t> sim_genes;
    std::optional<std::size_t> sim_clusters;
    std::optional<bool> sim_balanced;
    std::optional<double> sim_dropout;
    std::optional<double> sim_de_fraction;
    std::optional<double> sim_de_log_fold;
    std::optional<double> sim_base_mean;
    std::optional<double> sim_dispersion;
    std::size_t k_min = 2;
    std::size_t k_max = 10;
};

void add_common_flags(CLI::App* sub, Overrides& ov) {
    sub->add_option("--config", ov.config, "INI config file; flags override its values");
    sub->add_option("--out", ov.out, "output directory");
    sub->add_option("--seed", ov.seed, "RNG seed");
    sub->add_option("--deterministic", ov.deterministic,
                    "bitwise-reproducible reductions (true/false)");
}

void add_input_flags(CLI::App* sub, Overrides& ov) {
    sub->add_option("--input", ov.input, "input matrix path");
    sub->add_option("--labels", ov.labels, "reference labels path");
    sub->add_option("--format", ov.format, "input format: dense-csv or sparse-triplet");
}

void add_preprocess_flags(CLI::App* sub, Overrides& ov) {
    sub->add_option("--top-genes", ov.top_genes, "keep this many genes after filtering (0 = all)");
    sub->add_option("--min-cells-per-gene", ov.min_cells_per_gene,
                    "drop genes expressed in fewer cells");
    sub->add_option("--normalize-target", ov.normalize_target, "per-cell total after scaling");
    sub->add_option("--log-transform", ov.log_transform, "apply log1p (true/false)");
    sub->add_option("--selection", ov.selection, "gene ranking: expression or variance");
}

void add_train_flags(CLI::App* sub, Overrides& ov) {
    sub->add_option("--clusters", ov.clusters, "number of clusters");
    sub->add_option("--alpha", ov.alpha, "graph channel mix in [0,1]");
    sub->add_option("--beta", ov.beta, "embedding orthogonality weight");
    sub->add_option("--gamma", ov.gamma, "reconstruction weight");
    sub->add_option("--mu", ov.mu, "transport alignment weight");
    sub->add_option("--lambda", ov.lambda, "transport entropy trade-off");
    sub->add_option("--weight-decay", ov.weight_decay, "decoupled weight decay");
    sub->add_option("--learning-rate", ov.learning_rate, "optimizer step size");
    sub->add_option("--pretrain-epochs", ov.pretrain_epochs, "phase 1 epochs");
    sub->add_option("--train-epochs", ov.train_epochs, "phase 2 epochs");
    sub->add_option("--embedding-dim", ov.embedding_dim, "latent width");
    sub->add_option("--hidden", ov.hidden, "comma-separated hidden widths, e.g. 256,64");
    sub->add_option("--sinkhorn-max-iters", ov.sinkhorn_max_iters, "transport iteration cap");
    sub->add_option("--sinkhorn-tol", ov.sinkhorn_tol, "transport marginal tolerance");
    sub->add_option("--max-graph-cells", ov.max_graph_cells, "dense graph size cap");
    sub->add_option("--recompute-centers", ov.recompute_centers,
                    "re-derive centers by kmeans each epoch (true/false)");
    sub->add_option("--zinb-target", ov.zinb_target,
                    "likelihood target: preprocessed or raw");
    sub->add_option("--save-model", ov.save_model, "write a checkpoint to this path");
}

void add_simulate_flags(CLI::App* sub, Overrides& ov) {
    sub->add_option("--cells", ov.sim_cells, "number of cells");
    sub->add_option("--genes", ov.sim_genes, "number of genes");
    sub->add_option("--clusters", ov.sim_clusters, "number of clusters");
    sub->add_option("--balanced", ov.sim_balanced, "equal cluster sizes (true/false)");
    sub->add_option("--dropout", ov.sim_dropout, "zero-injection probability in [0,1)");
    sub->add_option("--de-fraction", ov.sim_de_fraction, "marker gene fraction per cluster");
    sub->add_option("--de-log-fold", ov.sim_de_log_fold, "marker log2 fold change");
    sub->add_option("--base-mean", ov.sim_base_mean, "baseline expression mean");
    sub->add_option("--dispersion", ov.sim_dispersion, "negative binomial dispersion");
}

RunConfig resolve(const Overrides& ov) {
    RunConfig cfg;
    if (ov.config) apply_config_file(cfg, *ov.config);
    if (ov.input) cfg.input = *ov.input;
    if (ov.labels) cfg.labels = *ov.labels;
    if (ov.out) cfg.out = *ov.out;
    if (ov.format) cfg.format = *ov.format;
    if (ov.save_model) cfg.save_model = *ov.save_model;
    if (ov.selection) cfg.selection = *ov.selection;
    if (ov.hidden) cfg.hidden = parse_hidden_list(*ov.hidden);
    if (ov.clusters) cfg.clusters = *ov.clusters;
    if (ov.top_genes) cfg.top_genes = *ov.top_genes;
    if (ov.min_cells_per_gene) cfg.min_cells_per_gene = *ov.min_cells_per_gene;
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.pretrain_epochs) cfg.pretrain_epochs = *ov.pretrain_epochs;
    if (ov.train_epochs) cfg.train_epochs = *ov.train_epochs;
    if (ov.embedding_dim) cfg.embedding_dim = *ov.embedding_dim;
    if (ov.sinkhorn_max_iters) cfg.sinkhorn_max_iters = *ov.sinkhorn_max_iters;
    if (ov.max_graph_cells) cfg.max_graph_cells = *ov.max_graph_cells;
    if (ov.alpha) cfg.alpha = *ov.alpha;
    if (ov.beta) cfg.beta = *ov.beta;
    if (ov.gamma) cfg.gamma = *ov.gamma;
    if (ov.mu) cfg.mu = *ov.mu;
    if (ov.lambda) cfg.lambda = *ov.lambda;
    if (ov.learning_rate) cfg.learning_rate = *ov.learning_rate;
    if (ov.weight_decay) cfg.weight_decay = *ov.weight_decay;
    if (ov.normalize_target) cfg.normalize_target = *ov.normalize_target;
    if (ov.sinkhorn_tol) cfg.sinkhorn_tol = *ov.sinkhorn_tol;
    if (ov.deterministic) cfg.deterministic = *ov.deterministic;
    if (ov.log_transform) cfg.log_transform = *ov.log_transform;
    if (ov.recompute_centers) cfg.recompute_centers = *ov.recompute_centers;
    if (ov.zinb_target) {
        if (*ov.zinb_target != "preprocessed" && *ov.zinb_target != "raw")
            throw sgc::ValueError("--zinb-target must be preprocessed or raw");
        cfg.zinb_target = *ov.zinb_target;
    }
    if (ov.sim_cells) cfg.sim_cells = *ov.sim_cells;
    if (ov.sim_genes) cfg.sim_genes = *ov.sim_genes;
    if (ov.sim_clusters) cfg.sim_clusters = *ov.sim_clusters;
    if (ov.sim_balanced) cfg.sim_balanced = *ov.sim_balanced;
    if (ov.sim_dropout) cfg.sim_dropout = *ov.sim_dropout;
    if (ov.sim_de_fraction) cfg.sim_de_fraction = *ov.sim_de_fraction;
    if (ov.sim_de_log_fold) cfg.sim_de_log_fold = *ov.sim_de_log_fold;
    if (ov.sim_base_mean) cfg.sim_base_mean = *ov.sim_base_mean;
    if (ov.sim_dispersion) cfg.sim_dispersion = *ov.sim_dispersion;
    return cfg;
}

sgc::PreprocessConfig preprocess_config(const RunConfig& cfg) {
    sgc::PreprocessConfig pc;
    pc.min_cells_per_gene = cfg.min_cells_per_gene;
    pc.top_genes = cfg.top_genes;
    pc.normalize_target = cfg.normalize_target;
    pc.log_transform = cfg.log_transform;
    pc.selection = cfg.selection == "variance" ? sgc::GeneSelection::Variance
                                               : sgc::GeneSelection::Expression;
    return pc;
}

sgc::TrainConfig train_config(const RunConfig& cfg) {
    sgc::TrainConfig tc;
    tc.pretrain_epochs = cfg.pretrain_epochs;
    tc.train_epochs = cfg.train_epochs;
    tc.learning_rate = cfg.learning_rate;
    tc.weight_decay = cfg.weight_decay;
    tc.alpha = cfg.alpha;
    tc.beta = cfg.beta;
    tc.gamma = cfg.gamma;
    tc.mu_weight = cfg.mu;
    tc.lambda = cfg.lambda;
    tc.clusters = cfg.clusters;
    tc.seed = cfg.seed;
    tc.embedding_dim = cfg.embedding_dim;
    tc.hidden = cfg.hidden;
    tc.sinkhorn_max_iters = cfg.sinkhorn_max_iters;
    tc.sinkhorn_tol = cfg.sinkhorn_tol;
    tc.recompute_centers = cfg.recompute_centers;
    return tc;
}

std::string join(const std::string& dir, const char* name) {
    return (fs::path(dir) / name).string();
}

void append_epoch(std::string& log, std::size_t epoch, const sgc::EpochLoss& loss) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", epoch, loss.ncut, loss.zinb,
                  loss.kl, loss.total);
    log += buf;
}

int cmd_cluster(const RunConfig& cfg) {
    if (cfg.input.empty()) throw sgc::ValueError("cluster: --input is required");
    if (cfg.clusters < 2) throw sgc::ValueError("cluster: --clusters must be at least 2");
    sgc::ad::exec_options().deterministic_reductions = cfg.deterministic;

    sgc::ExpressionMatrix raw = sgc::load_matrix(cfg.input, sgc::parse_format(cfg.format));
    std::vector<int> truth;
    if (!cfg.labels.empty()) truth = sgc::load_labels(cfg.labels, raw.counts.rows());

    sgc::PreprocessResult pp = sgc::preprocess(raw, preprocess_config(cfg));
    sgc::SoftGraphPair graphs = sgc::build_soft_graphs(pp.x, cfg.max_graph_cells);

    sgc::AutoencoderConfig ac;
    ac.hidden = cfg.hidden;
    ac.embedding_dim = cfg.embedding_dim;
    sgc::ModelParams params = sgc::init_params(pp.x.cols(), ac, cfg.seed);

    sgc::TrainConfig tc = train_config(cfg);
    sgc::DenseMatrix raw_kept;
    const sgc::DenseMatrix* target = nullptr;
    if (cfg.zinb_target == "raw") {
        raw_kept = sgc::DenseMatrix(raw.counts.rows(), pp.kept_genes.size());
        for (std::size_t i = 0; i < raw_kept.rows(); ++i)
            for (std::size_t j = 0; j < pp.kept_genes.size(); ++j)
                raw_kept(i, j) = raw.counts(i, pp.kept_genes[j]);
        target = &raw_kept;
    }
    std::string log = "epoch,l_ncut,l_zinb,l_kl,total\n";
    auto pre = sgc::pretrain(pp.x, pp.size_factors, graphs, params, tc,
                             [&](std::size_t e, const sgc::EpochLoss& l) { append_epoch(log, e, l); },
                             target);
    auto res = sgc::train_joint(pp.x, pp.size_factors, graphs, params, tc,
                                [&](std::size_t e, const sgc::EpochLoss& l) {
                                    append_epoch(log, e + cfg.pretrain_epochs, l);
                                },
                                target);
    if (res.sinkhorn_failures > 0) {
        std::cerr << "warning: transport solve hit the iteration cap in " << res.sinkhorn_failures
                  << " epoch(s)\n";
    }

    fs::create_directories(cfg.out);
    sgc::write_labels(join(cfg.out, "labels.csv"), res.labels);
    sgc::write_dense_csv(join(cfg.out, "embedding.csv"), res.embedding);
    sgc::write_text_file(join(cfg.out, "training_log.csv"), log);
    sgc::write_text_file(join(cfg.out, "config_used.ini"), render_config(cfg));
    if (!cfg.save_model.empty()) sgc::save_checkpoint(cfg.save_model, params);

    std::cout << "cells " << pp.x.rows() << "\ngenes " << pp.x.cols() << "\nclusters "
              << cfg.clusters << "\n";
    if (!truth.empty()) {
        sgc::MetricsReport rep = sgc::evaluate(truth, res.labels);
        sgc::write_text_file(join(cfg.out, "metrics.json"), sgc::to_json(rep) + "\n");
        std::cout << sgc::to_json(rep) << "\n";
    }
    return 0;
}

int cmd_simulate(const RunConfig& cfg) {
    sgc::SimConfig sc;
    sc.n_cells = cfg.sim_cells;
    sc.n_genes = cfg.sim_genes;
    sc.n_clusters = cfg.sim_clusters;
    sc.balanced = cfg.sim_balanced;
    sc.dropout_rate = cfg.sim_dropout;
    sc.de_fraction = cfg.sim_de_fraction;
    sc.de_log_fold = cfg.sim_de_log_fold;
    sc.base_mean = cfg.sim_base_mean;
    sc.dispersion = cfg.sim_dispersion;
    sc.seed = cfg.seed;

    sgc::ExpressionMatrix data = sgc::generate(sc);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < data.counts.size(); ++i)
        if (data.counts.data()[i] == 0.0) ++zeros;
    double sparsity = static_cast<double>(zeros) / static_cast<double>(data.counts.size());

    fs::create_directories(cfg.out);
    sgc::write_dense_csv(join(cfg.out, "matrix.csv"), data.counts, data.gene_ids, data.cell_ids);
    sgc::write_labels(join(cfg.out, "labels.csv"), *data.labels);
    sgc::write_text_file(join(cfg.out, "config_used.ini"), render_config(cfg));

    std::printf("cells %zu\ngenes %zu\nsparsity %.6f\n", data.counts.rows(), data.counts.cols(),
                sparsity);
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.input.empty()) throw sgc::ValueError("eval: --input (predicted labels) is required");
    if (cfg.labels.empty()) throw sgc::ValueError("eval: --labels (reference labels) is required");
    std::vector<int> pred = sgc::load_labels(cfg.input);
    std::vector<int> truth = sgc::load_labels(cfg.labels);
    sgc::MetricsReport rep = sgc::evaluate(truth, pred);
    fs::create_directories(cfg.out);
    sgc::write_text_file(join(cfg.out, "metrics.json"), sgc::to_json(rep) + "\n");
    std::cout << sgc::to_json(rep) << "\n";
    return 0;
}

int cmd_select_k(const RunConfig& cfg, std::size_t k_min, std::size_t k_max) {
    if (cfg.input.empty()) throw sgc::ValueError("select-k: --input is required");
    if (k_min < 2) throw sgc::ValueError("select-k: --k-min must be at least 2");
    if (k_max < k_min) throw sgc::ValueError("select-k: --k-max must be >= --k-min");
    sgc::ad::exec_options().deterministic_reductions = cfg.deterministic;

    sgc::ExpressionMatrix raw = sgc::load_matrix(cfg.input, sgc::parse_format(cfg.format));
    sgc::PreprocessResult pp = sgc::preprocess(raw, preprocess_config(cfg));
    sgc::SoftGraphPair graphs = sgc::build_soft_graphs(pp.x, cfg.max_graph_cells);

    sgc::AutoencoderConfig ac;
    ac.hidden = cfg.hidden;
    ac.embedding_dim = cfg.embedding_dim;
    sgc::ModelParams params = sgc::init_params(pp.x.cols(), ac, cfg.seed);
    auto pre = sgc::pretrain(pp.x, pp.size_factors, graphs, params, train_config(cfg));

    std::vector<double> scores;
    std::size_t best = sgc::select_k(pre.z, k_min, k_max, cfg.seed, &scores);

    std::string table = "k,silhouette\n";
    char buf[64];
    for (std::size_t k = k_min; k <= k_max; ++k) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", k, scores[k - k_min]);
        table += buf;
        std::printf("k %zu silhouette %.6f\n", k, scores[k - k_min]);
    }
    fs::create_directories(cfg.out);
    sgc::write_text_file(join(cfg.out, "select_k.csv"), table);
    std::printf("best_k %zu\n", best);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"soft-graph clustering toolkit for single-cell count matrices"};
    app.require_subcommand(1);
    Overrides ov;

    CLI::App* cluster = app.add_subcommand("cluster", "embed and cluster a count matrix");
    add_common_flags(cluster, ov);
    add_input_flags(cluster, ov);
    add_preprocess_flags(cluster, ov);
    add_train_flags(cluster, ov);

    CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic count matrix");
    add_common_flags(simulate, ov);
    add_simulate_flags(simulate, ov);

    CLI::App* eval = app.add_subcommand("eval", "score predicted labels against a reference");
    add_common_flags(eval, ov);
    eval->add_option("--input", ov.input, "predicted labels path");
    eval->add_option("--labels", ov.labels, "reference labels path");

    CLI::App* selectk = app.add_subcommand("select-k", "silhouette sweep on the pretrained embedding");
    add_common_flags(selectk, ov);
    add_input_flags(selectk, ov);
    add_preprocess_flags(selectk, ov);
    add_train_flags(selectk, ov);
    selectk->add_option("--k-min", ov.k_min, "smallest k to score");
    selectk->add_option("--k-max", ov.k_max, "largest k to score");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig cfg = resolve(ov);
        if (cluster->parsed()) return cmd_cluster(cfg);
        if (simulate->parsed()) return cmd_simulate(cfg);
        if (eval->parsed()) return cmd_eval(cfg);
        if (selectk->parsed()) return cmd_select_k(cfg, ov.k_min, ov.k_max);
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
