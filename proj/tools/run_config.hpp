#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

// Effective configuration for one CLI invocation. Defaults here, overridden by
// an INI config file, overridden again by explicit flags.
struct RunConfig {
    // io
    std::string input;
    std::string labels;
    std::string out = ".";
    std::string format = "dense-csv";
    std::string save_model;

    // preprocess
    std::size_t min_cells_per_gene = 3;
    std::size_t top_genes = 0;
    double normalize_target = 1e4;
    bool log_transform = true;
    std::string selection = "expression";

    // graph
    std::size_t max_graph_cells = 20000;

    // train
    std::size_t pretrain_epochs = 200;
    std::size_t train_epochs = 200;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double alpha = 0.7;
    double beta = 15.0;
    double gamma = 50.0;
    double mu = 1e-3;
    double lambda = 50.0;
    std::size_t clusters = 0;
    std::uint64_t seed = 0;
    std::size_t embedding_dim = 16;
    std::vector<std::size_t> hidden = {256, 64};
    bool deterministic = true;
    bool recompute_centers = false;
    // "preprocessed" fits the likelihood on X itself; "raw" fits it on the
    // original counts restricted to the kept genes.
    std::string zinb_target = "preprocessed";

    // sinkhorn
    std::size_t sinkhorn_max_iters = 500;
    double sinkhorn_tol = 1e-6;

    // simulate
    std::size_t sim_cells = 3000;
    std::size_t sim_genes = 2500;
    std::size_t sim_clusters = 6;
    bool sim_balanced = true;
    double sim_dropout = 0.0;
    double sim_de_fraction = 0.1;
    double sim_de_log_fold = 1.0;
    double sim_base_mean = 2.0;
    double sim_dispersion = 2.0;
};

// Applies "section.key = value" pairs from an INI document onto cfg.
// Unknown sections or keys are errors so typos cannot silently fall back to
// defaults.
void apply_config_file(RunConfig& cfg, const std::string& path);

// Serializes every effective value; apply_config_file on the result
// reconstructs cfg exactly.
std::string render_config(const RunConfig& cfg);

// Comma-separated positive integers, e.g. "256,64".
std::vector<std::size_t> parse_hidden_list(const std::string& text);
