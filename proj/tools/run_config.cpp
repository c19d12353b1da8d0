#include "run_config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sgc/errors.hpp"

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

double parse_double(const std::string& v, const std::string& key, std::size_t line) {
    errno = 0;
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (errno != 0 || end == v.c_str() || *end != '\0')
        throw sgc::ParseError("config: bad numeric value '" + v + "' for " + key, line);
    return x;
}

std::size_t parse_size(const std::string& v, const std::string& key, std::size_t line) {
    errno = 0;
    char* end = nullptr;
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (errno != 0 || end == v.c_str() || *end != '\0' || v[0] == '-')
        throw sgc::ParseError("config: bad integer value '" + v + "' for " + key, line);
    return static_cast<std::size_t>(x);
}

bool parse_bool(const std::string& v, const std::string& key, std::size_t line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw sgc::ParseError("config: bad boolean value '" + v + "' for " + key, line);
}

std::vector<std::size_t> parse_size_list(const std::string& v, const std::string& key,
                                         std::size_t line) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty())
            throw sgc::ParseError("config: empty element in list for " + key, line);
        out.push_back(parse_size(tok, key, line));
    }
    if (out.empty()) throw sgc::ParseError("config: empty list for " + key, line);
    return out;
}

std::string render_size_list(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::string render_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

using Setter = std::function<void(RunConfig&, const std::string&, std::size_t)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"io.input", [](RunConfig& c, const std::string& v, std::size_t) { c.input = v; }},
        {"io.labels", [](RunConfig& c, const std::string& v, std::size_t) { c.labels = v; }},
        {"io.out", [](RunConfig& c, const std::string& v, std::size_t) { c.out = v; }},
        {"io.format", [](RunConfig& c, const std::string& v, std::size_t) { c.format = v; }},
        {"io.save_model",
         [](RunConfig& c, const std::string& v, std::size_t) { c.save_model = v; }},
        {"preprocess.min_cells_per_gene",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.min_cells_per_gene = parse_size(v, "min_cells_per_gene", l);
         }},
        {"preprocess.top_genes",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.top_genes = parse_size(v, "top_genes", l);
         }},
        {"preprocess.normalize_target",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.normalize_target = parse_double(v, "normalize_target", l);
         }},
        {"preprocess.log_transform",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.log_transform = parse_bool(v, "log_transform", l);
         }},
        {"preprocess.selection",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             if (v != "expression" && v != "variance")
                 throw sgc::ParseError("config: selection must be expression or variance", l);
             c.selection = v;
         }},
        {"graph.max_cells",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.max_graph_cells = parse_size(v, "max_cells", l);
         }},
        {"train.pretrain_epochs",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.pretrain_epochs = parse_size(v, "pretrain_epochs", l);
         }},
        {"train.train_epochs",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.train_epochs = parse_size(v, "train_epochs", l);
         }},
        {"train.learning_rate",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.learning_rate = parse_double(v, "learning_rate", l);
         }},
        {"train.weight_decay",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.weight_decay = parse_double(v, "weight_decay", l);
         }},
        {"train.alpha",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.alpha = parse_double(v, "alpha", l);
         }},
        {"train.beta",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.beta = parse_double(v, "beta", l);
         }},
        {"train.gamma",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.gamma = parse_double(v, "gamma", l);
         }},
        {"train.mu",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.mu = parse_double(v, "mu", l);
         }},
        {"train.lambda",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.lambda = parse_double(v, "lambda", l);
         }},
        {"train.clusters",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.clusters = parse_size(v, "clusters", l);
         }},
        {"train.seed",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.seed = parse_size(v, "seed", l);
         }},
        {"train.embedding_dim",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.embedding_dim = parse_size(v, "embedding_dim", l);
         }},
        {"train.hidden",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.hidden = parse_size_list(v, "hidden", l);
         }},
        {"train.deterministic",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.deterministic = parse_bool(v, "deterministic", l);
         }},
        {"train.recompute_centers",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.recompute_centers = parse_bool(v, "recompute_centers", l);
         }},
        {"train.zinb_target",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             if (v != "preprocessed" && v != "raw")
                 throw sgc::ParseError("config: zinb_target must be preprocessed or raw", l);
             c.zinb_target = v;
         }},
        {"sinkhorn.max_iters",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sinkhorn_max_iters = parse_size(v, "max_iters", l);
         }},
        {"sinkhorn.tol",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sinkhorn_tol = parse_double(v, "tol", l);
         }},
        {"simulate.cells",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sim_cells = parse_size(v, "cells", l);
         }},
        {"simulate.genes",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sim_genes = parse_size(v, "genes", l);
         }},
        {"simulate.clusters",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sim_clusters = parse_size(v, "clusters", l);
         }},
        {"simulate.balanced",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sim_balanced = parse_bool(v, "balanced", l);
         }},
        {"simulate.dropout",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sim_dropout = parse_double(v, "dropout", l);
         }},
        {"simulate.de_fraction",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sim_de_fraction = parse_double(v, "de_fraction", l);
         }},
        {"simulate.de_log_fold",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sim_de_log_fold = parse_double(v, "de_log_fold", l);
         }},
        {"simulate.base_mean",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sim_base_mean = parse_double(v, "base_mean", l);
         }},
        {"simulate.dispersion",
         [](RunConfig& c, const std::string& v, std::size_t l) {
             c.sim_dispersion = parse_double(v, "dispersion", l);
         }},
    };
    return table;
}

}  // namespace

std::vector<std::size_t> parse_hidden_list(const std::string& text) {
    return parse_size_list(text, "hidden", 0);
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw sgc::IoError("config: cannot open '" + path + "'");
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw sgc::ParseError("config: malformed section header '" + t + "'", lineno);
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw sgc::ParseError("config: empty section name", lineno);
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw sgc::ParseError("config: expected key = value, got '" + t + "'", lineno);
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw sgc::ParseError("config: empty key", lineno);
        if (section.empty())
            throw sgc::ParseError("config: key '" + key + "' outside any section", lineno);
        std::string qualified = section + "." + key;
        auto it = setters().find(qualified);
        if (it == setters().end())
            throw sgc::ParseError("config: unknown key '" + qualified + "'", lineno);
        it->second(cfg, value, lineno);
    }
}

std::string render_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "[io]\n";
    os << "input = " << cfg.input << "\n";
    os << "labels = " << cfg.labels << "\n";
    os << "out = " << cfg.out << "\n";
    os << "format = " << cfg.format << "\n";
    os << "save_model = " << cfg.save_model << "\n";
    os << "\n[preprocess]\n";
    os << "min_cells_per_gene = " << cfg.min_cells_per_gene << "\n";
    os << "top_genes = " << cfg.top_genes << "\n";
    os << "normalize_target = " << render_double(cfg.normalize_target) << "\n";
    os << "log_transform = " << (cfg.log_transform ? "true" : "false") << "\n";
    os << "selection = " << cfg.selection << "\n";
    os << "\n[graph]\n";
    os << "max_cells = " << cfg.max_graph_cells << "\n";
    os << "\n[train]\n";
    os << "pretrain_epochs = " << cfg.pretrain_epochs << "\n";
    os << "train_epochs = " << cfg.train_epochs << "\n";
    os << "learning_rate = " << render_double(cfg.learning_rate) << "\n";
    os << "weight_decay = " << render_double(cfg.weight_decay) << "\n";
    os << "alpha = " << render_double(cfg.alpha) << "\n";
    os << "beta = " << render_double(cfg.beta) << "\n";
    os << "gamma = " << render_double(cfg.gamma) << "\n";
    os << "mu = " << render_double(cfg.mu) << "\n";
    os << "lambda = " << render_double(cfg.lambda) << "\n";
    os << "clusters = " << cfg.clusters << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "embedding_dim = " << cfg.embedding_dim << "\n";
    os << "hidden = " << render_size_list(cfg.hidden) << "\n";
    os << "deterministic = " << (cfg.deterministic ? "true" : "false") << "\n";
    os << "recompute_centers = " << (cfg.recompute_centers ? "true" : "false") << "\n";
    os << "zinb_target = " << cfg.zinb_target << "\n";
    os << "\n[sinkhorn]\n";
    os << "max_iters = " << cfg.sinkhorn_max_iters << "\n";
    os << "tol = " << render_double(cfg.sinkhorn_tol) << "\n";
    os << "\n[simulate]\n";
    os << "cells = " << cfg.sim_cells << "\n";
    os << "genes = " << cfg.sim_genes << "\n";
    os << "clusters = " << cfg.sim_clusters << "\n";
    os << "balanced = " << (cfg.sim_balanced ? "true" : "false") << "\n";
    os << "dropout = " << render_double(cfg.sim_dropout) << "\n";
    os << "de_fraction = " << render_double(cfg.sim_de_fraction) << "\n";
    os << "de_log_fold = " << render_double(cfg.sim_de_log_fold) << "\n";
    os << "base_mean = " << render_double(cfg.sim_base_mean) << "\n";
    os << "dispersion = " << render_double(cfg.sim_dispersion) << "\n";
    return os.str();
}
