#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "sgc/io.hpp"

namespace fs = std::filesystem;

namespace {

struct RunOutcome {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_root() {
    auto dir = fs::temp_directory_path() / "sgc_cli_tests";
    fs::create_directories(dir);
    return dir;
}

fs::path fresh_dir(const std::string& name) {
    auto dir = scratch_root() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunOutcome run_cli(const std::string& args) {
    auto dir = scratch_root();
    auto out_path = dir / "stdout.txt";
    auto err_path = dir / "stderr.txt";
    std::string cmd = std::string(SGC_CLI_PATH) + " " + args + " > " + out_path.string() +
                      " 2> " + err_path.string();
    int status = std::system(cmd.c_str());
    RunOutcome r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

// Shape of a headerless numeric CSV. load_matrix is a count loader and
// rejects the negative values an embedding can hold, so parse directly.
std::pair<std::size_t, std::size_t> csv_shape(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t fields = 1;
        for (char c : line)
            if (c == ',') ++fields;
        if (rows == 0) {
            cols = fields;
        } else {
            REQUIRE(fields == cols);
        }
        ++rows;
    }
    return {rows, cols};
}

// Small simulated dataset shared by the cluster/select-k cases.
fs::path simulated_input() {
    static fs::path dir;
    if (dir.empty()) {
        dir = fresh_dir("sim_shared");
        auto r = run_cli("simulate --cells 60 --genes 30 --clusters 3 --dropout 0.1 --seed 5 --out " +
                         dir.string());
        REQUIRE(r.exit_code == 0);
    }
    return dir;
}

const std::string kFastTrain =
    " --pretrain-epochs 4 --train-epochs 4 --hidden 8 --embedding-dim 2 --clusters 3";

}  // namespace

TEST_CASE("cli: no subcommand is an error") {
    auto r = run_cli("");
    CHECK(r.exit_code != 0);
}

TEST_CASE("cli simulate: writes the matrix, labels, and echoed config") {
    auto dir = fresh_dir("sim_basic");
    auto r = run_cli("simulate --cells 50 --genes 20 --clusters 4 --dropout 0.2 --seed 7 --out " +
                     dir.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("cells 50") != std::string::npos);
    CHECK(r.out.find("genes 20") != std::string::npos);
    CHECK(r.out.find("sparsity") != std::string::npos);

    auto data = sgc::load_matrix((dir / "matrix.csv").string(), sgc::MatrixFormat::DenseCsv);
    CHECK(data.counts.rows() == 50);
    CHECK(data.counts.cols() == 20);
    auto labels = sgc::load_labels((dir / "labels.csv").string(), 50);
    CHECK(labels.size() == 50);
    CHECK(slurp(dir / "config_used.ini").find("clusters = 4") != std::string::npos);
}

TEST_CASE("cli simulate: same seed reruns byte-identical") {
    auto a = fresh_dir("sim_a");
    auto b = fresh_dir("sim_b");
    std::string args = "simulate --cells 40 --genes 15 --clusters 2 --dropout 0.3 --seed 11 --out ";
    REQUIRE(run_cli(args + a.string()).exit_code == 0);
    REQUIRE(run_cli(args + b.string()).exit_code == 0);
    CHECK(slurp(a / "matrix.csv") == slurp(b / "matrix.csv"));
    CHECK(slurp(a / "labels.csv") == slurp(b / "labels.csv"));
}

TEST_CASE("cli cluster: produces labels, embedding, log, config, and metrics") {
    auto input = simulated_input();
    auto out = fresh_dir("cluster_basic");
    auto r = run_cli("cluster --input " + (input / "matrix.csv").string() + " --labels " +
                     (input / "labels.csv").string() + kFastTrain + " --seed 2 --out " +
                     out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("\"ari\"") != std::string::npos);

    auto labels = sgc::load_labels((out / "labels.csv").string(), 60);
    CHECK(labels.size() == 60);
    for (int l : labels) {
        CHECK(l >= 0);
        CHECK(l < 3);
    }
    auto [emb_rows, emb_cols] = csv_shape(out / "embedding.csv");
    CHECK(emb_rows == 60);
    CHECK(emb_cols == 2);

    auto log = slurp(out / "training_log.csv");
    CHECK(log.rfind("epoch,l_ncut,l_zinb,l_kl,total\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : log)
        if (c == '\n') ++lines;
    CHECK(lines == 1 + 4 + 4);

    auto ini = slurp(out / "config_used.ini");
    CHECK(ini.find("clusters = 3") != std::string::npos);
    CHECK(ini.find("embedding_dim = 2") != std::string::npos);
    CHECK(slurp(out / "metrics.json").find("\"n_cells\": 60") != std::string::npos);
}

TEST_CASE("cli cluster: reruns are byte-identical") {
    auto input = simulated_input();
    auto a = fresh_dir("cluster_a");
    auto b = fresh_dir("cluster_b");
    std::string args = "cluster --input " + (input / "matrix.csv").string() + kFastTrain +
                       " --seed 3 --out ";
    REQUIRE(run_cli(args + a.string()).exit_code == 0);
    REQUIRE(run_cli(args + b.string()).exit_code == 0);
    auto la = slurp(a / "labels.csv");
    CHECK(!la.empty());
    CHECK(la == slurp(b / "labels.csv"));
    CHECK(slurp(a / "embedding.csv") == slurp(b / "embedding.csv"));
    CHECK(slurp(a / "training_log.csv") == slurp(b / "training_log.csv"));
}

TEST_CASE("cli cluster: raw likelihood target is accepted and recorded") {
    auto input = simulated_input();
    auto out = fresh_dir("cluster_raw");
    auto r = run_cli("cluster --input " + (input / "matrix.csv").string() + kFastTrain +
                     " --zinb-target raw --seed 2 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(out / "config_used.ini").find("zinb_target = raw") != std::string::npos);
}

TEST_CASE("cli cluster: a missing input fails without writing outputs") {
    auto out = fresh_dir("cluster_missing");
    auto r = run_cli("cluster --input /nonexistent/matrix.csv" + kFastTrain + " --out " +
                     out.string());
    CHECK(r.exit_code != 0);
    CHECK(!r.err.empty());
    CHECK(!fs::exists(out / "labels.csv"));
}

TEST_CASE("cli cluster: config file values apply and flags override them") {
    auto input = simulated_input();
    auto out = fresh_dir("cluster_config");
    auto cfg_path = scratch_root() / "run.ini";
    {
        std::ofstream cfg(cfg_path);
        cfg << "[train]\n"
            << "clusters = 2\n"
            << "pretrain_epochs = 4\n"
            << "train_epochs = 4\n"
            << "hidden = 8\n"
            << "embedding_dim = 2\n"
            << "gamma = 10\n";
    }
    auto r = run_cli("cluster --config " + cfg_path.string() + " --input " +
                     (input / "matrix.csv").string() + " --clusters 3 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    auto ini = slurp(out / "config_used.ini");
    // The flag wins over the file; untouched file values survive.
    CHECK(ini.find("clusters = 3") != std::string::npos);
    CHECK(ini.find("gamma = 10") != std::string::npos);
    CHECK(ini.find("hidden = 8") != std::string::npos);
}

TEST_CASE("cli cluster: unknown config keys are rejected with the line number") {
    auto input = simulated_input();
    auto cfg_path = scratch_root() / "bad.ini";
    {
        std::ofstream cfg(cfg_path);
        cfg << "[train]\n"
            << "cluster_count = 3\n";
    }
    auto r = run_cli("cluster --config " + cfg_path.string() + " --input " +
                     (input / "matrix.csv").string() + " --out " +
                     fresh_dir("cluster_badcfg").string());
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("cluster_count") != std::string::npos);
    CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("cli eval: scores a prediction against a reference") {
    auto dir = fresh_dir("eval");
    sgc::write_labels((dir / "truth.csv").string(), {0, 0, 1, 1, 2, 2});
    sgc::write_labels((dir / "pred_perm.csv").string(), {2, 2, 0, 0, 1, 1});
    sgc::write_labels((dir / "pred_bad.csv").string(), {0, 1, 0, 1, 0, 1});
    sgc::write_labels((dir / "pred_short.csv").string(), {0, 1});

    SUBCASE("a relabeled perfect prediction scores 1 everywhere") {
        auto r = run_cli("eval --input " + (dir / "pred_perm.csv").string() + " --labels " +
                         (dir / "truth.csv").string() + " --out " + (dir / "out1").string());
        REQUIRE(r.exit_code == 0);
        CHECK(r.out.find("\"acc\": 1") != std::string::npos);
        CHECK(r.out.find("\"ari\": 1") != std::string::npos);
        CHECK(fs::exists(dir / "out1" / "metrics.json"));
    }
    SUBCASE("a poor prediction scores low") {
        auto r = run_cli("eval --input " + (dir / "pred_bad.csv").string() + " --labels " +
                         (dir / "truth.csv").string() + " --out " + (dir / "out2").string());
        REQUIRE(r.exit_code == 0);
        CHECK(r.out.find("\"n_clusters_pred\": 2") != std::string::npos);
    }
    SUBCASE("length mismatch is an error") {
        auto r = run_cli("eval --input " + (dir / "pred_short.csv").string() + " --labels " +
                         (dir / "truth.csv").string() + " --out " + (dir / "out3").string());
        CHECK(r.exit_code != 0);
        CHECK(!r.err.empty());
    }
}

TEST_CASE("cli select-k: sweeps silhouettes and reports the best k") {
    auto input = simulated_input();
    auto out = fresh_dir("selectk");
    auto r = run_cli("select-k --input " + (input / "matrix.csv").string() +
                     " --k-min 2 --k-max 4 --pretrain-epochs 4 --hidden 8 --embedding-dim 2" +
                     " --seed 2 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("best_k ") != std::string::npos);
    auto table = slurp(out / "select_k.csv");
    CHECK(table.rfind("k,silhouette\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : table)
        if (c == '\n') ++lines;
    CHECK(lines == 4);
}
