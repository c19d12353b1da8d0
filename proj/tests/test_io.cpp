#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "helpers.hpp"
#include "sgc/errors.hpp"
#include "sgc/io.hpp"

using namespace sgc;
namespace fs = std::filesystem;

namespace {

// Unique scratch dir per test binary run; removed at process exit is not
// guaranteed, so names are deterministic and files are overwritten.
fs::path scratch() {
    fs::path p = fs::temp_directory_path() / "sgc_test_io";
    fs::create_directories(p);
    return p;
}

std::string write_temp(const char* name, const std::string& content) {
    fs::path p = scratch() / name;
    std::ofstream out(p);
    out << content;
    out.close();
    return p.string();
}

}  // namespace

TEST_CASE("load_matrix: plain dense csv") {
    auto path = write_temp("plain.csv", "1,0\n0,2\n");
    auto m = load_matrix(path, MatrixFormat::DenseCsv);
    CHECK(m.counts.rows() == 2);
    CHECK(m.counts.cols() == 2);
    CHECK(m.counts(0, 0) == 1.0);
    CHECK(m.counts(0, 1) == 0.0);
    CHECK(m.counts(1, 0) == 0.0);
    CHECK(m.counts(1, 1) == 2.0);
    // Synthesized identifiers.
    CHECK(m.cell_ids.size() == 2);
    CHECK(m.gene_ids.size() == 2);
    CHECK(m.cell_ids[0] == "cell_0");
    CHECK(m.gene_ids[1] == "gene_1");
}

TEST_CASE("load_matrix: header row and id column are auto-detected") {
    auto path = write_temp("ids.csv", "id,gA,gB\nc1,1,2\nc2,3,4\n");
    auto m = load_matrix(path, MatrixFormat::DenseCsv);
    CHECK(m.counts.rows() == 2);
    CHECK(m.counts.cols() == 2);
    CHECK(m.gene_ids == std::vector<std::string>{"gA", "gB"});
    CHECK(m.cell_ids == std::vector<std::string>{"c1", "c2"});
    CHECK(m.counts(1, 0) == 3.0);
}

TEST_CASE("load_matrix: sparse triplet expands against declared shape") {
    auto path = write_temp("sp.txt", "3 3 1\n1 1 5\n");
    auto m = load_matrix(path, MatrixFormat::SparseTriplet);
    CHECK(m.counts.rows() == 3);
    CHECK(m.counts.cols() == 3);
    CHECK(m.counts(0, 0) == 5.0);
    double total = 0.0;
    for (std::size_t i = 0; i < m.counts.size(); ++i) total += m.counts.data()[i];
    CHECK(total == 5.0);
}

TEST_CASE("load_matrix: sparse triplet duplicate coordinates accumulate") {
    auto path = write_temp("spdup.txt", "2 2 2\n1 2 1\n1 2 3\n");
    auto m = load_matrix(path, MatrixFormat::SparseTriplet);
    CHECK(m.counts(0, 1) == 4.0);
}

TEST_CASE("load_matrix: error contracts carry line numbers") {
    SUBCASE("negative count") {
        auto path = write_temp("neg.csv", "1,2\n3,-1\n");
        CHECK_THROWS_AS(load_matrix(path, MatrixFormat::DenseCsv), ParseError);
        try {
            load_matrix(path, MatrixFormat::DenseCsv);
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }
    SUBCASE("ragged row") {
        auto path = write_temp("ragged.csv", "1,2\n3\n");
        CHECK_THROWS_AS(load_matrix(path, MatrixFormat::DenseCsv), ParseError);
    }
    SUBCASE("sparse index out of declared range") {
        auto path = write_temp("sprange.txt", "2 2 1\n3 1 1\n");
        CHECK_THROWS_AS(load_matrix(path, MatrixFormat::SparseTriplet), ParseError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_matrix((scratch() / "no_such_file.csv").string(),
                                    MatrixFormat::DenseCsv),
                        IoError);
    }
    SUBCASE("unknown format name") { CHECK_THROWS_AS(parse_format("hdf5"), ValueError); }
}

TEST_CASE("load_labels: reads one label per line and checks the count") {
    auto path = write_temp("lab.txt", "0\n1\n2\n");
    auto l = load_labels(path);
    CHECK(l == std::vector<int>{0, 1, 2});
    CHECK_THROWS_AS(load_labels(path, 5), ValueError);
}

TEST_CASE("preprocess: size factors from raw totals, median based") {
    // Raw totals 100, 200, 300 -> factors 0.5, 1.0, 1.5.
    DenseMatrix counts(3, 4);
    double rows[3][4] = {{25, 25, 25, 25}, {50, 50, 50, 50}, {75, 75, 75, 75}};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) counts(i, j) = rows[i][j];
    ExpressionMatrix raw{counts, {"a", "b", "c", "d"}, {"c0", "c1", "c2"}, std::nullopt};
    PreprocessConfig cfg;
    cfg.min_cells_per_gene = 1;
    auto pp = preprocess(raw, cfg);
    REQUIRE(pp.size_factors.size() == 3);
    CHECK(pp.size_factors[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pp.size_factors[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pp.size_factors[2] == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("preprocess: normalization and log1p") {
    DenseMatrix counts = testutil::from_rows({{1, 3}, {2, 2}});
    ExpressionMatrix raw{counts, {"g0", "g1"}, {"c0", "c1"}, std::nullopt};
    PreprocessConfig cfg;
    cfg.min_cells_per_gene = 1;
    cfg.normalize_target = 4.0;
    auto pp = preprocess(raw, cfg);
    // Each cell totals 4 already, so scaling is the identity and entries are
    // log1p of the raw values.
    CHECK(pp.x(0, 0) == doctest::Approx(std::log1p(1.0)).epsilon(1e-12));
    CHECK(pp.x(0, 1) == doctest::Approx(std::log1p(3.0)).epsilon(1e-12));
    CHECK(pp.x(1, 0) == doctest::Approx(std::log1p(2.0)).epsilon(1e-12));

    cfg.log_transform = false;
    auto lin = preprocess(raw, cfg);
    CHECK(lin.x(0, 1) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("preprocess: gene filter drops genes expressed in too few cells") {
    // Gene 1 is expressed in two cells only.
    DenseMatrix counts = testutil::from_rows({{5, 1, 3}, {5, 1, 3}, {5, 0, 3}});
    ExpressionMatrix raw{counts, {"g0", "g1", "g2"}, {}, std::nullopt};
    PreprocessConfig cfg;
    cfg.min_cells_per_gene = 3;
    auto pp = preprocess(raw, cfg);
    CHECK(pp.kept_genes == std::vector<std::size_t>{0, 2});
    CHECK(pp.gene_ids == std::vector<std::string>{"g0", "g2"});
    CHECK(pp.x.cols() == 2);
}

TEST_CASE("preprocess: top-gene restriction keeps the largest columns") {
    DenseMatrix counts = testutil::from_rows({{1, 10, 2, 1}, {1, 10, 3, 1}});
    ExpressionMatrix raw{counts, {"g0", "g1", "g2", "g3"}, {}, std::nullopt};
    PreprocessConfig cfg;
    cfg.min_cells_per_gene = 1;
    cfg.top_genes = 2;
    auto pp = preprocess(raw, cfg);
    CHECK(pp.kept_genes == std::vector<std::size_t>{1, 2});
    // Indices stay strictly increasing regardless of ranking order.
    CHECK(pp.kept_genes[0] < pp.kept_genes[1]);
}

TEST_CASE("preprocess: variance selection is exposed behind the config switch") {
    // Column 0 has large total but no variance; column 1 varies.
    DenseMatrix counts = testutil::from_rows({{50, 1, 1}, {50, 9, 1}});
    ExpressionMatrix raw{counts, {"g0", "g1", "g2"}, {}, std::nullopt};
    PreprocessConfig cfg;
    cfg.min_cells_per_gene = 1;
    cfg.top_genes = 1;
    cfg.selection = GeneSelection::Variance;
    auto pp = preprocess(raw, cfg);
    CHECK(pp.kept_genes == std::vector<std::size_t>{1});
}

TEST_CASE("preprocess: gene selection is idempotent") {
    std::mt19937_64 rng(11);
    DenseMatrix counts = testutil::random_matrix(20, 30, rng, 0.0, 6.0);
    for (std::size_t i = 0; i < counts.size(); ++i) counts.data()[i] = std::floor(counts.data()[i]);
    ExpressionMatrix raw{counts, {}, {}, std::nullopt};
    PreprocessConfig cfg;
    cfg.top_genes = 12;
    auto pp = preprocess(raw, cfg);

    // Re-run on the selected raw columns: every gene must survive.
    DenseMatrix again(counts.rows(), pp.kept_genes.size());
    for (std::size_t i = 0; i < counts.rows(); ++i)
        for (std::size_t j = 0; j < pp.kept_genes.size(); ++j)
            again(i, j) = counts(i, pp.kept_genes[j]);
    ExpressionMatrix raw2{again, {}, {}, std::nullopt};
    auto pp2 = preprocess(raw2, cfg);
    CHECK(pp2.x.cols() == pp.x.cols());
    for (std::size_t j = 0; j < pp2.kept_genes.size(); ++j) CHECK(pp2.kept_genes[j] == j);
}

TEST_CASE("preprocess: output is nonnegative") {
    std::mt19937_64 rng(5);
    DenseMatrix counts = testutil::random_matrix(15, 25, rng, 0.0, 9.0);
    ExpressionMatrix raw{counts, {}, {}, std::nullopt};
    auto pp = preprocess(raw, PreprocessConfig{});
    for (std::size_t i = 0; i < pp.x.size(); ++i) CHECK(pp.x.data()[i] >= 0.0);
}

TEST_CASE("preprocess: error contracts") {
    SUBCASE("zero-total cell names the offender") {
        DenseMatrix counts = testutil::from_rows({{1, 2}, {0, 0}});
        ExpressionMatrix raw{counts, {}, {"good", "empty"}, std::nullopt};
        PreprocessConfig cfg;
        cfg.min_cells_per_gene = 1;
        try {
            preprocess(raw, cfg);
            FAIL("expected ValueError");
        } catch (const ValueError& e) {
            CHECK(std::string(e.what()).find("empty") != std::string::npos);
        }
    }
    SUBCASE("all genes filtered") {
        DenseMatrix counts = testutil::from_rows({{1, 0}, {0, 1}});
        ExpressionMatrix raw{counts, {}, {}, std::nullopt};
        PreprocessConfig cfg;
        cfg.min_cells_per_gene = 2;
        CHECK_THROWS_AS(preprocess(raw, cfg), ValueError);
    }
    SUBCASE("top_genes beyond the surviving gene count") {
        DenseMatrix counts = testutil::from_rows({{1, 1}, {1, 1}});
        ExpressionMatrix raw{counts, {}, {}, std::nullopt};
        PreprocessConfig cfg;
        cfg.min_cells_per_gene = 1;
        cfg.top_genes = 5;
        CHECK_THROWS_AS(preprocess(raw, cfg), ValueError);
    }
}

TEST_CASE("write_dense_csv round-trips through load_matrix") {
    std::mt19937_64 rng(17);
    DenseMatrix m = testutil::random_matrix(6, 4, rng, 0.0, 20.0);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = std::round(m.data()[i]);
    std::vector<std::string> genes{"g0", "g1", "g2", "g3"};
    std::vector<std::string> cells{"c0", "c1", "c2", "c3", "c4", "c5"};
    auto path = (scratch() / "roundtrip.csv").string();
    write_dense_csv(path, m, genes, cells);
    auto back = load_matrix(path, MatrixFormat::DenseCsv);
    CHECK(back.gene_ids == genes);
    CHECK(back.cell_ids == cells);
    REQUIRE(back.counts.same_shape(m));
    CHECK(max_abs_diff(back.counts, m) == 0.0);
}

TEST_CASE("write_labels round-trips through load_labels") {
    std::vector<int> labels{3, 1, 4, 1, 5};
    auto path = (scratch() / "labels_rt.csv").string();
    write_labels(path, labels);
    CHECK(load_labels(path) == labels);
}

TEST_CASE("writers never leave a partial file behind on unwritable paths") {
    CHECK_THROWS_AS(write_text_file("/no_such_dir_anywhere/out.txt", "x"), IoError);
}
