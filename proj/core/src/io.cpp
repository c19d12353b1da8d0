#include "sgc/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sgc/errors.hpp"

namespace sgc {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string::size_type start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string trimmed(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool parse_double(const std::string& tok, double& out) {
    const std::string t = trimmed(tok);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

double parse_count(const std::string& tok, std::size_t line_no) {
    double v = 0.0;
    if (!parse_double(tok, v)) throw ParseError("expected a number, got '" + trimmed(tok) + "'", line_no);
    if (!std::isfinite(v)) throw ParseError("non-finite count '" + trimmed(tok) + "'", line_no);
    if (v < 0.0) throw ParseError("negative count " + trimmed(tok), line_no);
    return v;
}

ExpressionMatrix load_dense_csv(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw ParseError("'" + path + "' is empty");

    double probe = 0.0;
    std::size_t first_data = 0;
    std::vector<std::string> header_tokens;
    {
        const auto tokens = split(lines[0], ',');
        if (!parse_double(tokens[0], probe)) {
            header_tokens = tokens;
            first_data = 1;
            if (lines.size() == 1) throw ParseError("header row without data rows", 1);
        }
    }
    const bool id_column = !parse_double(split(lines[first_data], ',')[0], probe);

    std::vector<std::string> cell_ids;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    for (std::size_t li = first_data; li < lines.size(); ++li) {
        if (lines[li].empty()) throw ParseError("blank row", li + 1);
        auto tokens = split(lines[li], ',');
        std::size_t start = 0;
        if (id_column) {
            cell_ids.push_back(trimmed(tokens[0]));
            start = 1;
        }
        if (tokens.size() <= start) throw ParseError("row has no values", li + 1);
        std::vector<double> row;
        row.reserve(tokens.size() - start);
        for (std::size_t t = start; t < tokens.size(); ++t) row.push_back(parse_count(tokens[t], li + 1));
        if (rows.empty()) {
            width = row.size();
        } else if (row.size() != width) {
            throw ParseError("ragged row: expected " + std::to_string(width) + " values, got " + std::to_string(row.size()), li + 1);
        }
        rows.push_back(std::move(row));
    }

    ExpressionMatrix out;
    out.counts = DenseMatrix(rows.size(), width);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j) out.counts(i, j) = rows[i][j];

    if (!header_tokens.empty()) {
        std::size_t skip = header_tokens.size() == width + 1 ? 1 : 0;
        if (header_tokens.size() != width + skip) {
            throw ParseError("header has " + std::to_string(header_tokens.size()) + " fields for " + std::to_string(width) + " data columns", 1);
        }
        for (std::size_t j = 0; j < width; ++j) out.gene_ids.push_back(trimmed(header_tokens[j + skip]));
    } else {
        for (std::size_t j = 0; j < width; ++j) out.gene_ids.push_back("gene_" + std::to_string(j));
    }
    if (id_column) {
        out.cell_ids = std::move(cell_ids);
    } else {
        for (std::size_t i = 0; i < rows.size(); ++i) out.cell_ids.push_back("cell_" + std::to_string(i));
    }
    return out;
}

ExpressionMatrix load_sparse_triplets(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw ParseError("'" + path + "' is empty");

    std::istringstream head(lines[0]);
    long long rows = 0, cols = 0, nnz = 0;
    if (!(head >> rows >> cols >> nnz) || rows <= 0 || cols <= 0 || nnz < 0) {
        throw ParseError("expected header 'rows cols nnz'", 1);
    }
    if (lines.size() != static_cast<std::size_t>(nnz) + 1) {
        throw ParseError("header declares " + std::to_string(nnz) + " entries but file has " + std::to_string(lines.size() - 1));
    }

    ExpressionMatrix out;
    out.counts = DenseMatrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), 0.0);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        std::istringstream ss(lines[li]);
        long long r = 0, c = 0;
        std::string vtok;
        if (!(ss >> r >> c >> vtok)) throw ParseError("expected 'row col value'", li + 1);
        std::string rest;
        if (ss >> rest) throw ParseError("trailing tokens after 'row col value'", li + 1);
        if (r < 1 || r > rows || c < 1 || c > cols) {
            throw ParseError("index (" + std::to_string(r) + "," + std::to_string(c) + ") outside declared " +
                             std::to_string(rows) + "x" + std::to_string(cols), li + 1);
        }
        out.counts(static_cast<std::size_t>(r - 1), static_cast<std::size_t>(c - 1)) += parse_count(vtok, li + 1);
    }
    for (long long j = 0; j < cols; ++j) out.gene_ids.push_back("gene_" + std::to_string(j));
    for (long long i = 0; i < rows; ++i) out.cell_ids.push_back("cell_" + std::to_string(i));
    return out;
}

std::string join_ids(const std::vector<std::string>& ids, std::size_t limit = 10) {
    std::string out;
    for (std::size_t i = 0; i < ids.size() && i < limit; ++i) {
        if (i) out += ", ";
        out += ids[i];
    }
    if (ids.size() > limit) out += ", ...";
    return out;
}

char* format_value(char* buf, std::size_t n, double v) {
    std::snprintf(buf, n, "%.17g", v);
    return buf;
}

}  // namespace

MatrixFormat parse_format(const std::string& name) {
    if (name == "dense-csv") return MatrixFormat::DenseCsv;
    if (name == "sparse-triplet") return MatrixFormat::SparseTriplet;
    throw ValueError("unknown matrix format '" + name + "' (expected dense-csv or sparse-triplet)");
}

ExpressionMatrix load_matrix(const std::string& path, MatrixFormat format) {
    switch (format) {
        case MatrixFormat::DenseCsv:
            return load_dense_csv(path);
        case MatrixFormat::SparseTriplet:
            return load_sparse_triplets(path);
    }
    throw ValueError("unhandled matrix format");
}

std::vector<int> load_labels(const std::string& path, std::size_t expected_cells) {
    const std::vector<std::string> lines = read_lines(path);
    std::vector<int> labels;
    labels.reserve(lines.size());
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const std::string t = trimmed(lines[li]);
        if (t.empty()) throw ParseError("blank label line", li + 1);
        char* end = nullptr;
        const long v = std::strtol(t.c_str(), &end, 10);
        if (end != t.c_str() + t.size()) throw ParseError("expected an integer label, got '" + t + "'", li + 1);
        if (v < 0) throw ParseError("negative label " + t, li + 1);
        labels.push_back(static_cast<int>(v));
    }
    if (expected_cells != 0 && labels.size() != expected_cells) {
        throw ValueError("label file has " + std::to_string(labels.size()) + " entries for " +
                         std::to_string(expected_cells) + " cells");
    }
    return labels;
}

PreprocessResult preprocess(const ExpressionMatrix& raw, const PreprocessConfig& cfg) {
    const DenseMatrix& counts = raw.counts;
    const std::size_t n = counts.rows();
    const std::size_t d = counts.cols();
    if (n == 0 || d == 0) throw ValueError("preprocess: empty matrix");
    if (cfg.normalize_target <= 0.0) throw ValueError("preprocess: normalize_target must be positive");

    // Size factors use raw totals, before any filtering or scaling.
    std::vector<double> raw_totals(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) raw_totals[i] += counts(i, j);
    {
        std::vector<std::string> zero_cells;
        for (std::size_t i = 0; i < n; ++i) {
            if (raw_totals[i] <= 0.0) zero_cells.push_back(i < raw.cell_ids.size() ? raw.cell_ids[i] : "cell_" + std::to_string(i));
        }
        if (!zero_cells.empty()) throw ValueError("preprocess: zero-total cells: " + join_ids(zero_cells));
    }
    std::vector<double> sorted_totals = raw_totals;
    std::sort(sorted_totals.begin(), sorted_totals.end());
    const double median = n % 2 == 1 ? sorted_totals[n / 2]
                                     : 0.5 * (sorted_totals[n / 2 - 1] + sorted_totals[n / 2]);
    std::vector<double> size_factors(n);
    for (std::size_t i = 0; i < n; ++i) size_factors[i] = raw_totals[i] / median;

    const std::size_t min_cells = std::max<std::size_t>(cfg.min_cells_per_gene, 1);
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < d; ++j) {
        std::size_t expressed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (counts(i, j) > 0.0) ++expressed;
        }
        if (expressed >= min_cells) kept.push_back(j);
    }
    if (kept.size() < 2) {
        throw ValueError("preprocess: fewer than 2 genes survive the min_cells_per_gene=" +
                         std::to_string(cfg.min_cells_per_gene) + " filter");
    }
    if (cfg.top_genes > kept.size()) {
        throw ValueError("preprocess: top_genes=" + std::to_string(cfg.top_genes) + " exceeds the " +
                         std::to_string(kept.size()) + " genes left after filtering");
    }

    // Per-cell scaling to the target total over the filtered genes.
    std::vector<double> filtered_totals(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j : kept) filtered_totals[i] += counts(i, j);
    {
        std::vector<std::string> zero_cells;
        for (std::size_t i = 0; i < n; ++i) {
            if (filtered_totals[i] <= 0.0) zero_cells.push_back(i < raw.cell_ids.size() ? raw.cell_ids[i] : "cell_" + std::to_string(i));
        }
        if (!zero_cells.empty()) {
            throw ValueError("preprocess: cells with zero total after gene filtering: " + join_ids(zero_cells));
        }
    }
    DenseMatrix scaled(n, kept.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double f = cfg.normalize_target / filtered_totals[i];
        for (std::size_t k = 0; k < kept.size(); ++k) scaled(i, k) = counts(i, kept[k]) * f;
    }

    // Optional restriction to the top genes, ranked on the scaled counts.
    std::vector<std::size_t> selected(kept.size());
    std::iota(selected.begin(), selected.end(), 0);
    if (cfg.top_genes > 0 && cfg.top_genes < kept.size()) {
        std::vector<double> score(kept.size(), 0.0);
        if (cfg.selection == GeneSelection::Expression) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < kept.size(); ++k) score[k] += scaled(i, k);
        } else {
            for (std::size_t k = 0; k < kept.size(); ++k) {
                double mean = 0.0;
                for (std::size_t i = 0; i < n; ++i) mean += scaled(i, k);
                mean /= static_cast<double>(n);
                double var = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double c = scaled(i, k) - mean;
                    var += c * c;
                }
                score[k] = var / static_cast<double>(n);
            }
        }
        std::sort(selected.begin(), selected.end(), [&](std::size_t a, std::size_t b) {
            if (score[a] != score[b]) return score[a] > score[b];
            return a < b;
        });
        selected.resize(cfg.top_genes);
        std::sort(selected.begin(), selected.end());
    }

    PreprocessResult out;
    out.x = DenseMatrix(n, selected.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < selected.size(); ++k) {
            const double v = scaled(i, selected[k]);
            out.x(i, k) = cfg.log_transform ? std::log1p(v) : v;
        }
    }
    out.size_factors = std::move(size_factors);
    out.kept_genes.reserve(selected.size());
    for (std::size_t k : selected) out.kept_genes.push_back(kept[k]);
    for (std::size_t j : out.kept_genes) {
        out.gene_ids.push_back(j < raw.gene_ids.size() ? raw.gene_ids[j] : "gene_" + std::to_string(j));
    }
    out.cell_ids = raw.cell_ids;
    return out;
}

namespace {

void atomic_write(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot move '" + tmp.string() + "' to '" + path + "': " + ec.message());
    }
}

}  // namespace

void write_dense_csv(const std::string& path, const DenseMatrix& m,
                     const std::vector<std::string>& gene_ids,
                     const std::vector<std::string>& cell_ids) {
    if (!gene_ids.empty() && gene_ids.size() != m.cols()) {
        throw ValueError("write_dense_csv: " + std::to_string(gene_ids.size()) + " gene ids for " + std::to_string(m.cols()) + " columns");
    }
    if (!cell_ids.empty() && cell_ids.size() != m.rows()) {
        throw ValueError("write_dense_csv: " + std::to_string(cell_ids.size()) + " cell ids for " + std::to_string(m.rows()) + " rows");
    }
    std::string out;
    out.reserve(m.size() * 8 + m.rows() * 8);
    char buf[40];
    if (!gene_ids.empty()) {
        if (!cell_ids.empty()) out += "id";
        for (std::size_t j = 0; j < gene_ids.size(); ++j) {
            if (j > 0 || !cell_ids.empty()) out += ',';
            out += gene_ids[j];
        }
        out += '\n';
    }
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (!cell_ids.empty()) {
            out += cell_ids[i];
            out += ',';
        }
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_value(buf, sizeof buf, m(i, j));
        }
        out += '\n';
    }
    atomic_write(path, out);
}

void write_labels(const std::string& path, const std::vector<int>& labels) {
    std::string out;
    for (int v : labels) {
        out += std::to_string(v);
        out += '\n';
    }
    atomic_write(path, out);
}

void write_text_file(const std::string& path, const std::string& content) {
    atomic_write(path, content);
}

}  // namespace sgc
