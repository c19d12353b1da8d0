#include "sgc/softgraph.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "sgc/errors.hpp"
#include "sgc/io.hpp"

namespace sgc {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C = M M^T through a rank update on the lower triangle, mirrored afterwards,
// so the result is symmetric bit for bit.
DenseMatrix gram(const DenseMatrix& m) {
    const auto n = static_cast<Eigen::Index>(m.rows());
    Eigen::Map<const RowMajor> mm(m.data(), n, static_cast<Eigen::Index>(m.cols()));
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    s.selfadjointView<Eigen::Lower>().rankUpdate(mm);
    DenseMatrix out(m.rows(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

void check_square_symmetric_nonneg(const DenseMatrix& a, const char* who) {
    if (a.rows() != a.cols()) throw ShapeError(std::string(who) + ": matrix must be square, got " + a.shape_str());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            if (a(i, j) < 0.0) throw ValueError(std::string(who) + ": negative entry at (" + std::to_string(i) + "," + std::to_string(j) + ")");
            if (std::abs(a(i, j) - a(j, i)) > 1e-10) {
                throw ValueError(std::string(who) + ": asymmetry above 1e-10 at (" + std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
}

}  // namespace

DenseMatrix build_adjacency_feature(const DenseMatrix& x) {
    if (x.rows() == 0 || x.cols() == 0) throw ValueError("build_adjacency_feature: empty matrix");
    return gram(x);
}

DenseMatrix build_adjacency_cosine(const DenseMatrix& x) {
    if (x.rows() == 0 || x.cols() == 0) throw ValueError("build_adjacency_cosine: empty matrix");
    DenseMatrix unit(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) sq += x(i, j) * x(i, j);
        if (sq <= 0.0) throw ValueError("build_adjacency_cosine: zero-norm row for cell " + std::to_string(i));
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t j = 0; j < x.cols(); ++j) unit(i, j) = x(i, j) * inv;
    }
    DenseMatrix cosine = gram(unit);
    for (std::size_t i = 0; i < cosine.size(); ++i) cosine.data()[i] = std::abs(cosine.data()[i]);
    // Second product sharpens the similarity structure; |C| is symmetric so
    // this is again a Gram matrix.
    return gram(cosine);
}

DenseMatrix normalized_laplacian(const DenseMatrix& a) {
    check_square_symmetric_nonneg(a, "normalized_laplacian");
    const std::size_t n = a.rows();
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += a(i, j);
        if (deg <= 0.0) throw ValueError("normalized_laplacian: zero degree at node " + std::to_string(i));
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    DenseMatrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double off = a(i, j) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
            l(i, j) = (i == j ? 1.0 : 0.0) - off;
        }
    }
    return l;
}

SoftGraphPair build_soft_graphs(const DenseMatrix& x, std::size_t max_cells) {
    if (x.rows() < 2) throw ValueError("build_soft_graphs: need at least 2 cells");
    if (x.rows() > max_cells) {
        throw ValueError("build_soft_graphs: " + std::to_string(x.rows()) + " cells exceed the dense-graph budget of " +
                         std::to_string(max_cells) + " (raise max_cells knowingly)");
    }
    SoftGraphPair pair;
    pair.a1 = build_adjacency_feature(x);
    pair.a2 = build_adjacency_cosine(x);
    const std::size_t n = x.rows();
    pair.d1.resize(n);
    pair.d2.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s1 += pair.a1(i, j);
            s2 += pair.a2(i, j);
        }
        pair.d1[i] = s1;
        pair.d2[i] = s2;
    }
    pair.l1 = normalized_laplacian(pair.a1);
    pair.l2 = normalized_laplacian(pair.a2);
    return pair;
}

DenseMatrix mixed_laplacian(const SoftGraphPair& pair, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("mixed_laplacian: alpha must lie in [0,1]");
    if (!pair.l1.same_shape(pair.l2)) throw ShapeError("mixed_laplacian: channel Laplacians disagree in shape");
    DenseMatrix m(pair.l1.rows(), pair.l1.cols());
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.data()[i] = alpha * pair.l1.data()[i] + (1.0 - alpha) * pair.l2.data()[i];
    }
    return m;
}

ad::Var ncut_loss_mixed(const ad::Var& z, const ad::Var& mixed, double beta) {
    if (!(beta >= 0.0)) throw ValueError("ncut_loss: beta must be nonnegative");
    if (z.rows() != mixed.rows()) {
        throw ShapeError("ncut_loss: Z has " + std::to_string(z.rows()) + " rows for a " + mixed.value().shape_str() + " Laplacian");
    }
    const ad::Var zt = ad::transpose(z);
    const ad::Var cut = ad::trace(ad::matmul(zt, ad::matmul(mixed, z)));
    const ad::Var gram = ad::matmul(zt, z);
    const ad::Var ortho = ad::frobenius_sq(ad::sub(gram, ad::constant(DenseMatrix::identity(z.cols()))));
    return ad::add(cut, ad::scale(ortho, beta));
}

ad::Var ncut_loss(const ad::Var& z, const SoftGraphPair& pair, const NCutConfig& cfg) {
    return ncut_loss_mixed(z, ad::constant(mixed_laplacian(pair, cfg.alpha)), cfg.beta);
}

void dump_graphs(const SoftGraphPair& pair, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_dense_csv((fs::path(dir) / "a1.csv").string(), pair.a1);
    write_dense_csv((fs::path(dir) / "a2.csv").string(), pair.a2);
    write_dense_csv((fs::path(dir) / "l1.csv").string(), pair.l1);
    write_dense_csv((fs::path(dir) / "l2.csv").string(), pair.l2);
}

}  // namespace sgc
