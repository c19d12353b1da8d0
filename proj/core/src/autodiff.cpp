#include "sgc/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "sgc/errors.hpp"
#include "sgc/special.hpp"

namespace sgc::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMajor>;
using MMap = Eigen::Map<RowMajor>;

CMap cmap(const DenseMatrix& m) {
    return CMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}
MMap mmap(DenseMatrix& m) {
    return MMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}

// acc += a * b, acc += a * b^T, acc += a^T * b
void add_gemm_nn(DenseMatrix& acc, const DenseMatrix& a, const DenseMatrix& b) {
    mmap(acc).noalias() += cmap(a) * cmap(b);
}
void add_gemm_nt(DenseMatrix& acc, const DenseMatrix& a, const DenseMatrix& b) {
    mmap(acc).noalias() += cmap(a) * cmap(b).transpose();
}
void add_gemm_tn(DenseMatrix& acc, const DenseMatrix& a, const DenseMatrix& b) {
    mmap(acc).noalias() += cmap(a).transpose() * cmap(b);
}

const std::shared_ptr<Node>& checked(const Var& v, const char* kernel) {
    if (!v.defined()) throw ValueError(std::string(kernel) + ": undefined operand");
    return v.node();
}

void check_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* kernel) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(kernel) + ": shapes disagree, " + a.shape_str() + " vs " + b.shape_str());
    }
}

std::shared_ptr<Node> make_node(Op op, DenseMatrix value, std::vector<std::shared_ptr<Node>> parents,
                                double a = 0.0, double b = 0.0) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->a = a;
    n->b = b;
    for (const auto& p : n->parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    return n;
}

template <typename F>
DenseMatrix map_unary(const DenseMatrix& x, F&& f) {
    DenseMatrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = f(x.data()[i]);
    return out;
}

template <typename F>
DenseMatrix map_binary(const DenseMatrix& a, const DenseMatrix& b, F&& f) {
    DenseMatrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = f(a.data()[i], b.data()[i]);
    return out;
}

double reduce_sum(const double* p, std::size_t n) {
    if (exec_options().deterministic_reductions || n < 4096) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += p[i];
        return s;
    }
    constexpr std::size_t chunk = 1024;
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t end = std::min(n, start + chunk);
        double part = 0.0;
        for (std::size_t i = start; i < end; ++i) part += p[i];
        total += part;
    }
    return total;
}

double stable_sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

// Reachable nodes in post-order: every node appears after all of its parents.
std::vector<Node*> postorder_from(Node* root) {
    std::vector<Node*> order;
    std::vector<std::pair<Node*, std::size_t>> stack;
    std::unordered_set<Node*> visited;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

ExecOptions& exec_options() {
    static ExecOptions opts;
    return opts;
}

const DenseMatrix& Var::value() const {
    if (!node_) throw ValueError("Var::value: undefined variable");
    return node_->value;
}

DenseMatrix& Var::mutable_value() {
    if (!node_) throw ValueError("Var::mutable_value: undefined variable");
    if (node_->op != Op::Leaf && node_->op != Op::Constant) {
        throw ValueError("Var::mutable_value: only leaves and constants may be updated in place");
    }
    return node_->value;
}

const DenseMatrix& Var::grad() const {
    if (!node_) throw ValueError("Var::grad: undefined variable");
    if (!node_->has_grad) throw Error("Var::grad: no gradient computed for '" + node_->name + "'");
    return node_->grad;
}

bool Var::has_grad() const { return node_ && node_->has_grad; }

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

const std::string& Var::name() const {
    static const std::string empty;
    return node_ ? node_->name : empty;
}

Var leaf(DenseMatrix value, std::string name) {
    auto n = make_node(Op::Leaf, std::move(value), {});
    n->requires_grad = true;
    n->name = std::move(name);
    return Var(n);
}

Var constant(DenseMatrix value, std::string name) {
    auto n = make_node(Op::Constant, std::move(value), {});
    n->name = std::move(name);
    return Var(n);
}

Var matmul(const Var& a, const Var& b) {
    const auto& na = checked(a, "matmul");
    const auto& nb = checked(b, "matmul");
    if (na->value.cols() != nb->value.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, " + na->value.shape_str() + " * " + nb->value.shape_str());
    }
    DenseMatrix out(na->value.rows(), nb->value.cols(), 0.0);
    if (out.size() != 0 && na->value.cols() != 0) add_gemm_nn(out, na->value, nb->value);
    return Var(make_node(Op::MatMul, std::move(out), {na, nb}));
}

Var transpose(const Var& x) {
    const auto& n = checked(x, "transpose");
    const DenseMatrix& v = n->value;
    DenseMatrix out(v.cols(), v.rows());
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.cols(); ++j) out(j, i) = v(i, j);
    return Var(make_node(Op::Transpose, std::move(out), {n}));
}

Var add(const Var& a, const Var& b) {
    const auto& na = checked(a, "add");
    const auto& nb = checked(b, "add");
    check_same_shape(na->value, nb->value, "add");
    return Var(make_node(Op::Add, map_binary(na->value, nb->value, [](double x, double y) { return x + y; }), {na, nb}));
}

Var sub(const Var& a, const Var& b) {
    const auto& na = checked(a, "sub");
    const auto& nb = checked(b, "sub");
    check_same_shape(na->value, nb->value, "sub");
    return Var(make_node(Op::Sub, map_binary(na->value, nb->value, [](double x, double y) { return x - y; }), {na, nb}));
}

Var mul(const Var& a, const Var& b) {
    const auto& na = checked(a, "mul");
    const auto& nb = checked(b, "mul");
    check_same_shape(na->value, nb->value, "mul");
    return Var(make_node(Op::Mul, map_binary(na->value, nb->value, [](double x, double y) { return x * y; }), {na, nb}));
}

Var scale(const Var& x, double s) {
    const auto& n = checked(x, "scale");
    return Var(make_node(Op::Scale, map_unary(n->value, [s](double v) { return s * v; }), {n}, s));
}

Var add_scalar(const Var& x, double s) {
    const auto& n = checked(x, "add_scalar");
    return Var(make_node(Op::AddScalar, map_unary(n->value, [s](double v) { return v + s; }), {n}, s));
}

Var add_rowvec(const Var& m, const Var& b) {
    const auto& nm = checked(m, "add_rowvec");
    const auto& nb = checked(b, "add_rowvec");
    if (nb->value.rows() != 1 || nb->value.cols() != nm->value.cols()) {
        throw ShapeError("add_rowvec: expected 1x" + std::to_string(nm->value.cols()) + " row vector, got " + nb->value.shape_str());
    }
    DenseMatrix out(nm->value.rows(), nm->value.cols());
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = nm->value(i, j) + nb->value(0, j);
    return Var(make_node(Op::AddRowVec, std::move(out), {nm, nb}));
}

Var row_scale(const Var& m, const Var& s) {
    const auto& nm = checked(m, "row_scale");
    const auto& ns = checked(s, "row_scale");
    if (ns->value.cols() != 1 || ns->value.rows() != nm->value.rows()) {
        throw ShapeError("row_scale: expected " + std::to_string(nm->value.rows()) + "x1 column, got " + ns->value.shape_str());
    }
    DenseMatrix out(nm->value.rows(), nm->value.cols());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        const double si = ns->value(i, 0);
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = nm->value(i, j) * si;
    }
    return Var(make_node(Op::RowScale, std::move(out), {nm, ns}));
}

Var exp(const Var& x) {
    const auto& n = checked(x, "exp");
    return Var(make_node(Op::Exp, map_unary(n->value, [](double v) { return std::exp(v); }), {n}));
}

Var log(const Var& x) {
    const auto& n = checked(x, "log");
    return Var(make_node(Op::Log, map_unary(n->value, [](double v) { return std::log(v); }), {n}));
}

Var sigmoid(const Var& x) {
    const auto& n = checked(x, "sigmoid");
    return Var(make_node(Op::Sigmoid, map_unary(n->value, stable_sigmoid), {n}));
}

Var tanh(const Var& x) {
    const auto& n = checked(x, "tanh");
    return Var(make_node(Op::Tanh, map_unary(n->value, [](double v) { return std::tanh(v); }), {n}));
}

Var lgamma(const Var& x) {
    const auto& n = checked(x, "lgamma");
    return Var(make_node(Op::LogGamma, map_unary(n->value, [](double v) { return std::lgamma(v); }), {n}));
}

Var pow(const Var& x, double p) {
    const auto& n = checked(x, "pow");
    const bool integral = p == std::floor(p);
    DenseMatrix out(n->value.rows(), n->value.cols());
    for (std::size_t i = 0; i < n->value.size(); ++i) {
        const double v = n->value.data()[i];
        if (!integral && v < 0.0) throw ValueError("pow: negative base with non-integer exponent at entry " + std::to_string(i));
        if (p < 0.0 && v == 0.0) throw ValueError("pow: zero base with negative exponent at entry " + std::to_string(i));
        out.data()[i] = std::pow(v, p);
    }
    return Var(make_node(Op::Pow, std::move(out), {n}, p));
}

Var abs(const Var& x) {
    const auto& n = checked(x, "abs");
    return Var(make_node(Op::Abs, map_unary(n->value, [](double v) { return std::abs(v); }), {n}));
}

Var clamp(const Var& x, double lo, double hi) {
    if (!(lo <= hi)) throw ValueError("clamp: lo must not exceed hi");
    const auto& n = checked(x, "clamp");
    return Var(make_node(Op::Clamp, map_unary(n->value, [lo, hi](double v) { return std::min(std::max(v, lo), hi); }), {n}, lo, hi));
}

Var row_sum(const Var& x) {
    const auto& n = checked(x, "row_sum");
    DenseMatrix out(n->value.rows(), 1, 0.0);
    for (std::size_t i = 0; i < n->value.rows(); ++i) {
        out(i, 0) = reduce_sum(n->value.data() + i * n->value.cols(), n->value.cols());
    }
    return Var(make_node(Op::RowSum, std::move(out), {n}));
}

Var col_sum(const Var& x) {
    const auto& n = checked(x, "col_sum");
    DenseMatrix out(1, n->value.cols(), 0.0);
    for (std::size_t i = 0; i < n->value.rows(); ++i)
        for (std::size_t j = 0; j < n->value.cols(); ++j) out(0, j) += n->value(i, j);
    return Var(make_node(Op::ColSum, std::move(out), {n}));
}

Var full_sum(const Var& x) {
    const auto& n = checked(x, "full_sum");
    DenseMatrix out(1, 1, reduce_sum(n->value.data(), n->value.size()));
    return Var(make_node(Op::FullSum, std::move(out), {n}));
}

Var trace(const Var& x) {
    const auto& n = checked(x, "trace");
    if (n->value.rows() != n->value.cols()) throw ShapeError("trace: matrix must be square, got " + n->value.shape_str());
    double t = 0.0;
    for (std::size_t i = 0; i < n->value.rows(); ++i) t += n->value(i, i);
    return Var(make_node(Op::Trace, DenseMatrix(1, 1, t), {n}));
}

Var frobenius_sq(const Var& x) {
    const auto& n = checked(x, "frobenius_sq");
    double s = 0.0;
    for (std::size_t i = 0; i < n->value.size(); ++i) {
        const double v = n->value.data()[i];
        s += v * v;
    }
    return Var(make_node(Op::FrobeniusSq, DenseMatrix(1, 1, s), {n}));
}

double forward(const Var& root) {
    const auto& n = checked(root, "forward");
    if (n->value.rows() != 1 || n->value.cols() != 1) {
        throw ShapeError("forward: root must be a 1x1 scalar, got " + n->value.shape_str());
    }
    const double v = n->value(0, 0);
    if (!std::isfinite(v)) throw ValueError("forward: root evaluated to a non-finite value");
    n->forwarded = true;
    return v;
}

namespace {

// Pushes the gradient sitting on `n` into its parents.
void apply_vjp(Node* n) {
    const DenseMatrix& g = n->grad;
    auto parent = [&](std::size_t i) -> Node* { return n->parents[i].get(); };
    auto wants = [&](std::size_t i) { return n->parents[i]->requires_grad; };

    switch (n->op) {
        case Op::Leaf:
        case Op::Constant:
            break;
        case Op::MatMul: {
            Node* a = parent(0);
            Node* b = parent(1);
            if (a->requires_grad && g.size() != 0 && b->value.size() != 0) add_gemm_nt(a->grad, g, b->value);
            if (b->requires_grad && g.size() != 0 && a->value.size() != 0) add_gemm_tn(b->grad, a->value, g);
            break;
        }
        case Op::Transpose: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) a->grad(j, i) += g(i, j);
            break;
        }
        case Op::Add:
            for (std::size_t k = 0; k < 2; ++k) {
                if (!wants(k)) continue;
                Node* p = parent(k);
                for (std::size_t i = 0; i < g.size(); ++i) p->grad.data()[i] += g.data()[i];
            }
            break;
        case Op::Sub: {
            if (wants(0)) {
                Node* p = parent(0);
                for (std::size_t i = 0; i < g.size(); ++i) p->grad.data()[i] += g.data()[i];
            }
            if (wants(1)) {
                Node* p = parent(1);
                for (std::size_t i = 0; i < g.size(); ++i) p->grad.data()[i] -= g.data()[i];
            }
            break;
        }
        case Op::Mul: {
            Node* a = parent(0);
            Node* b = parent(1);
            if (a->requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) a->grad.data()[i] += g.data()[i] * b->value.data()[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) b->grad.data()[i] += g.data()[i] * a->value.data()[i];
            break;
        }
        case Op::Scale: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i) a->grad.data()[i] += n->a * g.data()[i];
            break;
        }
        case Op::AddScalar: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i) a->grad.data()[i] += g.data()[i];
            break;
        }
        case Op::AddRowVec: {
            Node* m = parent(0);
            Node* b = parent(1);
            if (m->requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) m->grad.data()[i] += g.data()[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) b->grad(0, j) += g(i, j);
            break;
        }
        case Op::RowScale: {
            Node* m = parent(0);
            Node* s = parent(1);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                const double si = s->value(i, 0);
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    if (m->requires_grad) m->grad(i, j) += g(i, j) * si;
                    if (s->requires_grad) s->grad(i, 0) += g(i, j) * m->value(i, j);
                }
            }
            break;
        }
        case Op::Exp: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i) a->grad.data()[i] += g.data()[i] * n->value.data()[i];
            break;
        }
        case Op::Log: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i) a->grad.data()[i] += g.data()[i] / a->value.data()[i];
            break;
        }
        case Op::Sigmoid: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = n->value.data()[i];
                a->grad.data()[i] += g.data()[i] * s * (1.0 - s);
            }
            break;
        }
        case Op::Tanh: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double t = n->value.data()[i];
                a->grad.data()[i] += g.data()[i] * (1.0 - t * t);
            }
            break;
        }
        case Op::LogGamma: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i) a->grad.data()[i] += g.data()[i] * digamma(a->value.data()[i]);
            break;
        }
        case Op::Pow: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            const double p = n->a;
            for (std::size_t i = 0; i < g.size(); ++i) {
                a->grad.data()[i] += g.data()[i] * p * std::pow(a->value.data()[i], p - 1.0);
            }
            break;
        }
        case Op::Abs: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = a->value.data()[i];
                const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                a->grad.data()[i] += g.data()[i] * s;
            }
            break;
        }
        case Op::Clamp: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = a->value.data()[i];
                if (v >= n->a && v <= n->b) a->grad.data()[i] += g.data()[i];
            }
            break;
        }
        case Op::RowSum: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < a->value.rows(); ++i) {
                const double gi = g(i, 0);
                for (std::size_t j = 0; j < a->value.cols(); ++j) a->grad(i, j) += gi;
            }
            break;
        }
        case Op::ColSum: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            for (std::size_t i = 0; i < a->value.rows(); ++i)
                for (std::size_t j = 0; j < a->value.cols(); ++j) a->grad(i, j) += g(0, j);
            break;
        }
        case Op::FullSum: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            const double gs = g(0, 0);
            for (std::size_t i = 0; i < a->value.size(); ++i) a->grad.data()[i] += gs;
            break;
        }
        case Op::Trace: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            const double gs = g(0, 0);
            for (std::size_t i = 0; i < a->value.rows(); ++i) a->grad(i, i) += gs;
            break;
        }
        case Op::FrobeniusSq: {
            Node* a = parent(0);
            if (!a->requires_grad) break;
            const double gs = 2.0 * g(0, 0);
            for (std::size_t i = 0; i < a->value.size(); ++i) a->grad.data()[i] += gs * a->value.data()[i];
            break;
        }
    }
}

}  // namespace

void backward(const Var& root) {
    const auto& rn = checked(root, "backward");
    if (!rn->forwarded) throw Error("backward: called before forward on this root");
    if (!rn->requires_grad) return;  // graph has no trainable inputs
    std::vector<Node*> order = postorder_from(rn.get());
    for (Node* n : order) {
        if (!n->requires_grad) continue;
        if (!n->grad.same_shape(n->value)) {
            n->grad = DenseMatrix(n->value.rows(), n->value.cols(), 0.0);
        } else {
            n->grad.fill(0.0);
        }
        n->has_grad = true;
    }
    rn->grad(0, 0) = 1.0;
    // Post-order puts parents before consumers, so walking it backwards visits
    // every node only after all of its consumers contributed to its gradient.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->requires_grad) apply_vjp(n);
    }
}

double finite_difference_check(const std::function<Var()>& build, const Var& target, double epsilon) {
    if (!(epsilon > 0.0) || epsilon > 1e-3) {
        throw ValueError("finite_difference_check: epsilon must lie in (0, 1e-3]");
    }
    const auto& ln = checked(target, "finite_difference_check");
    if (ln->op != Op::Leaf) throw ValueError("finite_difference_check: target must be a leaf");

    ln->has_grad = false;
    Var root = build();
    forward(root);
    backward(root);
    const DenseMatrix analytic = ln->has_grad ? ln->grad : DenseMatrix(ln->value.rows(), ln->value.cols(), 0.0);

    DenseMatrix& x = ln->value;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x.data()[i];
        const double xp = orig + epsilon;
        const double xm = orig - epsilon;
        double fp = 0.0, fm = 0.0;
        try {
            x.data()[i] = xp;
            fp = forward(build());
            x.data()[i] = xm;
            fm = forward(build());
        } catch (const Error&) {
            x.data()[i] = orig;
            throw ValueError("finite_difference_check: non-finite value while perturbing entry " + std::to_string(i));
        }
        x.data()[i] = orig;
        const double fd = (fp - fm) / (xp - xm);
        const double a = analytic.data()[i];
        const double rel = std::abs(a - fd) / std::max(std::abs(a), 1e-12);
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace sgc::ad
