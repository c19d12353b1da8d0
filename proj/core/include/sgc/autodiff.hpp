#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sgc/dense_matrix.hpp"

// Reverse-mode automatic differentiation over dense fp64 matrices.
//
// Graphs are built eagerly: each kernel call computes its value immediately and
// records the node. forward(root) validates the scalar root, backward(root)
// runs one reverse sweep and leaves gradients on every node that requires them.
// Gradients from multiple consumers of the same node accumulate additively.
// Each backward call recomputes gradients from zero; they do not accumulate
// across calls.

namespace sgc::ad {

enum class Op {
    Leaf,
    Constant,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    AddRowVec,
    RowScale,
    Exp,
    Log,
    Sigmoid,
    Tanh,
    LogGamma,
    Pow,
    Abs,
    Clamp,
    RowSum,
    ColSum,
    FullSum,
    Trace,
    FrobeniusSq,
};

struct Node {
    Op op = Op::Leaf;
    DenseMatrix value;
    DenseMatrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool forwarded = false;
    double a = 0.0;  // kernel scalar (scale factor, exponent, clamp lo)
    double b = 0.0;  // second kernel scalar (clamp hi)
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
};

// Value-semantics handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    bool defined() const noexcept { return node_ != nullptr; }
    const DenseMatrix& value() const;
    // Leaf-only in-place update; shape must not change. Used by optimizers
    // between graph builds.
    DenseMatrix& mutable_value();
    const DenseMatrix& grad() const;
    bool has_grad() const;
    bool requires_grad() const;
    const std::string& name() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Trainable input; participates in backward.
Var leaf(DenseMatrix value, std::string name = {});
// Fixed input; backward never writes a gradient into it.
Var constant(DenseMatrix value, std::string name = {});

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// Elementwise product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
// Adds row vector b (1 x M) to every row of m (N x M).
Var add_rowvec(const Var& m, const Var& b);
// Scales row i of m by s(i, 0); s is N x 1.
Var row_scale(const Var& m, const Var& s);
Var exp(const Var& x);
Var log(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var lgamma(const Var& x);
// Elementwise x^p for fixed p; entries must be positive when p is not a
// nonnegative integer.
Var pow(const Var& x, double p);
Var abs(const Var& x);
Var clamp(const Var& x, double lo, double hi);
Var row_sum(const Var& x);   // N x M -> N x 1
Var col_sum(const Var& x);   // N x M -> 1 x M
Var full_sum(const Var& x);  // N x M -> 1 x 1
Var trace(const Var& x);     // square N x N -> 1 x 1
Var frobenius_sq(const Var& x);  // sum of squared entries -> 1 x 1

// Validates that root is scalar (1 x 1) and finite, marks the graph ready for
// backward, returns the scalar.
double forward(const Var& root);
// Reverse sweep from a forwarded scalar root. Zeroes reachable gradients
// first, then accumulates.
void backward(const Var& root);

struct ExecOptions {
    // When set every reduction uses a fixed sequential order, so repeated runs
    // are bitwise identical. When clear large reductions may use chunked
    // partial sums.
    bool deterministic_reductions = true;
};
ExecOptions& exec_options();

// Central-difference gradient check for a scalar-valued graph builder.
// `build` must construct a fresh graph over the current leaf values and return
// its root. Returns max over leaf entries of
//   |analytic - numeric| / max(|analytic|, 1e-12).
// epsilon must lie in (0, 1e-3].
double finite_difference_check(const std::function<Var()>& build, const Var& leaf, double epsilon = 1e-6);

}  // namespace sgc::ad
