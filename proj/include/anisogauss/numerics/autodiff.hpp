// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/matrix.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace anisogauss::numerics {

/// One node of a define-by-run computation graph. Leaves are parameters or
/// constants; interior nodes carry a closure that pushes their gradient to
/// their parents.
struct DiffNode {
    DenseMatrix value;
    DenseMatrix grad;
    bool grad_ready = false;
    bool requires_grad = false;
    bool is_leaf = true;
    std::string name;
    std::vector<std::shared_ptr<DiffNode>> parents;
    std::function<void(DiffNode&)> propagate;

    DenseMatrix& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<DiffNode> node) : node_(std::move(node)) {}

    static Var parameter(DenseMatrix value, std::string name = {});
    static Var constant(DenseMatrix value);
    static Var scalar(double value) { return constant(DenseMatrix(1, 1, value)); }

    bool valid() const noexcept { return node_ != nullptr; }
    const DenseMatrix& value() const { return node_->value; }
    /// Leaf-only mutation (optimizer steps, resizing after prune/densify).
    DenseMatrix& mutable_value() { return node_->value; }
    /// Gradient accumulated by backward(); zeros if no gradient reached the node.
    const DenseMatrix& grad() const;
    void zero_grad();
    double item() const;

    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_->requires_grad; }
    const std::string& name() const { return node_->name; }
    const std::shared_ptr<DiffNode>& node() const { return node_; }

private:
    std::shared_ptr<DiffNode> node_;
};

/// Reverse-mode sweep from a 1x1 loss. Leaf gradients accumulate (callers zero
/// them between steps); interior gradients are recomputed on every call.
/// Throws GraphError for a non-scalar loss or a cyclic graph.
void backward(const Var& loss);

/// Builds an interior node with a caller-supplied backward closure. The closure
/// receives the node itself and must add into `parent->grad_buffer()` for each
/// parent that requires a gradient.
Var make_custom(DenseMatrix value, std::vector<Var> parents, std::function<void(DiffNode&)> propagate);

namespace ad {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a (r x c) + b (1 x c) broadcast over rows.
Var add_row(const Var& a, const Var& b);
/// a (r x c) ⊙ g (1 x c) broadcast over rows.
Var mul_row(const Var& a, const Var& g);
/// a (r x c) ⊙ s (r x 1) broadcast over columns.
Var mul_col(const Var& a, const Var& s);
Var mul(const Var& a, const Var& b);
/// a * s with s a 1x1 node.
Var mul_scalar(const Var& a, const Var& s);
/// a / s with s a 1x1 node.
Var div_scalar(const Var& a, const Var& s);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var gelu(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);

Var softmax_rows(const Var& a);
/// Per-row standardisation (no affine part).
Var layer_norm_rows(const Var& a, double eps = 1e-5);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t c0, std::size_t c1);
Var slice_rows(const Var& a, std::size_t r0, std::size_t r1);
Var gather_rows(const Var& a, const std::vector<std::size_t>& rows);

Var sum(const Var& a);
Var mean(const Var& a);
/// 1 x c column means.
Var mean_rows(const Var& a);
/// r x 1 row sums.
Var row_sums(const Var& a);

/// Forward: 1[a >= tau]. Backward: identity (straight-through estimator).
Var ste_threshold(const Var& a, double tau);

} // namespace ad

} // namespace anisogauss::numerics
