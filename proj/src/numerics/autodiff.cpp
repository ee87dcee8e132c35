// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/numerics/autodiff.hpp"

#include "anisogauss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace anisogauss::numerics {

DenseMatrix& DiffNode::grad_buffer() {
    if (!grad_ready || !grad.same_shape(value)) {
        grad = DenseMatrix(value.rows(), value.cols());
        grad_ready = true;
    }
    return grad;
}

Var Var::parameter(DenseMatrix value, std::string name) {
    auto n = std::make_shared<DiffNode>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->name = std::move(name);
    return Var(std::move(n));
}

Var Var::constant(DenseMatrix value) {
    auto n = std::make_shared<DiffNode>();
    n->value = std::move(value);
    return Var(std::move(n));
}

const DenseMatrix& Var::grad() const { return node_->grad_buffer(); }

void Var::zero_grad() { node_->grad_buffer().fill(0.0); }

double Var::item() const {
    if (node_->value.size() != 1) {
        throw DimensionError("item: node is not a scalar");
    }
    return node_->value[0];
}

Var make_custom(DenseMatrix value, std::vector<Var> parents, std::function<void(DiffNode&)> propagate) {
    auto n = std::make_shared<DiffNode>();
    n->value = std::move(value);
    n->is_leaf = false;
    for (auto& p : parents) {
        if (!p.valid()) {
            throw GraphError("make_custom: invalid parent");
        }
        n->requires_grad = n->requires_grad || p.requires_grad();
        n->parents.push_back(p.node());
    }
    if (n->requires_grad) {
        n->propagate = std::move(propagate);
    }
    return Var(std::move(n));
}

void backward(const Var& loss) {
    if (!loss.valid() || loss.value().size() != 1) {
        throw GraphError("backward: loss must be a 1x1 node");
    }
    // Iterative DFS topological sort with cycle detection.
    enum class Mark { Visiting, Done };
    std::unordered_map<DiffNode*, Mark> marks;
    std::vector<DiffNode*> order;
    std::vector<std::pair<DiffNode*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    marks[loss.node().get()] = Mark::Visiting;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            DiffNode* parent = node->parents[next++].get();
            if (!parent->requires_grad) {
                continue;
            }
            auto it = marks.find(parent);
            if (it == marks.end()) {
                marks[parent] = Mark::Visiting;
                stack.emplace_back(parent, 0);
            } else if (it->second == Mark::Visiting) {
                throw GraphError("backward: cycle detected");
            }
        } else {
            marks[node] = Mark::Done;
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (DiffNode* n : order) {
        if (!n->is_leaf) {
            n->grad_buffer().fill(0.0);
        }
    }
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        DiffNode* n = *it;
        if (!n->is_leaf && n->requires_grad && n->propagate) {
            n->propagate(*n);
        }
    }
}

namespace ad {

namespace {

bool wants(const DiffNode& self, std::size_t i) { return self.parents[i]->requires_grad; }
DenseMatrix& pgrad(DiffNode& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
const DenseMatrix& pval(const DiffNode& self, std::size_t i) { return self.parents[i]->value; }

template <typename F>
DenseMatrix map(const DenseMatrix& a, F f) {
    DenseMatrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = f(a[i]);
    }
    return out;
}

double sigmoid_scalar(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Elementwise unary op given f and f' (as a function of input and output).
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
    DenseMatrix y = map(a.value(), f);
    return make_custom(std::move(y), {a}, [df](DiffNode& self) {
        const DenseMatrix& x = pval(self, 0);
        DenseMatrix& g = pgrad(self, 0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            g[i] += self.grad[i] * df(x[i], self.value[i]);
        }
    });
}

void require_shape(const Var& a, const Var& b, const char* what) {
    if (!a.value().same_shape(b.value())) {
        throw DimensionError(std::string(what) + ": shape mismatch");
    }
}

} // namespace

Var matmul(const Var& a, const Var& b) {
    return make_custom(numerics::matmul(a.value(), b.value()), {a, b}, [](DiffNode& self) {
        if (wants(self, 0)) {
            pgrad(self, 0) += matmul_nt(self.grad, pval(self, 1));
        }
        if (wants(self, 1)) {
            pgrad(self, 1) += matmul_tn(pval(self, 0), self.grad);
        }
    });
}

Var transpose(const Var& a) {
    return make_custom(numerics::transpose(a.value()), {a},
                       [](DiffNode& self) { pgrad(self, 0) += numerics::transpose(self.grad); });
}

Var add(const Var& a, const Var& b) {
    require_shape(a, b, "add");
    return make_custom(a.value() + b.value(), {a, b}, [](DiffNode& self) {
        for (std::size_t i = 0; i < 2; ++i) {
            if (wants(self, i)) {
                pgrad(self, i) += self.grad;
            }
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_shape(a, b, "sub");
    return make_custom(a.value() - b.value(), {a, b}, [](DiffNode& self) {
        if (wants(self, 0)) {
            pgrad(self, 0) += self.grad;
        }
        if (wants(self, 1)) {
            pgrad(self, 1) -= self.grad;
        }
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
    return make_custom(a.value() * s, {a}, [s](DiffNode& self) {
        DenseMatrix& g = pgrad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += s * self.grad[i];
        }
    });
}

Var add_scalar(const Var& a, double s) {
    DenseMatrix y = a.value();
    for (double& v : y.data()) {
        v += s;
    }
    return make_custom(std::move(y), {a}, [](DiffNode& self) { pgrad(self, 0) += self.grad; });
}

Var add_row(const Var& a, const Var& b) {
    if (b.rows() != 1 || b.cols() != a.cols()) {
        throw DimensionError("add_row: bias must be 1 x cols");
    }
    DenseMatrix y = a.value();
    for (std::size_t r = 0; r < y.rows(); ++r) {
        for (std::size_t c = 0; c < y.cols(); ++c) {
            y(r, c) += b.value()(0, c);
        }
    }
    return make_custom(std::move(y), {a, b}, [](DiffNode& self) {
        if (wants(self, 0)) {
            pgrad(self, 0) += self.grad;
        }
        if (wants(self, 1)) {
            DenseMatrix& gb = pgrad(self, 1);
            for (std::size_t r = 0; r < self.grad.rows(); ++r) {
                for (std::size_t c = 0; c < self.grad.cols(); ++c) {
                    gb(0, c) += self.grad(r, c);
                }
            }
        }
    });
}

Var mul_row(const Var& a, const Var& g) {
    if (g.rows() != 1 || g.cols() != a.cols()) {
        throw DimensionError("mul_row: gain must be 1 x cols");
    }
    DenseMatrix y = a.value();
    for (std::size_t r = 0; r < y.rows(); ++r) {
        for (std::size_t c = 0; c < y.cols(); ++c) {
            y(r, c) *= g.value()(0, c);
        }
    }
    return make_custom(std::move(y), {a, g}, [](DiffNode& self) {
        const DenseMatrix& x = pval(self, 0);
        const DenseMatrix& gain = pval(self, 1);
        if (wants(self, 0)) {
            DenseMatrix& ga = pgrad(self, 0);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    ga(r, c) += self.grad(r, c) * gain(0, c);
                }
            }
        }
        if (wants(self, 1)) {
            DenseMatrix& gg = pgrad(self, 1);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    gg(0, c) += self.grad(r, c) * x(r, c);
                }
            }
        }
    });
}

Var mul_col(const Var& a, const Var& s) {
    if (s.cols() != 1 || s.rows() != a.rows()) {
        throw DimensionError("mul_col: scale must be rows x 1");
    }
    DenseMatrix y = a.value();
    for (std::size_t r = 0; r < y.rows(); ++r) {
        for (std::size_t c = 0; c < y.cols(); ++c) {
            y(r, c) *= s.value()(r, 0);
        }
    }
    return make_custom(std::move(y), {a, s}, [](DiffNode& self) {
        const DenseMatrix& x = pval(self, 0);
        const DenseMatrix& sc = pval(self, 1);
        if (wants(self, 0)) {
            DenseMatrix& ga = pgrad(self, 0);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    ga(r, c) += self.grad(r, c) * sc(r, 0);
                }
            }
        }
        if (wants(self, 1)) {
            DenseMatrix& gs = pgrad(self, 1);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    gs(r, 0) += self.grad(r, c) * x(r, c);
                }
            }
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_shape(a, b, "mul");
    return make_custom(hadamard(a.value(), b.value()), {a, b}, [](DiffNode& self) {
        if (wants(self, 0)) {
            pgrad(self, 0) += hadamard(self.grad, pval(self, 1));
        }
        if (wants(self, 1)) {
            pgrad(self, 1) += hadamard(self.grad, pval(self, 0));
        }
    });
}

Var mul_scalar(const Var& a, const Var& s) {
    if (s.value().size() != 1) {
        throw DimensionError("mul_scalar: scale must be 1x1");
    }
    return make_custom(a.value() * s.value()[0], {a, s}, [](DiffNode& self) {
        const double sv = pval(self, 1)[0];
        if (wants(self, 0)) {
            pgrad(self, 0) += self.grad * sv;
        }
        if (wants(self, 1)) {
            pgrad(self, 1)[0] += dot(self.grad.data(), pval(self, 0).data());
        }
    });
}

Var div_scalar(const Var& a, const Var& s) {
    if (s.value().size() != 1) {
        throw DimensionError("div_scalar: divisor must be 1x1");
    }
    return make_custom(a.value() * (1.0 / s.value()[0]), {a, s}, [](DiffNode& self) {
        const double sv = pval(self, 1)[0];
        if (wants(self, 0)) {
            pgrad(self, 0) += self.grad * (1.0 / sv);
        }
        if (wants(self, 1)) {
            pgrad(self, 1)[0] -= dot(self.grad.data(), pval(self, 0).data()) / (sv * sv);
        }
    });
}

Var sigmoid(const Var& a) {
    return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(const Var& a) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double c = 0.044715;
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x))); },
        [](double x, double) {
            const double t = std::tanh(k * (x + c * x * x * x));
            return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * c * x * x);
        });
}

Var softplus(const Var& a) {
    return unary(
        a, [](double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); },
        [](double x, double) { return sigmoid_scalar(x); });
}

Var exp(const Var& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var softmax_rows(const Var& a) {
    DenseMatrix y(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto x = a.value().row(r);
        const double mx = *std::max_element(x.begin(), x.end());
        double z = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) {
            y(r, c) = std::exp(x[c] - mx);
            z += y(r, c);
        }
        for (std::size_t c = 0; c < x.size(); ++c) {
            y(r, c) /= z;
        }
    }
    return make_custom(std::move(y), {a}, [](DiffNode& self) {
        DenseMatrix& g = pgrad(self, 0);
        for (std::size_t r = 0; r < self.value.rows(); ++r) {
            const double s = dot(self.grad.row(r), self.value.row(r));
            for (std::size_t c = 0; c < self.value.cols(); ++c) {
                g(r, c) += self.value(r, c) * (self.grad(r, c) - s);
            }
        }
    });
}

Var layer_norm_rows(const Var& a, double eps) {
    const std::size_t n = a.cols();
    DenseMatrix y(a.rows(), n);
    std::vector<double> inv_std(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto x = a.value().row(r);
        double mu = 0.0;
        for (double v : x) {
            mu += v;
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (double v : x) {
            var += (v - mu) * (v - mu);
        }
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < n; ++c) {
            y(r, c) = (x[c] - mu) * inv_std[r];
        }
    }
    return make_custom(std::move(y), {a}, [inv_std, n](DiffNode& self) {
        DenseMatrix& g = pgrad(self, 0);
        const double dn = static_cast<double>(n);
        for (std::size_t r = 0; r < self.value.rows(); ++r) {
            const auto gy = self.grad.row(r);
            const auto yy = self.value.row(r);
            double mean_g = 0.0;
            double mean_gy = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                mean_g += gy[c];
                mean_gy += gy[c] * yy[c];
            }
            mean_g /= dn;
            mean_gy /= dn;
            for (std::size_t c = 0; c < n; ++c) {
                g(r, c) += inv_std[r] * (gy[c] - mean_g - yy[c] * mean_gy);
            }
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no inputs");
    }
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw DimensionError("concat_cols: row counts differ");
        }
        offsets.push_back(cols);
        cols += p.cols();
    }
    DenseMatrix y(rows, cols);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const DenseMatrix& v = parts[i].value();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(v.row(r).data(), v.cols(), y.row(r).data() + offsets[i]);
        }
    }
    return make_custom(std::move(y), parts, [offsets](DiffNode& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            if (!wants(self, i)) {
                continue;
            }
            DenseMatrix& g = pgrad(self, i);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                for (std::size_t c = 0; c < g.cols(); ++c) {
                    g(r, c) += self.grad(r, offsets[i] + c);
                }
            }
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no inputs");
    }
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        if (p.cols() != cols) {
            throw DimensionError("concat_rows: column counts differ");
        }
        offsets.push_back(rows);
        rows += p.rows();
    }
    DenseMatrix y(rows, cols);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const DenseMatrix& v = parts[i].value();
        std::copy(v.data().begin(), v.data().end(), y.data().begin() + static_cast<std::ptrdiff_t>(offsets[i] * cols));
    }
    return make_custom(std::move(y), parts, [offsets, cols](DiffNode& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            if (!wants(self, i)) {
                continue;
            }
            DenseMatrix& g = pgrad(self, i);
            for (std::size_t k = 0; k < g.size(); ++k) {
                g[k] += self.grad[offsets[i] * cols + k];
            }
        }
    });
}

Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
    return make_custom(slice_columns(a.value(), c0, c1), {a}, [c0](DiffNode& self) {
        DenseMatrix& g = pgrad(self, 0);
        for (std::size_t r = 0; r < self.grad.rows(); ++r) {
            for (std::size_t c = 0; c < self.grad.cols(); ++c) {
                g(r, c0 + c) += self.grad(r, c);
            }
        }
    });
}

Var slice_rows(const Var& a, std::size_t r0, std::size_t r1) {
    if (r0 > r1 || r1 > a.rows()) {
        throw DimensionError("slice_rows: range out of bounds");
    }
    const std::size_t cols = a.cols();
    DenseMatrix y(r1 - r0, cols);
    std::copy_n(a.value().data().begin() + static_cast<std::ptrdiff_t>(r0 * cols), (r1 - r0) * cols, y.data().begin());
    return make_custom(std::move(y), {a}, [r0, cols](DiffNode& self) {
        DenseMatrix& g = pgrad(self, 0);
        for (std::size_t k = 0; k < self.grad.size(); ++k) {
            g[r0 * cols + k] += self.grad[k];
        }
    });
}

Var gather_rows(const Var& a, const std::vector<std::size_t>& rows) {
    const std::size_t cols = a.cols();
    DenseMatrix y(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= a.rows()) {
            throw DimensionError("gather_rows: index out of range");
        }
        std::copy_n(a.value().row(rows[i]).data(), cols, y.row(i).data());
    }
    return make_custom(std::move(y), {a}, [rows](DiffNode& self) {
        DenseMatrix& g = pgrad(self, 0);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t c = 0; c < self.grad.cols(); ++c) {
                g(rows[i], c) += self.grad(i, c);
            }
        }
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) {
        s += v;
    }
    return make_custom(DenseMatrix(1, 1, s), {a}, [](DiffNode& self) {
        DenseMatrix& g = pgrad(self, 0);
        for (double& v : g.data()) {
            v += self.grad[0];
        }
    });
}

Var mean(const Var& a) {
    if (a.value().size() == 0) {
        throw DimensionError("mean: empty input");
    }
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_rows(const Var& a) {
    if (a.rows() == 0) {
        throw DimensionError("mean_rows: empty input");
    }
    DenseMatrix y(1, a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
            y(0, c) += a.value()(r, c);
        }
    }
    const double inv = 1.0 / static_cast<double>(a.rows());
    y *= inv;
    return make_custom(std::move(y), {a}, [inv](DiffNode& self) {
        DenseMatrix& g = pgrad(self, 0);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) {
                g(r, c) += inv * self.grad(0, c);
            }
        }
    });
}

Var row_sums(const Var& a) {
    DenseMatrix y(a.rows(), 1);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (double v : a.value().row(r)) {
            y(r, 0) += v;
        }
    }
    return make_custom(std::move(y), {a}, [](DiffNode& self) {
        DenseMatrix& g = pgrad(self, 0);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) {
                g(r, c) += self.grad(r, 0);
            }
        }
    });
}

Var ste_threshold(const Var& a, double tau) {
    return make_custom(map(a.value(), [tau](double x) { return x >= tau ? 1.0 : 0.0; }), {a},
                       [](DiffNode& self) { pgrad(self, 0) += self.grad; });
}

} // namespace ad

} // namespace anisogauss::numerics
