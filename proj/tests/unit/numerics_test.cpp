// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/errors.hpp"
#include "anisogauss/numerics/autodiff.hpp"
#include "anisogauss/numerics/linalg.hpp"
#include "anisogauss/numerics/optim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace {

using namespace anisogauss;
using numerics::DenseMatrix;
using numerics::Var;
namespace ad = numerics::ad;

double orthonormality_error(const DenseMatrix& v) {
    const DenseMatrix g = numerics::matmul_tn(v, v);
    return numerics::max_abs(g - DenseMatrix::identity(g.rows()));
}

TEST(SymEig, DiagonalSortsAscending) {
    const DenseMatrix a{{3, 0, 0}, {0, 1, 0}, {0, 0, 2}};
    const auto e = numerics::sym_eig(a);
    EXPECT_NEAR(e.values[0], 1.0, 1e-14);
    EXPECT_NEAR(e.values[1], 2.0, 1e-14);
    EXPECT_NEAR(e.values[2], 3.0, 1e-14);
    EXPECT_NEAR(std::abs(e.vectors(1, 0)), 1.0, 1e-14);
    EXPECT_NEAR(std::abs(e.vectors(2, 1)), 1.0, 1e-14);
    EXPECT_NEAR(std::abs(e.vectors(0, 2)), 1.0, 1e-14);
}

TEST(SymEig, TwoByTwoClosedForm) {
    const DenseMatrix a{{1, -1}, {-1, 1}};
    const auto e = numerics::sym_eig(a);
    EXPECT_NEAR(e.values[0], 0.0, 1e-14);
    EXPECT_NEAR(e.values[1], 2.0, 1e-14);
    const double s = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(std::abs(e.vectors(0, 0)), s, 1e-14);
    EXPECT_NEAR(e.vectors(0, 0), e.vectors(1, 0), 1e-14);
    EXPECT_NEAR(e.vectors(0, 1), -e.vectors(1, 1), 1e-14);
}

TEST(SymEig, RandomReconstructionPairsAndTrace) {
    std::mt19937_64 rng(7);
    for (std::size_t n : {1u, 2u, 5u, 20u, 40u}) {
        const DenseMatrix a = testutil::random_symmetric(n, rng);
        const auto e = numerics::sym_eig(a);
        const double na = numerics::frobenius_norm(a);
        DenseMatrix lam(n, n);
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            lam(k, k) = e.values[k];
            sum += e.values[k];
            if (k > 0) {
                EXPECT_LE(e.values[k - 1], e.values[k]);
            }
        }
        const DenseMatrix rec = numerics::matmul_nt(numerics::matmul(e.vectors, lam), e.vectors);
        EXPECT_LT(numerics::max_abs(rec - a), 1e-8 * na);
        EXPECT_LT(orthonormality_error(e.vectors), 1e-10);
        EXPECT_NEAR(sum, numerics::trace(a), 1e-8 * na);
        const DenseMatrix av = numerics::matmul(a, e.vectors);
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                EXPECT_NEAR(av(i, k), e.values[k] * e.vectors(i, k), 1e-8 * na);
            }
        }
    }
}

TEST(SymEig, RejectsAsymmetricInput) {
    const DenseMatrix a{{1, 2}, {0, 1}};
    EXPECT_THROW(numerics::sym_eig(a), SymmetryError);
}

TEST(SymEig, ConvergenceCapRaises) {
    std::mt19937_64 rng(3);
    const DenseMatrix a = testutil::random_symmetric(12, rng);
    EXPECT_THROW(numerics::sym_eig(a, 1), ConvergenceError);
}

TEST(Svd, ZeroMatrix) {
    const auto s = numerics::svd(DenseMatrix(4, 3));
    for (double v : s.values) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_LT(orthonormality_error(s.u), 1e-10);
    EXPECT_LT(orthonormality_error(s.v), 1e-10);
}

TEST(Svd, DiagonalSorted) {
    const auto s = numerics::svd(DenseMatrix{{2, 0}, {0, 5}});
    EXPECT_NEAR(s.values[0], 5.0, 1e-14);
    EXPECT_NEAR(s.values[1], 2.0, 1e-14);
}

TEST(Svd, RankOneOuterProduct) {
    std::mt19937_64 rng(11);
    DenseMatrix u = testutil::random_matrix(6, 1, rng);
    DenseMatrix v = testutil::random_matrix(4, 1, rng);
    u *= 1.0 / numerics::norm2(u.data());
    v *= 1.0 / numerics::norm2(v.data());
    const auto s = numerics::svd(numerics::matmul_nt(u, v));
    EXPECT_NEAR(s.values[0], 1.0, 1e-10);
    for (std::size_t k = 1; k < s.values.size(); ++k) {
        EXPECT_NEAR(s.values[k], 0.0, 1e-10);
    }
}

TEST(Svd, ReconstructsTallAndWide) {
    std::mt19937_64 rng(5);
    for (auto [m, n] : {std::pair<std::size_t, std::size_t>{9, 4}, {4, 9}, {7, 7}, {64, 12}}) {
        const DenseMatrix a = testutil::random_matrix(m, n, rng);
        const auto s = numerics::svd(a);
        const std::size_t k = std::min(m, n);
        ASSERT_EQ(s.values.size(), k);
        DenseMatrix sig(k, k);
        for (std::size_t i = 0; i < k; ++i) {
            sig(i, i) = s.values[i];
            EXPECT_GE(s.values[i], 0.0);
            if (i > 0) {
                EXPECT_GE(s.values[i - 1], s.values[i]);
            }
        }
        const DenseMatrix rec = numerics::matmul_nt(numerics::matmul(s.u, sig), s.v);
        EXPECT_LT(numerics::max_abs(rec - a), 1e-8 * numerics::frobenius_norm(a));
        EXPECT_LT(orthonormality_error(s.u), 1e-10);
        EXPECT_LT(orthonormality_error(s.v), 1e-10);
    }
}

TEST(Svd, InvariantUnderOrthogonalTransform) {
    std::mt19937_64 rng(9);
    const DenseMatrix a = testutil::random_matrix(8, 5, rng);
    const DenseMatrix q = numerics::svd(testutil::random_matrix(8, 8, rng)).u;
    const auto s1 = numerics::svd(a);
    const auto s2 = numerics::svd(numerics::matmul_tn(q, a));
    for (std::size_t i = 0; i < s1.values.size(); ++i) {
        EXPECT_NEAR(s1.values[i], s2.values[i], 1e-8);
    }
}

// Residual of projecting every column of `a` onto span(q).
double projection_residual(const DenseMatrix& q, const DenseMatrix& a) {
    const DenseMatrix proj = numerics::matmul(q, numerics::matmul_tn(q, a));
    return numerics::max_abs(proj - a);
}

TEST(Orth, OrthonormalInputIsFixedSpan) {
    std::mt19937_64 rng(1);
    const DenseMatrix q = numerics::svd(testutil::random_matrix(6, 3, rng)).u;
    const DenseMatrix g = numerics::orth(q);
    EXPECT_EQ(g.cols(), 3u);
    EXPECT_LT(orthonormality_error(g), 1e-10);
    EXPECT_LT(projection_residual(g, q), 1e-8);
}

TEST(Orth, DropsDuplicateColumn) {
    const DenseMatrix a{{1, 1}, {2, 2}, {3, 3}};
    EXPECT_EQ(numerics::orth(a).cols(), 1u);
}

TEST(Orth, RandomFullRankSpanPreserved) {
    std::mt19937_64 rng(2);
    const DenseMatrix a = testutil::random_matrix(10, 4, rng);
    const DenseMatrix g = numerics::orth(a);
    ASSERT_EQ(g.cols(), 4u);
    EXPECT_LT(orthonormality_error(g), 1e-10);
    EXPECT_LT(projection_residual(g, a), 1e-8);
}

TEST(Orth, AllZeroRaises) {
    EXPECT_THROW(numerics::orth(DenseMatrix(5, 2)), RankError);
}

TEST(Autodiff, SumGivesOnes) {
    Var x = Var::parameter(DenseMatrix{{1, -2, 3}});
    numerics::backward(ad::sum(x));
    for (double g : x.grad().data()) {
        EXPECT_EQ(g, 1.0);
    }
}

TEST(Autodiff, SigmoidAtZero) {
    Var x = Var::parameter(DenseMatrix(1, 1, 0.0));
    numerics::backward(ad::sum(ad::sigmoid(x)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
}

TEST(Autodiff, NonScalarLossRaises) {
    Var x = Var::parameter(DenseMatrix(2, 2, 1.0));
    EXPECT_THROW(numerics::backward(ad::exp(x)), GraphError);
}

TEST(Autodiff, CycleRaises) {
    Var x = Var::parameter(DenseMatrix(1, 1, 1.0));
    Var y = ad::exp(x);
    Var z = ad::sum(y);
    y.node()->parents.push_back(z.node());
    EXPECT_THROW(numerics::backward(z), GraphError);
    y.node()->parents.pop_back();
}

struct GradCase {
    const char* name;
    std::function<Var(const Var&, const Var&)> f;  // (x, y) -> scalar
    std::size_t xr, xc, yr, yc;
};

class AutodiffFd : public ::testing::TestWithParam<GradCase> {};

TEST_P(AutodiffFd, MatchesCentralDifferences) {
    const GradCase& c = GetParam();
    std::mt19937_64 rng(1234);
    Var x = Var::parameter(testutil::random_matrix(c.xr, c.xc, rng, 0.2, 1.2));
    Var y = Var::parameter(testutil::random_matrix(c.yr, c.yc, rng, 0.2, 1.2));
    x.zero_grad();
    y.zero_grad();
    numerics::backward(c.f(x, y));
    const DenseMatrix gx = x.grad();
    const DenseMatrix gy = y.grad();
    auto eval = [&] { return c.f(x, y).item(); };
    EXPECT_LT(testutil::rel_error(gx, testutil::finite_difference(x, eval)), 1e-4) << c.name;
    EXPECT_LT(testutil::rel_error(gy, testutil::finite_difference(y, eval)), 1e-4) << c.name;
}

// Fixed nonuniform weights so that no loss collapses to a constant.
Var weighted_sum(const Var& v) {
    DenseMatrix w(v.rows(), v.cols());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::sin(1.0 + 0.7 * static_cast<double>(i));
    }
    return ad::sum(ad::mul(v, Var::constant(w)));
}

const GradCase kCases[] = {
    {"matmul", [](const Var& x, const Var& y) { return weighted_sum(ad::matmul(x, y)); }, 3, 4, 4, 2},
    {"add_sub", [](const Var& x, const Var& y) { return weighted_sum(ad::sub(ad::add(x, y), ad::scale(y, 3.0))); },
     2, 3, 2, 3},
    {"mul", [](const Var& x, const Var& y) { return weighted_sum(ad::mul(x, y)); }, 3, 3, 3, 3},
    {"sigmoid_tanh", [](const Var& x, const Var& y) { return weighted_sum(ad::add(ad::sigmoid(x), ad::tanh(y))); },
     2, 2, 2, 2},
    {"softmax", [](const Var& x, const Var& y) { return weighted_sum(ad::softmax_rows(ad::mul(x, y))); }, 3, 5, 3, 5},
    {"layer_norm", [](const Var& x, const Var& y) { return weighted_sum(ad::layer_norm_rows(ad::add(x, y))); }, 3,
     6, 3, 6},
    {"concat", [](const Var& x, const Var& y) { return weighted_sum(ad::concat_cols({x, ad::square(y)})); }, 2, 3, 2,
     2},
    {"concat_rows", [](const Var& x, const Var& y) { return weighted_sum(ad::concat_rows({ad::exp(x), y})); }, 2, 3,
     1, 3},
    {"mean_reductions",
     [](const Var& x, const Var& y) {
         return ad::add(ad::mean(ad::mul(x, x)), weighted_sum(ad::add(ad::mean_rows(y), ad::row_sums(ad::transpose(y)))));
     },
     2, 2, 3, 1},
    {"exp_log", [](const Var& x, const Var& y) { return weighted_sum(ad::log(ad::add(ad::exp(x), y))); }, 2, 2, 2, 2},
    {"gelu_softplus", [](const Var& x, const Var& y) { return weighted_sum(ad::mul(ad::gelu(x), ad::softplus(y))); },
     3, 2, 3, 2},
    {"broadcast",
     [](const Var& x, const Var& y) {
         return weighted_sum(ad::mul_col(ad::mul_row(ad::add_row(x, ad::slice_rows(y, 0, 1)), ad::slice_rows(y, 1, 2)),
                                         ad::slice_cols(x, 0, 1)));
     },
     3, 2, 2, 2},
    {"scalar_ops",
     [](const Var& x, const Var& y) {
         return weighted_sum(ad::div_scalar(ad::mul_scalar(x, ad::sum(y)), ad::add_scalar(ad::mean(y), 1.0)));
     },
     2, 2, 2, 2},
    {"gather", [](const Var& x, const Var& y) { return weighted_sum(ad::mul(ad::gather_rows(x, {2, 0, 2}), y)); }, 3,
     2, 3, 2},
    {"mlp",
     [](const Var& x, const Var& y) {
         const Var in = Var::constant(DenseMatrix{{0.3, -0.2}, {1.1, 0.4}, {-0.7, 0.9}});
         const Var h = ad::gelu(ad::matmul(in, x));
         return ad::mean(ad::square(ad::sigmoid(ad::matmul(h, y))));
     },
     2, 4, 4, 1},
};

INSTANTIATE_TEST_SUITE_P(Ops, AutodiffFd, ::testing::ValuesIn(kCases),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(Autodiff, SteForwardThresholdBackwardIdentity) {
    Var x = Var::parameter(DenseMatrix{{0.005, 0.02, 0.5}});
    const Var m = ad::ste_threshold(x, 0.01);
    EXPECT_EQ(m.value()[0], 0.0);
    EXPECT_EQ(m.value()[1], 1.0);
    EXPECT_EQ(m.value()[2], 1.0);
    numerics::backward(weighted_sum(m));
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(x.grad()[i], std::sin(1.0 + 0.7 * static_cast<double>(i)));
    }
}

TEST(Autodiff, Linearity) {
    std::mt19937_64 rng(4);
    Var w = Var::parameter(testutil::random_matrix(3, 3, rng));
    const Var in = Var::constant(testutil::random_matrix(2, 3, rng));
    auto l1 = [&] { return ad::sum(ad::sigmoid(ad::matmul(in, w))); };
    auto l2 = [&] { return ad::mean(ad::square(ad::matmul(in, w))); };
    numerics::backward(l1());
    const DenseMatrix g1 = w.grad();
    w.zero_grad();
    numerics::backward(l2());
    const DenseMatrix g2 = w.grad();
    w.zero_grad();
    const double a = 2.5;
    const double b = -0.75;
    numerics::backward(ad::add(ad::scale(l1(), a), ad::scale(l2(), b)));
    const DenseMatrix expected = g1 * a + g2 * b;
    EXPECT_LT(numerics::max_abs(w.grad() - expected), 1e-10);
}

TEST(Autodiff, LeafGradientsAccumulate) {
    Var x = Var::parameter(DenseMatrix(1, 2, 1.0));
    numerics::backward(ad::sum(x));
    numerics::backward(ad::sum(x));
    EXPECT_EQ(x.grad()[0], 2.0);
    x.zero_grad();
    EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Var x = Var::parameter(DenseMatrix{{1.0, -3.0}});
    numerics::Adam opt;
    opt.add_group("x", {x}, 0.1);
    numerics::backward(ad::sum(ad::square(x)));
    opt.step();
    EXPECT_NEAR(x.value()[0], 0.9, 1e-6);
    EXPECT_NEAR(x.value()[1], -2.9, 1e-6);
}

TEST(Adam, MinimisesQuadratic) {
    Var x = Var::parameter(DenseMatrix{{2.0, -1.0, 0.5}});
    numerics::Adam opt;
    opt.add_group("x", {x}, 0.05);
    for (int it = 0; it < 2000; ++it) {
        opt.zero_grad();
        numerics::backward(ad::sum(ad::square(ad::add_scalar(x, -0.3))));
        opt.step();
    }
    for (double v : x.value().data()) {
        EXPECT_NEAR(v, 0.3, 1e-3);
    }
}

TEST(Adam, RemapRowsKeepsMoments) {
    Var x = Var::parameter(DenseMatrix{{1.0}, {2.0}});
    numerics::Adam opt;
    opt.add_group("x", {x}, 0.1);
    numerics::backward(ad::sum(ad::square(x)));
    opt.step();
    x.mutable_value() = DenseMatrix{{x.value()[1]}, {0.0}, {x.value()[0]}};
    opt.remap_rows(x, {1, -1, 0});
    opt.zero_grad();
    numerics::backward(ad::sum(ad::square(x)));
    opt.step();
    EXPECT_TRUE(x.value().all_finite());
    EXPECT_DOUBLE_EQ(x.value()[1], 0.0);  // zero gradient, zero moments
}

TEST(Adam, RemapRowsOfUnknownParameterRaises) {
    Var x = Var::parameter(DenseMatrix{{1.0}});
    Var y = Var::parameter(DenseMatrix{{1.0}});
    numerics::Adam opt;
    opt.add_group("x", {x}, 0.1);
    EXPECT_TRUE(opt.contains(x));
    EXPECT_FALSE(opt.contains(y));
    EXPECT_THROW(opt.remap_rows(y, {0}), GraphError);
}

TEST(DenseMatrix, ShapeMismatchRaises) {
    EXPECT_THROW(numerics::matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), DimensionError);
    DenseMatrix a(2, 2);
    EXPECT_THROW(a += DenseMatrix(3, 2), DimensionError);
}

} // namespace
