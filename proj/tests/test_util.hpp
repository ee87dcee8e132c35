// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/autodiff.hpp"
#include "anisogauss/numerics/matrix.hpp"
#include "anisogauss/scene/types.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <functional>
#include <random>

namespace testutil {

using anisogauss::numerics::DenseMatrix;
using anisogauss::scene::Mat3;
using anisogauss::scene::Vec3;

inline DenseMatrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                                 double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    DenseMatrix m(r, c);
    for (auto& v : m.data()) {
        v = u(rng);
    }
    return m;
}

inline DenseMatrix random_symmetric(std::size_t n, std::mt19937_64& rng) {
    DenseMatrix a = random_matrix(n, n, rng);
    DenseMatrix s(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            s(i, j) = 0.5 * (a(i, j) + a(j, i));
        }
    }
    return s;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
    q.normalize();
    return q.toRotationMatrix();
}

inline Vec3 random_vec(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    return Vec3(u(rng), u(rng), u(rng));
}

/// Central differences of a scalar function of one leaf's entries.
inline DenseMatrix finite_difference(anisogauss::numerics::Var& leaf, const std::function<double()>& f,
                                     double rel_h = 1e-5) {
    DenseMatrix g(leaf.rows(), leaf.cols());
    auto& v = leaf.mutable_value();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = v[i];
        const double h = rel_h * std::max(1.0, std::abs(x));
        v[i] = x + h;
        const double fp = f();
        v[i] = x - h;
        const double fm = f();
        v[i] = x;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// max|a-b| / max|b|
inline double rel_error(const DenseMatrix& a, const DenseMatrix& b) {
    double num = 0.0;
    double den = 1e-8;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / den;
}

} // namespace testutil
