// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/matrix.hpp"

#include <vector>

namespace anisogauss::numerics {

struct SymEig {
    std::vector<double> values;  ///< ascending
    DenseMatrix vectors;         ///< column k pairs with values[k]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Throws SymmetryError when |A - Aᵀ| exceeds 1e-10·‖A‖_F, ConvergenceError
/// when the sweep cap is reached.
SymEig sym_eig(const DenseMatrix& a, int max_sweeps = 100);

struct Svd {
    DenseMatrix u;               ///< m x k, orthonormal columns, k = min(m, n)
    std::vector<double> values;  ///< descending, non-negative
    DenseMatrix v;               ///< n x k, orthonormal columns
};

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
Svd svd(const DenseMatrix& a, int max_sweeps = 100);

/// Orthonormal basis for the column span, in input column order. Columns whose
/// residual after projection falls below 1e-10 of their own norm are dropped.
/// Throws RankError if every column has norm < 1e-12.
DenseMatrix orth(const DenseMatrix& columns);

} // namespace anisogauss::numerics
