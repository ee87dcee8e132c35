// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/numerics/linalg.hpp"

#include "anisogauss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace anisogauss::numerics {

namespace {

double off_diagonal_norm(const DenseMatrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            if (i != j) {
                s += a(i, j) * a(i, j);
            }
        }
    }
    return std::sqrt(s);
}

// Gram-Schmidt completion: fills the columns of `u` flagged in `missing` with
// unit vectors orthogonal to every other column.
void complete_orthonormal(DenseMatrix& u, const std::vector<bool>& missing) {
    const std::size_t m = u.rows();
    std::size_t next_axis = 0;
    for (std::size_t c = 0; c < u.cols(); ++c) {
        if (!missing[c]) {
            continue;
        }
        bool placed = false;
        while (!placed && next_axis < m) {
            std::vector<double> cand(m, 0.0);
            cand[next_axis++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < u.cols(); ++k) {
                    if (k == c || (missing[k] && k > c)) {
                        continue;
                    }
                    const auto col = u.column(k);
                    const double proj = dot(cand, col);
                    for (std::size_t r = 0; r < m; ++r) {
                        cand[r] -= proj * col[r];
                    }
                }
            }
            const double nrm = norm2(cand);
            if (nrm > 1e-6) {
                for (double& v : cand) {
                    v /= nrm;
                }
                u.set_column(c, cand);
                placed = true;
            }
        }
        if (!placed) {
            throw ConvergenceError("svd: could not complete orthonormal basis");
        }
    }
}

Svd svd_tall(const DenseMatrix& a, int max_sweeps) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    // Work column-major for cache-friendly column rotations.
    std::vector<std::vector<double>> cols(n, std::vector<double>(m));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            cols[j][i] = a(i, j);
        }
    }
    std::vector<std::vector<double>> vcols(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        vcols[j][j] = 1.0;
    }

    constexpr double eps = 1e-15;
    bool converged = n < 2;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = dot(cols[p], cols[p]);
                const double beta = dot(cols[q], cols[q]);
                const double gamma = dot(cols[p], cols[q]);
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) {
                    continue;
                }
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double xp = cols[p][i];
                    const double xq = cols[q][i];
                    cols[p][i] = c * xp - s * xq;
                    cols[q][i] = s * xp + c * xq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = vcols[p][i];
                    const double vq = vcols[q][i];
                    vcols[p][i] = c * vp - s * vq;
                    vcols[q][i] = s * vp + c * vq;
                }
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        throw ConvergenceError("svd: sweep cap reached");
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        sigma[j] = norm2(cols[j]);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    const double smax = n > 0 ? sigma[order[0]] : 0.0;
    const double zero_tol = std::max(smax * 1e-15 * static_cast<double>(std::max(m, n)), 1e-300);

    Svd out{DenseMatrix(m, n), std::vector<double>(n), DenseMatrix(n, n)};
    std::vector<bool> missing(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.values[k] = sigma[j];
        out.v.set_column(k, vcols[j]);
        if (sigma[j] > zero_tol) {
            std::vector<double> ucol = cols[j];
            for (double& v : ucol) {
                v /= sigma[j];
            }
            out.u.set_column(k, ucol);
        } else {
            missing[k] = true;
        }
    }
    if (std::any_of(missing.begin(), missing.end(), [](bool b) { return b; })) {
        complete_orthonormal(out.u, missing);
    }
    return out;
}

} // namespace

SymEig sym_eig(const DenseMatrix& input, int max_sweeps) {
    if (input.rows() != input.cols()) {
        throw DimensionError("sym_eig: matrix is not square");
    }
    if (!input.all_finite()) {
        throw ValueError("sym_eig: non-finite entry");
    }
    const std::size_t n = input.rows();
    const double norm_a = frobenius_norm(input);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(input(i, j) - input(j, i)) > 1e-10 * norm_a) {
                throw SymmetryError("sym_eig: matrix is not symmetric");
            }
        }
    }

    DenseMatrix a = input;
    // Symmetrise exactly so rotations see a consistent matrix.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = avg;
            a(j, i) = avg;
        }
    }
    // Eigenvectors are accumulated as rows of vt so every update is contiguous.
    DenseMatrix vt = DenseMatrix::identity(n);

    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        const double off = off_diagonal_norm(a);
        if (off == 0.0 || off <= 1e-15 * norm_a) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) {
                    continue;
                }
                const double g = 100.0 * std::abs(apq);
                if (sweep > 3 && std::abs(a(p, p)) + g == std::abs(a(p, p)) &&
                    std::abs(a(q, q)) + g == std::abs(a(q, q))) {
                    a(p, q) = 0.0;
                    a(q, p) = 0.0;
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                double* rp = a.row(p).data();
                double* rq = a.row(q).data();
                const auto rotate = [&](std::size_t from, std::size_t to) {
                    for (std::size_t k = from; k < to; ++k) {
                        const double akp = rp[k];
                        const double akq = rq[k];
                        rp[k] = c * akp - s * akq;
                        rq[k] = s * akp + c * akq;
                    }
                };
                rotate(0, p);
                rotate(p + 1, q);
                rotate(q + 1, n);
                for (std::size_t k = 0; k < n; ++k) {
                    a(k, p) = rp[k];
                    a(k, q) = rq[k];
                }
                rp[p] -= t * apq;
                rq[q] += t * apq;
                rp[q] = 0.0;
                rq[p] = 0.0;
                double* vp = vt.row(p).data();
                double* vq = vt.row(q).data();
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = vp[k];
                    const double vkq = vq[k];
                    vp[k] = c * vkp - s * vkq;
                    vq[k] = s * vkp + c * vkq;
                }
            }
        }
    }
    const DenseMatrix v = transpose(vt);
    if (!converged) {
        throw ConvergenceError("sym_eig: sweep cap reached");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    SymEig out{std::vector<double>(n), DenseMatrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t r = 0; r < n; ++r) {
            out.vectors(r, k) = v(r, order[k]);
        }
    }
    return out;
}

Svd svd(const DenseMatrix& a, int max_sweeps) {
    if (!a.all_finite()) {
        throw ValueError("svd: non-finite entry");
    }
    if (a.rows() >= a.cols()) {
        return svd_tall(a, max_sweeps);
    }
    Svd t = svd_tall(transpose(a), max_sweeps);
    return Svd{std::move(t.v), std::move(t.values), std::move(t.u)};
}

DenseMatrix orth(const DenseMatrix& columns) {
    const std::size_t m = columns.rows();
    std::vector<std::vector<double>> basis;
    bool any_nonzero = false;
    for (std::size_t c = 0; c < columns.cols(); ++c) {
        std::vector<double> col = columns.column(c);
        const double original = norm2(col);
        if (original < 1e-12) {
            continue;
        }
        any_nonzero = true;
        // Two passes of modified Gram-Schmidt keep orthogonality at machine level.
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                const double proj = dot(col, b);
                for (std::size_t r = 0; r < m; ++r) {
                    col[r] -= proj * b[r];
                }
            }
        }
        const double residual = norm2(col);
        if (residual <= 1e-10 * original) {
            continue;
        }
        for (double& v : col) {
            v /= residual;
        }
        basis.push_back(std::move(col));
    }
    if (!any_nonzero) {
        throw RankError("orth: all columns are numerically zero");
    }
    DenseMatrix out(m, basis.size());
    for (std::size_t c = 0; c < basis.size(); ++c) {
        out.set_column(c, basis[c]);
    }
    return out;
}

} // namespace anisogauss::numerics
