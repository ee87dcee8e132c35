// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/splat/sh.hpp"

#include "anisogauss/errors.hpp"

#include <algorithm>

namespace anisogauss::splat {

using numerics::DenseMatrix;
using numerics::Var;

std::array<double, scene::kShCoeffs> sh_basis(const Vec3& dir) {
    const double x = dir.x();
    const double y = dir.y();
    const double z = dir.z();
    const double xx = x * x;
    const double yy = y * y;
    const double zz = z * z;
    return {
        kShC0,
        -kShC1 * y,
        kShC1 * z,
        -kShC1 * x,
        kShC2[0] * x * y,
        kShC2[1] * y * z,
        kShC2[2] * (2.0 * zz - xx - yy),
        kShC2[3] * x * z,
        kShC2[4] * (xx - yy),
        kShC3[0] * y * (3.0 * xx - yy),
        kShC3[1] * x * y * z,
        kShC3[2] * y * (4.0 * zz - xx - yy),
        kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        kShC3[4] * x * (4.0 * zz - xx - yy),
        kShC3[5] * z * (xx - yy),
        kShC3[6] * x * (xx - 3.0 * yy),
    };
}

Vec3 sh_color(const scene::ShCoeffs& sh, const Vec3& dir, int max_degree, const DegreeMask* mask) {
    const auto y = sh_basis(dir);
    Vec3 c = Vec3::Constant(0.5);
    for (int l = 0; l <= std::min(max_degree, scene::kMaxShDegree); ++l) {
        const double m = mask ? (*mask)[static_cast<std::size_t>(l)] : 1.0;
        if (m == 0.0) {
            continue;
        }
        for (std::size_t k = scene::sh_offset(l); k < scene::sh_offset(l + 1); ++k) {
            for (int ch = 0; ch < 3; ++ch) {
                c[ch] += m * y[k] * sh[k][static_cast<std::size_t>(ch)];
            }
        }
    }
    return c.cwiseMax(0.0);
}

Var sh_colors(const Var& sh, const Var& masks, const DenseMatrix& basis, int max_degree) {
    const std::size_t n = sh.rows();
    if (sh.cols() != 3 * scene::kShCoeffs || masks.rows() != n || masks.cols() != 4 || basis.rows() != n ||
        basis.cols() != scene::kShCoeffs) {
        throw DimensionError("sh_colors: expected sh N x 48, masks N x 4, basis N x 16");
    }
    const std::size_t kmax = scene::sh_offset(std::min(max_degree, scene::kMaxShDegree) + 1);
    const DenseMatrix& s = sh.value();
    const DenseMatrix& m = masks.value();
    DenseMatrix out(n, 3);
    // Per-degree partial sums are kept for the mask gradient.
    auto partial = std::make_shared<DenseMatrix>(n, 12);
    for (std::size_t i = 0; i < n; ++i) {
        for (int ch = 0; ch < 3; ++ch) {
            double c = 0.5;
            for (std::size_t k = 0; k < kmax; ++k) {
                const int l = sh_degree_of(k);
                const double term = basis(i, k) * s(i, 3 * k + static_cast<std::size_t>(ch));
                (*partial)(i, static_cast<std::size_t>(3 * l + ch)) += term;
            }
            for (int l = 0; l <= std::min(max_degree, scene::kMaxShDegree); ++l) {
                const double ml = m(i, static_cast<std::size_t>(l));
                if (ml != 0.0) {
                    c += ml * (*partial)(i, static_cast<std::size_t>(3 * l + ch));
                }
            }
            out(i, static_cast<std::size_t>(ch)) = std::max(0.0, c);
        }
    }
    auto basis_copy = std::make_shared<DenseMatrix>(basis);
    return numerics::make_custom(
        std::move(out), {sh, masks}, [basis_copy, partial, kmax, max_degree](numerics::DiffNode& node) {
            const auto& sh_node = node.parents[0];
            const auto& mask_node = node.parents[1];
            const DenseMatrix& mv = mask_node->value;
            const std::size_t n = node.value.rows();
            DenseMatrix* gs = sh_node->requires_grad ? &sh_node->grad_buffer() : nullptr;
            DenseMatrix* gm = mask_node->requires_grad ? &mask_node->grad_buffer() : nullptr;
            const int lmax = std::min(max_degree, scene::kMaxShDegree);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    if (node.value(i, ch) <= 0.0) {
                        continue;  // clamped
                    }
                    const double g = node.grad(i, ch);
                    if (g == 0.0) {
                        continue;
                    }
                    if (gs) {
                        for (std::size_t k = 0; k < kmax; ++k) {
                            const double ml = mv(i, static_cast<std::size_t>(sh_degree_of(k)));
                            (*gs)(i, 3 * k + ch) += g * ml * (*basis_copy)(i, k);
                        }
                    }
                    if (gm) {
                        for (int l = 0; l <= lmax; ++l) {
                            (*gm)(i, static_cast<std::size_t>(l)) +=
                                g * (*partial)(i, static_cast<std::size_t>(3 * l) + ch);
                        }
                    }
                }
            }
        });
}

} // namespace anisogauss::splat
