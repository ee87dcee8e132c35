// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/autodiff.hpp"
#include "anisogauss/scene/types.hpp"

#include <array>
#include <optional>

namespace anisogauss::splat {

using scene::Vec3;

/// Real spherical harmonics normalisation constants, degrees 0..3, in the sign
/// convention used by common splatting exporters.
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kShC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                                -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kShC3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                                0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                                -0.5900435899266435};

/// Y_0..Y_15 at a unit direction.
std::array<double, scene::kShCoeffs> sh_basis(const Vec3& dir);

/// Per-degree multiplicative mask (1 keeps, 0 drops the block).
using DegreeMask = std::array<double, 4>;

/// max(0, 0.5 + Σ_k Y_k c_k) over degrees <= max_degree whose mask is non-zero.
Vec3 sh_color(const scene::ShCoeffs& sh, const Vec3& dir, int max_degree, const DegreeMask* mask = nullptr);

/// Differentiable colour evaluation for N Gaussians.
/// sh: N x 48 (coefficient-major, column 3k+c), masks: N x 4 per-degree
/// multipliers, basis: N x 16 precomputed Y_k toward the camera.
/// Returns N x 3 colours max(0, 0.5 + Σ_k mask_l(k) Y_k sh_kc).
numerics::Var sh_colors(const numerics::Var& sh, const numerics::Var& masks, const numerics::DenseMatrix& basis,
                        int max_degree = scene::kMaxShDegree);

/// Degree owning flat coefficient k.
constexpr int sh_degree_of(std::size_t k) {
    return k < 1 ? 0 : k < 4 ? 1 : k < 9 ? 2 : 3;
}

} // namespace anisogauss::splat
