// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/encode/encoder.hpp"

namespace anisogauss::encode {

/// Default propagation temperature τ_prop.
inline constexpr double kDefaultTauProp = 1.0;

/// Center and covariance of one region's center Gaussian.
struct RegionFrame {
    Vec3 center = Vec3::Zero();
    Mat3 covariance = Mat3::Identity();
};

/// Unnormalised ω = exp(-(q-c)ᵀ Σ⁻¹ (q-c) / τ). Throws NotSPDError or ValueError (τ <= 0).
double propagation_kernel(const Vec3& q, const RegionFrame& region, double tau);

/// Normalised weights over the regions containing q, computed in log space so
/// they sum to one even when every ω underflows. Throws NoRegionError if empty.
std::vector<double> propagation_weights(const Vec3& q, std::span<const RegionFrame> regions, double tau);

/// f_shape(q) as a 1 x d row from the encodings of the regions containing q.
Var propagate(std::span<const Var> encodings, const Vec3& q, std::span<const RegionFrame> regions, double tau);

/// Scene-wide propagation: row i of `weights` holds Gaussian i's normalised
/// weights over regions, zero for regions it is not a member of. Uncovered
/// Gaussians have all-zero rows and covered(i) = 0.
struct PropagationPlan {
    DenseMatrix weights;  ///< N x R
    DenseMatrix covered;  ///< N x 1 of {0, 1}
    std::size_t covered_count = 0;
};

PropagationPlan build_propagation(const scene::Scene& scene, std::span<const scene::LocalRegion> regions,
                                  double tau);

/// N x d shape features: plan.weights * encodings (encodings R x d).
Var propagate(const Var& encodings, const PropagationPlan& plan);

struct GateWeights {
    numerics::Linear shape_proj;  ///< d -> D_f
    numerics::Linear gate;        ///< 2 D_f -> D_f

    static GateWeights init(std::size_t shape_dim, std::size_t semantic_dim, std::uint64_t seed);
    void collect(numerics::NamedParams& out) const;
};

struct FusedFeature {
    Var shape;     ///< projected to D_f
    Var semantic;
    Var gate;      ///< in (0, 1); exactly 1 on uncovered rows
    Var final;
};

/// g = sigmoid(gate([shape_proj(f_shape), f_sem])), final = shape + g ⊙ (sem - shape).
/// With `covered` (r x 1), rows marked 0 get shape = 0 and g = 1, so their
/// final feature is the semantic one. Throws DimensionError.
FusedFeature gated_fuse(const Var& shape, const Var& semantic, const GateWeights& weights,
                        const DenseMatrix* covered = nullptr);

} // namespace anisogauss::encode
