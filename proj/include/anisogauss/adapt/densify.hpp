// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/encode/fusion.hpp"
#include "anisogauss/scene/types.hpp"

#include <span>
#include <vector>

namespace anisogauss::adapt {

struct DensifyParams {
    double grad_threshold = 2e-4;
    double alpha_d = 1.0;
    std::size_t n_max = 32;
    double radius = 0.0;  ///< sampling radius; 0 uses the region radius
    double d_min = 0.005;
    double d_max = 0.1;

    /// Throws ValueError unless 0 < d_min < d_max, n_max >= 1, alpha_d > 0.
    void validate() const;
};

/// Axis-aligned bounding-box volume of the member centers, at least r³·1e-3.
double region_volume(const scene::Scene& scene, const scene::LocalRegion& region, double radius);

/// N_p = min(N_max, floor(α_d · V_pc / N_ori)).
std::size_t candidate_count(const DensifyParams& params, double volume, std::size_t n_original);

struct DensifyResult {
    bool triggered = false;
    double region_gradient = 0.0;  ///< mean of grad_mean over members
    std::size_t drawn = 0;         ///< N_p
    std::vector<scene::SemanticGaussian> added;
    std::vector<std::size_t> sources;  ///< nearest original member of each added one
};

/// Draws N_p candidates uniformly in the ball of radius r about the region
/// center, keeps those whose nearest member lies within [d_min, d_max], and
/// copies that member's attributes onto each kept center. Never touches the scene.
DensifyResult densify_region(const scene::Scene& scene, const scene::LocalRegion& region,
                             std::span<const double> grad_mean, const DensifyParams& params, std::uint64_t seed);

/// Alternative gradient signal: ‖∂f_final/∂q‖ by central differences of the
/// propagated and fused feature at each Gaussian center. Uncovered Gaussians get 0.
std::vector<double> feature_gradient_magnitudes(const scene::Scene& scene,
                                                std::span<const scene::LocalRegion> regions,
                                                const numerics::DenseMatrix& encodings,
                                                const encode::GateWeights& gate,
                                                const numerics::DenseMatrix& semantic, double tau,
                                                double step);

} // namespace anisogauss::adapt
