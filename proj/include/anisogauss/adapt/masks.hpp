// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/adapt/histogram.hpp"
#include "anisogauss/encode/fusion.hpp"
#include "anisogauss/numerics/layers.hpp"
#include "anisogauss/scene/types.hpp"
#include "anisogauss/splat/render.hpp"

#include <array>
#include <iosfwd>
#include <span>

namespace anisogauss::adapt {

inline constexpr double kDefaultTauPrune = 0.01;
inline constexpr double kDefaultTauSh = 0.01;
inline constexpr std::size_t kDefaultAdaptInterval = 100;

/// Learnable per-Gaussian mask parameters plus densification statistics.
struct AdaptationState {
    Var phi;  ///< N x 1
    Var psi;  ///< N x 4, one raw SH mask parameter per degree
    splat::GradientAccumulator grad_accum;
    std::vector<double> soft_mask;       ///< last m̂
    std::vector<char> binary_mask;       ///< last m
    DenseMatrix sh_soft;                 ///< last δ, N x 4
    DenseMatrix sh_binary;               ///< last binarised δ, N x 4

    static AdaptationState init(std::size_t n, double phi0 = 0.0, double psi0 = 0.0);
    std::size_t size() const { return phi.rows(); }
    /// New row i takes old row source_rows[i]; -1 gets the initial values.
    void remap(const std::vector<long>& source_rows, double phi0 = 0.0, double psi0 = 0.0);
};

/// Two gating stages: f' = f ⊙ σ(gate f), u = [f', φ], h = u ⊙ σ(hidden u),
/// m̂ = σ(out h).
struct PruneNet {
    numerics::Linear gate;    ///< d -> d
    numerics::Linear hidden;  ///< d + 1 -> d + 1
    numerics::Linear out;     ///< d + 1 -> 1

    /// `out_bias` sets the initial m̂ near σ(out_bias) so training starts with
    /// every Gaussian kept. The φ channel starts outside the second gate's
    /// logits and with unit output weight, so m̂ is initially increasing in φ
    /// without bound in either direction.
    static PruneNet init(std::size_t feature_dim, std::uint64_t seed, double out_bias = 3.0);
    void collect(numerics::NamedParams& out) const;
};

struct PruneResult {
    Var soft;    ///< N x 1, m̂ in (0, 1)
    Var binary;  ///< N x 1, 1[m̂ >= τ] with identity backward
    Var loss;    ///< L_mask = mean(m̂)
};

/// Throws DimensionError when fused is not N x d or phi not N x 1.
PruneResult prune_mask(const Var& fused, const Var& phi, const PruneNet& net, double tau_prune);

/// Per degree: η = MLP_H(H / |X|) and δ = σ(mask [f, ψ, η]).
struct ShPruneNet {
    std::size_t bins = kDefaultBins;
    std::array<numerics::Linear, 4> hist1;  ///< B -> hist_hidden
    std::array<numerics::Linear, 4> hist2;  ///< hist_hidden -> d_h
    std::array<numerics::Linear, 4> mask;   ///< d + 1 + d_h -> 1

    static ShPruneNet init(std::size_t feature_dim, std::size_t bins, std::size_t hist_hidden, std::size_t embed_dim,
                           std::uint64_t seed, double mask_bias = 3.0);
    std::size_t embed_dim() const { return hist2[0].out_dim(); }
    void collect(numerics::NamedParams& out) const;
};

/// Per-degree histogram inputs of one training phase: which coefficient
/// values each region samples and the shared range.
struct HistogramPlan {
    std::vector<std::vector<std::size_t>> region_members;
    DenseMatrix weights;    ///< N x R, region -> Gaussian distribution of η
    DenseMatrix uncovered;  ///< N x 1 of {0, 1}
    std::array<double, 4> lo{};
    std::array<double, 4> hi{};
    std::array<double, 4> gamma{};
    /// Normalised histogram of every coefficient in the scene, per degree. It
    /// is a constant of the phase; uncovered Gaussians read η from it.
    std::array<DenseMatrix, 4> scene_hist;
};

/// Ranges are the padded min/max of every degree-l coefficient in the scene.
/// `sh` is N x 48 in coefficient-major order (3 channels per coefficient).
HistogramPlan build_histogram_plan(const DenseMatrix& sh, std::span<const scene::LocalRegion> regions,
                                   const encode::PropagationPlan& propagation, std::size_t bins = kDefaultBins);

/// Degree-l coefficient values of the given rows, as a differentiable matrix.
Var degree_samples(const Var& sh, int degree, const std::vector<std::size_t>& rows);

/// N x d_h: each Gaussian's η^(l). Covered rows mix their regions' embeddings with
/// the propagation weights; uncovered rows use a scene-wide histogram.
Var histogram_embedding(const Var& sh, int degree, const HistogramPlan& plan, const ShPruneNet& net);

struct ShPruneResult {
    Var soft;    ///< N x 4, δ
    Var binary;  ///< N x 4, STE-binarised
    Var loss;    ///< L_SH = (1/N) Σ_i Σ_l (2l+1) δ_i^(l)
};

/// Throws DimensionError.
ShPruneResult sh_prune(const Var& fused, const Var& psi, const Var& sh, const HistogramPlan& plan,
                       const ShPruneNet& net, const std::array<double, 4>& tau);

/// Same as sh_prune without the histogram path: η is supplied per degree (N x d_h each).
ShPruneResult sh_prune_with_embeddings(const Var& fused, const Var& psi, const std::array<Var, 4>& eta,
                                       const ShPruneNet& net, const std::array<double, 4>& tau);

struct LossWeights {
    double render = 1.0;
    double semantic = 1.0;
    double mask = 5e-4;
    double sh = 1e-4;
    double reg = 1.0;
};

/// Any term may be an invalid Var (absent). Throws NonFiniteError on a non-finite
/// term or DimensionError on a non-scalar one.
struct LossTerms {
    Var render;
    Var semantic;
    Var mask;
    Var sh;
    Var reg;
};
Var adaptation_losses(const LossTerms& terms, const LossWeights& weights);

/// Sets opacity to m·α (m ∈ {0, 1}); returns how many were masked. Scale is
/// left alone so the scene stays valid; `remove_masked` then deletes the rows.
std::size_t apply_prune_mask(scene::Scene& scene, std::span<const char> keep);

/// Physically drops rows with keep == 0. Returns source_rows (new -> old).
std::vector<long> remove_masked(scene::Scene& scene, std::span<const char> keep);

/// Zeroes degree-l SH blocks where mask(i, l) == 0. Returns per-degree counts.
std::array<std::size_t, 4> apply_sh_masks(scene::Scene& scene, const DenseMatrix& binary);

struct AdaptationEvent {
    std::size_t iteration = 0;
    std::size_t pruned = 0;
    std::size_t added = 0;
    std::array<std::size_t, 4> sh_zeroed_per_degree{};
    double l_mask = 0.0;
    double l_sh = 0.0;
};

/// One JSON object per line: {iteration, pruned, added, sh_zeroed_per_degree, L_mask, L_SH}.
void write_adaptation_event(std::ostream& os, const AdaptationEvent& event);

} // namespace anisogauss::adapt
