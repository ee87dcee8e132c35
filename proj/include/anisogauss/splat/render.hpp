// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/autodiff.hpp"
#include "anisogauss/scene/types.hpp"
#include "anisogauss/splat/image.hpp"
#include "anisogauss/splat/sh.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace anisogauss::splat {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Screen-space splat. Only Gaussians with depth in [near, far] are projected.
struct ProjectedGaussian {
    std::uint32_t index = 0;  ///< into the scene
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    Mat2 conic = Mat2::Identity();  ///< cov2d⁻¹
    double depth = 0.0;
    Vec3 view_dir = Vec3::UnitZ();  ///< unit vector camera -> center, world frame
};

/// Low-pass term added to every screen covariance, in px².
inline constexpr double kCov2dBlur = 0.3;
inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kAlphaMax = 0.999;

/// EWA projection of every Gaussian, in depth order (ties by index). Splats
/// with a non-finite screen covariance are dropped and counted in `skipped`.
std::vector<ProjectedGaussian> project(const scene::Scene& scene, const scene::Camera& camera,
                                       std::size_t* skipped = nullptr);

/// α contributed by splat p at pixel centre (x+0.5, y+0.5), before the 1/255
/// cut; clamped to kAlphaMax.
double splat_alpha(const ProjectedGaussian& p, double opacity, int x, int y);

struct Contribution {
    std::uint32_t slot = 0;  ///< position in the projected list
    bool clamped = false;
    double alpha = 0.0;
    double transmittance = 0.0;  ///< T before this splat
};

struct RenderTarget {
    Image color;          ///< H x W x 3
    Image semantic;       ///< H x W x D_f
    Image transmittance;  ///< H x W x 1, final T
    std::vector<std::uint32_t> contributor_count;  ///< per pixel
    std::size_t skipped_degenerate = 0;

    // Present when gradient tracking was requested.
    bool tracked = false;
    std::vector<ProjectedGaussian> projected;
    std::vector<double> opacity;  ///< per projected slot
    numerics::DenseMatrix colors;    ///< N x 3 inputs
    numerics::DenseMatrix features;  ///< N x D_f inputs
    std::vector<std::uint32_t> pixel_offset;  ///< CSR offsets into contributions
    std::vector<Contribution> contributions;
};

struct RasterInputs {
    /// Per scene Gaussian; rows index the scene.
    const numerics::DenseMatrix* colors = nullptr;    ///< N x 3
    const numerics::DenseMatrix* features = nullptr;  ///< N x D_f, may be null
    const std::vector<double>* opacity = nullptr;     ///< N
};

/// Depth-sorted front-to-back blending over 16x16 tiles, black background.
RenderTarget rasterize(const std::vector<ProjectedGaussian>& projected, const RasterInputs& inputs,
                       const scene::Camera& camera, bool track_gradients);

struct RenderOptions {
    int max_degree = scene::kMaxShDegree;
    /// Optional per-Gaussian degree masks (size N).
    const std::vector<DegreeMask>* sh_masks = nullptr;
    bool track_gradients = false;
};

/// Colours from SH toward the camera, features from the scene, then rasterize.
RenderTarget render(const scene::Scene& scene, const scene::Camera& camera, const RenderOptions& options = {});

/// Gradients with respect to the per-Gaussian rasterizer inputs. Rows index the
/// scene; Gaussians that touched no pixel have zero rows and visible = 0.
struct RenderGradients {
    numerics::DenseMatrix d_color;    ///< N x 3
    numerics::DenseMatrix d_feature;  ///< N x D_f
    std::vector<double> d_opacity;    ///< N
    std::vector<Vec2> d_mean2d;       ///< N, from the colour image only
    std::vector<char> visible;        ///< N
};

/// Reverse pass through the blend. d_semantic may be null. Throws StateError
/// when the target was rendered without tracking.
RenderGradients rasterize_backward(const RenderTarget& target, std::size_t scene_size, const Image& d_color,
                                   const Image* d_semantic);

/// Running mean of ‖∂L/∂mean2d‖ over the iterations in which a Gaussian was visible.
class GradientAccumulator {
public:
    explicit GradientAccumulator(std::size_t n = 0) : sum_(n, 0.0), count_(n, 0) {}
    void add(std::size_t i, double magnitude);
    std::vector<double> mean() const;
    double mean(std::size_t i) const { return count_[i] ? sum_[i] / static_cast<double>(count_[i]) : 0.0; }
    std::size_t size() const noexcept { return sum_.size(); }
    void reset(std::size_t n);
    /// Keeps statistics of surviving rows; source_rows[i] == -1 starts a row fresh.
    void remap(const std::vector<long>& source_rows);

private:
    std::vector<double> sum_;
    std::vector<std::size_t> count_;
};

/// Gradient of L_render = mean((render − reference)²) with respect to each
/// visible splat's mean2d; adds ‖·‖ of it to `accum` and returns the vectors.
std::vector<Vec2> accumulate_render_gradients(const RenderTarget& target, std::size_t scene_size,
                                              const Image& reference, GradientAccumulator& accum);

/// Differentiable rasterization. Output is HW x (3 + D_f): RGB then features,
/// rows in pixel order. Parents: colors N x 3, features N x D_f (may be an
/// empty Var), opacity N x 1. After backward, `last_gradients` holds the
/// mean2d gradients of the colour part.
struct RenderNode {
    numerics::Var output;
    std::shared_ptr<RenderTarget> target;
    std::shared_ptr<RenderGradients> last_gradients;
};
RenderNode render_ad(const std::vector<ProjectedGaussian>& projected, const numerics::Var& colors,
                     const numerics::Var& features, const numerics::Var& opacity, const scene::Camera& camera);

/// N x 16 SH basis along the camera -> center direction of every Gaussian.
numerics::DenseMatrix view_sh_basis(const scene::Scene& scene, const scene::Camera& camera);

} // namespace anisogauss::splat
