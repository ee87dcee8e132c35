// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace anisogauss::scene {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline constexpr int kMaxShDegree = 3;
inline constexpr std::size_t kShCoeffs = 16;  // (kMaxShDegree + 1)^2

/// First coefficient index of SH degree `l` in the flat layout.
constexpr std::size_t sh_offset(int l) { return static_cast<std::size_t>(l * l); }
/// Number of coefficients (per channel) of degree `l`.
constexpr std::size_t sh_block_size(int l) { return static_cast<std::size_t>(2 * l + 1); }

/// Flat SH storage: coefficient k in [0,16) x RGB channel. Degree l occupies
/// rows [l², (l+1)²).
using ShCoeffs = std::array<std::array<double, 3>, kShCoeffs>;

struct SemanticGaussian {
    Vec3 center = Vec3::Zero();
    Quat rotation = Quat::Identity();  ///< unit quaternion
    Vec3 scale = Vec3::Ones();         ///< linear standard deviations
    double opacity = 1.0;
    ShCoeffs sh{};
    std::vector<double> semantic_feature;

    Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
    /// Σ = R diag(s²) Rᵀ.
    Mat3 covariance() const;
};

/// Throws ValueError when a Gaussian breaks the data-model invariants.
void validate(const SemanticGaussian& g, std::size_t semantic_dim);

/// Pinhole camera, OpenCV convention (x right, y down, z forward).
struct Camera {
    Mat3 rotation = Mat3::Identity();  ///< world -> camera
    Vec3 translation = Vec3::Zero();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    double near_plane = 0.01;
    double far_plane = 100.0;

    Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
    Vec3 position() const { return -(rotation.transpose() * translation); }

    /// Throws ValueError unless near > 0, far > near, focal lengths > 0, size > 0.
    void validate() const;

    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                          double fov_y_radians, double near_plane, double far_plane);
};

struct LocalRegion {
    std::size_t center_index = 0;
    std::vector<std::size_t> member_indices;  ///< ascending, contains center_index
    double radius = 0.0;
};

struct Scene {
    std::vector<SemanticGaussian> gaussians;
    std::size_t semantic_dim = 0;
    std::string source_path;
    double unit_scale = 1.0;

    std::size_t size() const noexcept { return gaussians.size(); }
    std::vector<Vec3> centers() const;
    /// Longest side of the axis-aligned bounding box of the centers.
    double extent() const;
    /// Validates every Gaussian and N >= 1.
    void validate() const;
};

} // namespace anisogauss::scene
