// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/scene/types.hpp"

#include "anisogauss/errors.hpp"

#include <cmath>

namespace anisogauss::scene {

Mat3 SemanticGaussian::covariance() const {
    const Mat3 r = rotation_matrix();
    return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
}

void validate(const SemanticGaussian& g, std::size_t semantic_dim) {
    if (!g.center.allFinite()) {
        throw ValueError("gaussian: non-finite center");
    }
    if (std::abs(g.rotation.norm() - 1.0) > 1e-9) {
        throw ValueError("gaussian: rotation quaternion is not unit length");
    }
    if (!g.scale.allFinite() || (g.scale.array() <= 0.0).any()) {
        throw ValueError("gaussian: scale entries must be strictly positive");
    }
    if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) {
        throw ValueError("gaussian: opacity outside [0,1]");
    }
    if (g.semantic_feature.size() != semantic_dim) {
        throw ValueError("gaussian: semantic feature has wrong dimension");
    }
}

void Camera::validate() const {
    if (!(near_plane > 0.0)) {
        throw ValueError("camera: near plane must be positive");
    }
    if (!(far_plane > near_plane)) {
        throw ValueError("camera: far plane must exceed near plane");
    }
    if (!(fx > 0.0 && fy > 0.0)) {
        throw ValueError("camera: focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw ValueError("camera: image size must be positive");
    }
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       double fov_y_radians, double near_plane, double far_plane) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) {
        right = forward.unitOrthogonal();
    }
    right.normalize();
    const Vec3 down = forward.cross(right);
    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -(cam.rotation * eye);
    cam.width = width;
    cam.height = height;
    cam.fy = 0.5 * height / std::tan(0.5 * fov_y_radians);
    cam.fx = cam.fy;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.near_plane = near_plane;
    cam.far_plane = far_plane;
    cam.validate();
    return cam;
}

std::vector<Vec3> Scene::centers() const {
    std::vector<Vec3> out;
    out.reserve(gaussians.size());
    for (const auto& g : gaussians) {
        out.push_back(g.center);
    }
    return out;
}

double Scene::extent() const {
    if (gaussians.empty()) {
        return 0.0;
    }
    Vec3 lo = gaussians.front().center;
    Vec3 hi = lo;
    for (const auto& g : gaussians) {
        lo = lo.cwiseMin(g.center);
        hi = hi.cwiseMax(g.center);
    }
    return (hi - lo).maxCoeff();
}

void Scene::validate() const {
    if (gaussians.empty()) {
        throw ValueError("scene: must contain at least one gaussian");
    }
    for (const auto& g : gaussians) {
        anisogauss::scene::validate(g, semantic_dim);
    }
}

} // namespace anisogauss::scene
