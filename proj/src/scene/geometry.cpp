// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/scene/geometry.hpp"

#include "anisogauss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace anisogauss::scene {

std::vector<std::size_t> frustum_cull(const Scene& scene, const Camera& camera) {
    camera.validate();
    const double w = camera.width;
    const double h = camera.height;
    // Side planes through the camera origin, inward normals in camera space.
    const std::array<Vec3, 4> normals = {
        Vec3(camera.fx, 0.0, camera.cx).normalized(),
        Vec3(-camera.fx, 0.0, w - camera.cx).normalized(),
        Vec3(0.0, camera.fy, camera.cy).normalized(),
        Vec3(0.0, -camera.fy, h - camera.cy).normalized(),
    };
    constexpr double tol = 1e-9;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
        const Vec3 p = camera.to_camera(scene.gaussians[i].center);
        if (p.z() < camera.near_plane - tol || p.z() > camera.far_plane + tol) {
            continue;
        }
        bool inside = true;
        for (const auto& n : normals) {
            if (n.dot(p) < -tol) {
                inside = false;
                break;
            }
        }
        if (inside) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t k, std::size_t start) {
    if (k > points.size()) {
        throw CountError("farthest_point_sample: k exceeds the number of points");
    }
    if (k == 0) {
        return {};
    }
    if (start >= points.size()) {
        throw CountError("farthest_point_sample: start index out of range");
    }
    std::vector<std::size_t> picked{start};
    std::vector<double> mind(points.size(), std::numeric_limits<double>::infinity());
    mind[start] = -1.0;  // selected points are pinned below any real distance
    std::size_t last = start;
    while (picked.size() < k) {
        std::size_t best = 0;
        double best_d = -0.5;
        for (std::size_t i = 0; i < points.size(); ++i) {
            mind[i] = std::min(mind[i], (points[i] - points[last]).norm());
            if (mind[i] > best_d) {
                best_d = mind[i];
                best = i;
            }
        }
        picked.push_back(best);
        mind[best] = -1.0;
        last = best;
    }
    return picked;
}

std::size_t SpatialGrid::KeyHash::operator()(const Key& k) const noexcept {
    const auto h = static_cast<std::size_t>(k.x) * 73856093u ^ static_cast<std::size_t>(k.y) * 19349663u ^
                   static_cast<std::size_t>(k.z) * 83492791u;
    return h;
}

SpatialGrid::Key SpatialGrid::key_of(const Vec3& p) const {
    return Key{static_cast<long>(std::floor(p.x() / cell_)), static_cast<long>(std::floor(p.y() / cell_)),
               static_cast<long>(std::floor(p.z() / cell_))};
}

SpatialGrid::SpatialGrid(std::span<const Vec3> points, std::span<const std::size_t> domain, double cell_size)
    : points_(points), cell_(cell_size) {
    if (!(cell_size > 0.0)) {
        throw ValueError("SpatialGrid: cell size must be positive");
    }
    for (std::size_t idx : domain) {
        cells_[key_of(points_[idx])].push_back(idx);
    }
}

std::vector<std::size_t> SpatialGrid::within(const Vec3& query, double r) const {
    if (r > cell_) {
        throw ValueError("SpatialGrid: query radius exceeds cell size");
    }
    const Key c = key_of(query);
    std::vector<std::size_t> out;
    for (long dx = -1; dx <= 1; ++dx) {
        for (long dy = -1; dy <= 1; ++dy) {
            for (long dz = -1; dz <= 1; ++dz) {
                auto it = cells_.find(Key{c.x + dx, c.y + dy, c.z + dz});
                if (it == cells_.end()) {
                    continue;
                }
                for (std::size_t idx : it->second) {
                    if ((points_[idx] - query).norm() <= r) {
                        out.push_back(idx);
                    }
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

LocalRegion neighborhood_query(const Scene& scene, std::size_t center, double r, std::span<const std::size_t> domain) {
    if (!(r > 0.0)) {
        throw ValueError("neighborhood_query: radius must be positive");
    }
    if (std::find(domain.begin(), domain.end(), center) == domain.end()) {
        throw ValueError("neighborhood_query: center is not in the domain");
    }
    const std::vector<Vec3> pts = scene.centers();
    SpatialGrid grid(pts, domain, r);
    return LocalRegion{center, grid.within(pts[center], r), r};
}

std::vector<LocalRegion> build_regions(const Scene& scene, const Camera& camera, const RegionParams& params) {
    const std::vector<std::size_t> culled = frustum_cull(scene, camera);
    if (culled.empty() || params.centers == 0) {
        return {};
    }
    const std::vector<Vec3> all = scene.centers();
    std::vector<Vec3> pts;
    pts.reserve(culled.size());
    for (std::size_t idx : culled) {
        pts.push_back(all[idx]);
    }
    const std::size_t k = std::min(params.centers, culled.size());
    const std::size_t start = std::min(params.fps_start, culled.size() - 1);
    const std::vector<std::size_t> picks = farthest_point_sample(pts, k, start);

    SpatialGrid grid(all, culled, params.radius);
    std::vector<LocalRegion> regions;
    regions.reserve(picks.size());
    for (std::size_t p : picks) {
        const std::size_t center = culled[p];
        LocalRegion region{center, grid.within(all[center], params.radius), params.radius};
        if (params.max_region_size > 0 && region.member_indices.size() > params.max_region_size) {
            auto& m = region.member_indices;
            std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
                return (all[a] - all[center]).squaredNorm() < (all[b] - all[center]).squaredNorm();
            });
            m.resize(params.max_region_size);
            std::sort(m.begin(), m.end());
        }
        regions.push_back(std::move(region));
    }
    return regions;
}

} // namespace anisogauss::scene
