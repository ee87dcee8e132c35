// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/scene/types.hpp"

#include <span>
#include <unordered_map>
#include <vector>

namespace anisogauss::scene {

/// Indices of Gaussians whose centers lie inside the six frustum planes
/// (1e-9 tolerance on normalised plane distances), in scene order.
std::vector<std::size_t> frustum_cull(const Scene& scene, const Camera& camera);

/// Greedy farthest point sampling. Element 0 is `start`; each following pick
/// maximises the distance to the selected set, ties going to the lowest index.
/// Throws CountError if k exceeds the number of points.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t k, std::size_t start);

/// Uniform hash grid over a subset of points, cell size equal to the query radius.
class SpatialGrid {
public:
    SpatialGrid(std::span<const Vec3> points, std::span<const std::size_t> domain, double cell_size);

    /// Domain members p with ‖p − query‖ ≤ r, ascending. Requires r ≤ cell size.
    std::vector<std::size_t> within(const Vec3& query, double r) const;

private:
    struct Key {
        long x, y, z;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept;
    };
    Key key_of(const Vec3& p) const;

    std::span<const Vec3> points_;
    double cell_;
    std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

/// N(c) = {p in domain : ‖p − c‖ ≤ r}, sorted ascending. `center` must be in
/// `domain`; r must be positive.
LocalRegion neighborhood_query(const Scene& scene, std::size_t center, double r, std::span<const std::size_t> domain);

struct RegionParams {
    std::size_t centers = 16;         ///< FPS centers per view
    double radius = 0.5;              ///< world units
    std::size_t fps_start = 0;        ///< index into the culled list
    std::size_t max_region_size = 64; ///< keeps the nearest members (center always kept)
};

/// Frustum cull -> FPS centers -> radius neighbourhoods over the culled set.
std::vector<LocalRegion> build_regions(const Scene& scene, const Camera& camera, const RegionParams& params);

} // namespace anisogauss::scene
