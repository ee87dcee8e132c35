// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/adapt/densify.hpp"

#include "anisogauss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace anisogauss::adapt {

using numerics::DenseMatrix;
using numerics::Var;
using scene::Vec3;

void DensifyParams::validate() const {
    if (!(d_min > 0.0 && d_min < d_max)) {
        throw ValueError("densify: require 0 < d_min < d_max");
    }
    if (n_max < 1) {
        throw ValueError("densify: n_max must be at least 1");
    }
    if (!(alpha_d > 0.0)) {
        throw ValueError("densify: alpha_d must be positive");
    }
    if (radius < 0.0) {
        throw ValueError("densify: radius must be non-negative");
    }
}

double region_volume(const scene::Scene& scene, const scene::LocalRegion& region, double radius) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t m : region.member_indices) {
        lo = lo.cwiseMin(scene.gaussians[m].center);
        hi = hi.cwiseMax(scene.gaussians[m].center);
    }
    const Vec3 ext = (hi - lo).cwiseMax(0.0);
    return std::max(ext.prod(), radius * radius * radius * 1e-3);
}

std::size_t candidate_count(const DensifyParams& params, double volume, std::size_t n_original) {
    if (n_original == 0) {
        return 0;
    }
    const double raw = params.alpha_d * volume / static_cast<double>(n_original);
    const double n = std::floor(raw * (1.0 + 1e-12));
    return n >= static_cast<double>(params.n_max) ? params.n_max : static_cast<std::size_t>(std::max(0.0, n));
}

DensifyResult densify_region(const scene::Scene& scene, const scene::LocalRegion& region,
                             std::span<const double> grad_mean, const DensifyParams& params, std::uint64_t seed) {
    params.validate();
    DensifyResult out;
    const auto& members = region.member_indices;
    if (members.empty()) {
        return out;
    }
    double g = 0.0;
    for (std::size_t m : members) {
        g += grad_mean[m];
    }
    out.region_gradient = g / static_cast<double>(members.size());
    if (!(out.region_gradient > params.grad_threshold)) {
        return out;
    }
    out.triggered = true;
    const double r = params.radius > 0.0 ? params.radius : region.radius;
    out.drawn = candidate_count(params, region_volume(scene, region, r), members.size());
    const Vec3 c = scene.gaussians[region.center_index].center;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;
    for (std::size_t k = 0; k < out.drawn; ++k) {
        Vec3 dir(normal(rng), normal(rng), normal(rng));
        while (dir.squaredNorm() < 1e-24) {
            dir = Vec3(normal(rng), normal(rng), normal(rng));
        }
        const Vec3 p = c + dir.normalized() * (r * std::cbrt(uniform(rng)));
        std::size_t best = members.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t m : members) {
            const double d = (scene.gaussians[m].center - p).norm();
            if (d < best_d) {
                best_d = d;
                best = m;
            }
        }
        if (best_d < params.d_min || best_d > params.d_max) {
            continue;
        }
        scene::SemanticGaussian copy = scene.gaussians[best];
        copy.center = p;
        out.added.push_back(std::move(copy));
        out.sources.push_back(best);
    }
    return out;
}

std::vector<double> feature_gradient_magnitudes(const scene::Scene& scene,
                                                std::span<const scene::LocalRegion> regions,
                                                const DenseMatrix& encodings, const encode::GateWeights& gate,
                                                const DenseMatrix& semantic, double tau, double step) {
    const std::size_t n = scene.size();
    std::vector<std::vector<std::size_t>> membership(n);
    std::vector<encode::RegionFrame> frames;
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const auto& c = scene.gaussians[regions[r].center_index];
        frames.push_back({c.center, c.covariance()});
        for (std::size_t m : regions[r].member_indices) {
            membership[m].push_back(r);
        }
    }
    const std::size_t d = encodings.cols();
    const std::size_t df = semantic.cols();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (membership[i].empty()) {
            continue;
        }
        std::vector<encode::RegionFrame> mine;
        for (std::size_t r : membership[i]) {
            mine.push_back(frames[r]);
        }
        DenseMatrix sem_row(1, df);
        std::copy(semantic.row(i).begin(), semantic.row(i).end(), sem_row.row(0).begin());
        auto feature_at = [&](const Vec3& q) {
            const auto w = encode::propagation_weights(q, mine, tau);
            DenseMatrix shape(1, d);
            for (std::size_t k = 0; k < w.size(); ++k) {
                for (std::size_t c = 0; c < d; ++c) {
                    shape(0, c) += w[k] * encodings(membership[i][k], c);
                }
            }
            return encode::gated_fuse(Var::constant(shape), Var::constant(sem_row), gate).final.value();
        };
        double sq = 0.0;
        for (int axis = 0; axis < 3; ++axis) {
            Vec3 e = Vec3::Zero();
            e[axis] = step;
            const DenseMatrix diff = feature_at(scene.gaussians[i].center + e) - feature_at(scene.gaussians[i].center - e);
            for (double v : diff.data()) {
                sq += (v / (2.0 * step)) * (v / (2.0 * step));
            }
        }
        out[i] = std::sqrt(sq);
    }
    return out;
}

} // namespace anisogauss::adapt
