// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/encode/fusion.hpp"

#include "anisogauss/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace anisogauss::encode {

namespace ad = numerics::ad;

namespace {

double mahalanobis_over_tau(const Vec3& q, const RegionFrame& region, double tau) {
    if (!(tau > 0.0)) {
        throw ValueError("propagation temperature must be positive");
    }
    const Eigen::LLT<Mat3> llt(region.covariance);
    if (llt.info() != Eigen::Success) {
        throw NotSPDError("region covariance is not positive definite");
    }
    const Vec3 diff = q - region.center;
    return diff.dot(llt.solve(diff)) / tau;
}

std::vector<double> normalise_log(const std::vector<double>& neg_log) {
    const double lo = *std::min_element(neg_log.begin(), neg_log.end());
    std::vector<double> w(neg_log.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(lo - neg_log[i]);
        total += w[i];
    }
    for (double& v : w) {
        v /= total;
    }
    return w;
}

} // namespace

double propagation_kernel(const Vec3& q, const RegionFrame& region, double tau) {
    return std::exp(-mahalanobis_over_tau(q, region, tau));
}

std::vector<double> propagation_weights(const Vec3& q, std::span<const RegionFrame> regions, double tau) {
    if (regions.empty()) {
        throw NoRegionError("point lies in no region");
    }
    std::vector<double> e;
    e.reserve(regions.size());
    for (const auto& r : regions) {
        e.push_back(mahalanobis_over_tau(q, r, tau));
    }
    return normalise_log(e);
}

Var propagate(std::span<const Var> encodings, const Vec3& q, std::span<const RegionFrame> regions, double tau) {
    if (encodings.size() != regions.size()) {
        throw DimensionError("one encoding per region expected");
    }
    const auto w = propagation_weights(q, regions, tau);
    Var out = ad::scale(encodings[0], w[0]);
    for (std::size_t i = 1; i < w.size(); ++i) {
        out = ad::add(out, ad::scale(encodings[i], w[i]));
    }
    return out;
}

PropagationPlan build_propagation(const scene::Scene& scene, std::span<const scene::LocalRegion> regions,
                                  double tau) {
    const std::size_t n = scene.size();
    PropagationPlan plan;
    plan.weights = DenseMatrix(n, regions.size());
    plan.covered = DenseMatrix(n, 1);
    std::vector<RegionFrame> frames;
    frames.reserve(regions.size());
    std::vector<std::vector<std::size_t>> membership(n);
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const auto& c = scene.gaussians.at(regions[r].center_index);
        frames.push_back({c.center, c.covariance()});
        for (std::size_t m : regions[r].member_indices) {
            membership.at(m).push_back(r);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (membership[i].empty()) {
            continue;
        }
        std::vector<double> e;
        for (std::size_t r : membership[i]) {
            e.push_back(mahalanobis_over_tau(scene.gaussians[i].center, frames[r], tau));
        }
        const auto w = normalise_log(e);
        for (std::size_t k = 0; k < w.size(); ++k) {
            plan.weights(i, membership[i][k]) = w[k];
        }
        plan.covered(i, 0) = 1.0;
        ++plan.covered_count;
    }
    return plan;
}

Var propagate(const Var& encodings, const PropagationPlan& plan) {
    if (encodings.rows() != plan.weights.cols()) {
        throw DimensionError("propagate: one encoding row per region expected");
    }
    return ad::matmul(Var::constant(plan.weights), encodings);
}

GateWeights GateWeights::init(std::size_t shape_dim, std::size_t semantic_dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GateWeights g;
    g.shape_proj = numerics::Linear::xavier(shape_dim, semantic_dim, rng, "fuse.shape_proj");
    g.gate = numerics::Linear::xavier(2 * semantic_dim, semantic_dim, rng, "fuse.gate");
    return g;
}

void GateWeights::collect(numerics::NamedParams& out) const {
    shape_proj.collect(out);
    gate.collect(out);
}

FusedFeature gated_fuse(const Var& shape, const Var& semantic, const GateWeights& weights,
                        const DenseMatrix* covered) {
    const std::size_t df = weights.gate.out_dim();
    if (shape.cols() != weights.shape_proj.in_dim() || semantic.cols() != df || shape.rows() != semantic.rows() ||
        weights.gate.in_dim() != 2 * df || weights.shape_proj.out_dim() != df) {
        throw DimensionError("gated_fuse: shape/semantic dimensions do not match the gate");
    }
    if (covered && (covered->rows() != shape.rows() || covered->cols() != 1)) {
        throw DimensionError("gated_fuse: covered mask must be r x 1");
    }
    FusedFeature f;
    f.semantic = semantic;
    f.shape = weights.shape_proj(shape);
    if (covered) {
        f.shape = ad::mul_col(f.shape, Var::constant(*covered));
    }
    f.gate = ad::sigmoid(weights.gate(ad::concat_cols({f.shape, semantic})));
    if (covered) {
        DenseMatrix uncovered(covered->rows(), df);
        for (std::size_t i = 0; i < covered->rows(); ++i) {
            for (std::size_t c = 0; c < df; ++c) {
                uncovered(i, c) = 1.0 - (*covered)(i, 0);
            }
        }
        f.gate = ad::add(ad::mul_col(f.gate, Var::constant(*covered)), Var::constant(uncovered));
    }
    f.final = ad::add(f.shape, ad::mul(f.gate, ad::sub(semantic, f.shape)));
    return f;
}

} // namespace anisogauss::encode
