// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/spectral/descriptor.hpp"

#include "anisogauss/errors.hpp"
#include "anisogauss/numerics/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace anisogauss::spectral {

namespace {

DenseMatrix to_dense(const Mat3& m) {
    DenseMatrix out(3, 3);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            out(r, c) = m(r, c);
        }
    }
    return out;
}

Mat3 rot_z(double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Mat3 r;
    r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
    return r;
}

// Sorted (distance, index) list of the other points.
std::vector<std::pair<double, std::size_t>> sorted_neighbors(std::span<const Vec3> points, std::size_t i) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(points.size());
    for (std::size_t j = 0; j < points.size(); ++j) {
        if (j != i) {
            d.emplace_back((points[i] - points[j]).norm(), j);
        }
    }
    std::sort(d.begin(), d.end());
    return d;
}

// Fixes the sign of the minor axis so the frame is covariant under rigid
// motions: the normal points away from the region centroid, falling back to
// the sign of the third moment of member offsets along the normal.
Mat3 orient_frame(Mat3 frame, const Vec3& center, const Vec3& centroid, std::span<const Vec3> members,
                  double length_scale) {
    const Vec3 n = frame.col(2);
    const double tol = 1e-9 * std::max(length_scale, 1e-300);
    double s = n.dot(center - centroid);
    if (std::abs(s) <= tol) {
        double m3 = 0.0;
        double scale3 = 0.0;
        for (const auto& p : members) {
            const double t = n.dot(p - center);
            m3 += t * t * t;
            scale3 += std::abs(t * t * t);
        }
        s = std::abs(m3) > 1e-9 * scale3 ? m3 : 0.0;
    }
    if (s < 0.0) {
        frame.col(1) = -frame.col(1);
        frame.col(2) = -frame.col(2);
    }
    return frame;
}

} // namespace

AnisotropicMetric build_metric(const Mat3& sigma, double beta) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        throw ValueError("build_metric: beta must be finite and non-negative");
    }
    if (!sigma.allFinite()) {
        throw NotSPDError("build_metric: covariance has non-finite entries");
    }
    const Mat3 sym = 0.5 * (sigma + sigma.transpose());
    const numerics::SymEig eig = numerics::sym_eig(to_dense(sym));
    if (eig.values[0] <= 1e-12) {
        throw NotSPDError("build_metric: covariance is not positive definite");
    }
    AnisotropicMetric out;
    out.beta = beta;
    for (int c = 0; c < 3; ++c) {
        const std::size_t src = 2 - static_cast<std::size_t>(c);  // descending
        out.eigenvalues[c] = eig.values[src];
        for (int r = 0; r < 3; ++r) {
            out.frame(r, c) = eig.vectors(static_cast<std::size_t>(r), src);
        }
    }
    if (out.frame.determinant() < 0.0) {
        out.frame.col(2) = -out.frame.col(2);
    }
    Vec3 d;
    for (int k = 0; k < 3; ++k) {
        d[k] = 1.0 / (1.0 + beta * out.eigenvalues[k]);
    }
    out.matrix = out.frame * d.asDiagonal() * out.frame.transpose();
    out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
    return out;
}

DenseMatrix AlboGraph::symmetrized() const {
    const std::size_t n = size();
    DenseMatrix ls = DenseMatrix::identity(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && weights(i, j) != 0.0 && degrees[i] > 0.0 && degrees[j] > 0.0) {
                ls(i, j) = -weights(i, j) / std::sqrt(degrees[i] * degrees[j]);
            }
        }
    }
    return ls;
}

double mean_knn_distance(std::span<const Vec3> points, std::size_t k) {
    if (points.size() < 2 || k == 0) {
        return 0.0;
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto nb = sorted_neighbors(points, i);
        const std::size_t m = std::min(k, nb.size());
        for (std::size_t t = 0; t < m; ++t) {
            total += nb[t].first;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

std::vector<std::vector<std::size_t>> neighbor_graph(std::span<const Vec3> points, const GraphRule& rule) {
    const std::size_t n = points.size();
    std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        if (rule.kind == NeighborRule::Knn) {
            const auto nb = sorted_neighbors(points, i);
            const std::size_t m = std::min(rule.k, nb.size());
            for (std::size_t t = 0; t < m; ++t) {
                adj[i][nb[t].second] = 1;
                adj[nb[t].second][i] = 1;
            }
        } else {
            if (!(rule.radius > 0.0)) {
                throw ValueError("neighbor_graph: radius rule needs a positive radius");
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i && (points[i] - points[j]).norm() <= rule.radius) {
                    adj[i][j] = 1;
                    adj[j][i] = 1;
                }
            }
        }
    }
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (adj[i][j]) {
                out[i].push_back(j);
            }
        }
    }
    return out;
}

AlboGraph build_albo(std::span<const Vec3> centers, std::span<const Mat3> metrics, double sigma,
                     const GraphRule& rule, std::vector<std::size_t> node_indices) {
    const std::size_t n = centers.size();
    if (n < 2) {
        throw RegionTooSmall("build_albo: a region needs at least two members");
    }
    if (metrics.size() != n) {
        throw DimensionError("build_albo: one metric per center is required");
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw ValueError("build_albo: sigma must be positive");
    }
    if (node_indices.empty()) {
        node_indices.resize(n);
        std::iota(node_indices.begin(), node_indices.end(), std::size_t{0});
    } else if (node_indices.size() != n) {
        throw DimensionError("build_albo: node index list does not match the centers");
    }

    AlboGraph g;
    g.node_indices = std::move(node_indices);
    g.sigma = sigma;
    g.weights = DenseMatrix(n, n);
    g.degrees.assign(n, 0.0);
    const double inv_s2 = 1.0 / (sigma * sigma);
    const auto adj = neighbor_graph(centers, rule);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j : adj[i]) {
            if (j <= i) {
                continue;
            }
            const Vec3 dc = centers[i] - centers[j];
            const Mat3 mbar = 0.5 * (metrics[i] + metrics[j]);
            const double w = std::exp(-dc.dot(mbar * dc) * inv_s2);
            g.weights(i, j) = w;
            g.weights(j, i) = w;
        }
    }
    g.laplacian = DenseMatrix::identity(n);
    for (std::size_t i = 0; i < n; ++i) {
        double a = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            a += g.weights(i, j);
        }
        g.degrees[i] = a;
        if (a > 0.0) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    g.laplacian(i, j) = -g.weights(i, j) / a;
                }
            }
        }
    }
    return g;
}

AlboGraph build_albo(const scene::LocalRegion& region, const scene::Scene& scene, double beta, double sigma,
                     const GraphRule& rule) {
    std::vector<Vec3> centers;
    std::vector<Mat3> metrics;
    for (std::size_t idx : region.member_indices) {
        if (idx >= scene.size()) {
            throw ValueError("build_albo: region member out of range");
        }
        centers.push_back(scene.gaussians[idx].center);
        metrics.push_back(build_metric(scene.gaussians[idx].covariance(), beta).matrix);
    }
    return build_albo(centers, metrics, sigma, rule, region.member_indices);
}

AlboSpectrum albo_spectrum(const AlboGraph& graph) {
    const std::size_t n = graph.size();
    const numerics::SymEig eig = numerics::sym_eig(graph.symmetrized());
    AlboSpectrum out;
    out.values = eig.values;
    out.vectors = DenseMatrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        double nrm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = graph.degrees[i] > 0.0 ? graph.degrees[i] : 1.0;
            const double phi = eig.vectors(i, k) / std::sqrt(a);
            out.vectors(i, k) = phi;
            nrm += phi * phi;
        }
        nrm = std::sqrt(nrm);
        for (std::size_t i = 0; i < n; ++i) {
            out.vectors(i, k) /= nrm;
        }
    }
    return out;
}

std::size_t effective_eig_count(std::span<const double> ascending_values, std::size_t k) {
    std::size_t kk = std::min(k, ascending_values.size());
    while (kk > 0 && kk < ascending_values.size() && ascending_values[kk] - ascending_values[kk - 1] < 1e-9) {
        ++kk;
    }
    return kk;
}

std::vector<double> chebyshev_values(double x, std::size_t order) {
    std::vector<double> t(order + 1);
    t[0] = 1.0;
    if (order >= 1) {
        t[1] = x;
    }
    for (std::size_t d = 1; d < order; ++d) {
        t[d + 1] = 2.0 * x * t[d] - t[d - 1];
    }
    return t;
}

DenseMatrix chebyshev_descriptors(const AlboSpectrum& spectrum, std::size_t k_eigs, std::size_t order) {
    const std::size_t n = spectrum.values.size();
    if (k_eigs < 1 || k_eigs > n) {
        throw ValueError("chebyshev_descriptor: K must lie in [1, region size]");
    }
    const std::size_t kk = effective_eig_count(spectrum.values, k_eigs);
    const double lmax = spectrum.values[kk - 1];
    if (!(lmax > 1e-12)) {
        throw DegenerateSpectrum("chebyshev_descriptor: largest selected eigenvalue is zero");
    }
    DenseMatrix out(n, order + 1);
    for (std::size_t k = 0; k < kk; ++k) {
        const double x = std::clamp(2.0 * spectrum.values[k] / lmax - 1.0, -1.0, 1.0);
        const std::vector<double> t = chebyshev_values(x, order);
        for (std::size_t i = 0; i < n; ++i) {
            const double p2 = spectrum.vectors(i, k) * spectrum.vectors(i, k);
            for (std::size_t d = 0; d <= order; ++d) {
                out(i, d) += t[d] * p2;
            }
        }
    }
    return out;
}

std::vector<double> chebyshev_descriptor(const AlboGraph& graph, std::size_t k_eigs, std::size_t order,
                                         std::size_t node) {
    if (node >= graph.size()) {
        throw ValueError("chebyshev_descriptor: node out of range");
    }
    const DenseMatrix all = chebyshev_descriptors(albo_spectrum(graph), k_eigs, order);
    const auto row = all.row(node);
    return {row.begin(), row.end()};
}

Mat3 rotated_metric(const AnisotropicMetric& metric, double theta, RotationFrame frame) {
    Mat3 r;
    if (frame == RotationFrame::Principal) {
        r = metric.frame * rot_z(theta) * metric.frame.transpose();
    } else {
        r = rot_z(theta);
    }
    Mat3 m = r * metric.matrix * r.transpose();
    return 0.5 * (m + m.transpose());
}

std::vector<SpectralDescriptor> anisotropic_descriptor(const scene::LocalRegion& region, const scene::Scene& scene,
                                                       const DescriptorParams& params) {
    if (params.angles.empty()) {
        throw ValueError("anisotropic_descriptor: at least one angle is required");
    }
    const std::size_t n = region.member_indices.size();
    if (n < 2) {
        throw RegionTooSmall("anisotropic_descriptor: a region needs at least two members");
    }
    std::vector<Vec3> centers(n);
    std::vector<AnisotropicMetric> metrics(n);
    Vec3 centroid = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = region.member_indices[i];
        if (idx >= scene.size()) {
            throw ValueError("anisotropic_descriptor: region member out of range");
        }
        centers[i] = scene.gaussians[idx].center;
        metrics[i] = build_metric(scene.gaussians[idx].covariance(), params.beta);
        centroid += centers[i];
    }
    centroid /= static_cast<double>(n);
    double extent = 0.0;
    for (const auto& c : centers) {
        extent = std::max(extent, (c - centroid).norm());
    }
    for (std::size_t i = 0; i < n; ++i) {
        metrics[i].frame = orient_frame(metrics[i].frame, centers[i], centroid, centers, extent);
    }

    double sigma = params.sigma;
    if (!(sigma > 0.0)) {
        sigma = mean_knn_distance(centers, params.rule.k);
        if (!(sigma > 0.0)) {
            sigma = 1.0;  // all centers coincide
        }
    }
    const std::size_t k_eigs = std::min(params.k_eigs, n);
    const std::size_t width = params.order + 1;

    std::vector<SpectralDescriptor> out(n);
    for (auto& d : out) {
        d.values.assign(params.dimension(), 0.0);
        d.order = params.order;
        d.angles = params.angles;
        d.k_eigs = k_eigs;
    }
    std::vector<Mat3> rotated(n);
    for (std::size_t j = 0; j < params.angles.size(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            rotated[i] = rotated_metric(metrics[i], params.angles[j], params.frame);
        }
        const AlboGraph g = build_albo(centers, rotated, sigma, params.rule, region.member_indices);
        const DenseMatrix block = chebyshev_descriptors(albo_spectrum(g), k_eigs, params.order);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < width; ++d) {
                out[i].values[j * width + d] = block(i, d);
            }
        }
    }
    return out;
}

void write_descriptor_csv(const std::filesystem::path& path, std::span<const std::size_t> gaussian_indices,
                          std::span<const SpectralDescriptor> descriptors) {
    if (gaussian_indices.size() != descriptors.size()) {
        throw DimensionError("write_descriptor_csv: index and descriptor counts differ");
    }
    std::ofstream os(path);
    if (!os) {
        throw IoError("write_descriptor_csv: cannot open " + path.string());
    }
    const std::size_t q = descriptors.empty() ? 0 : descriptors.front().values.size();
    os << "gaussian_index";
    for (std::size_t k = 0; k < q; ++k) {
        os << ",q" << k;
    }
    os << '\n';
    char buf[32];
    for (std::size_t i = 0; i < descriptors.size(); ++i) {
        os << gaussian_indices[i];
        for (double v : descriptors[i].values) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            os << ',' << buf;
        }
        os << '\n';
    }
    if (!os) {
        throw IoError("write_descriptor_csv: write failed for " + path.string());
    }
}

} // namespace anisogauss::spectral
