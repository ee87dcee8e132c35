// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/matrix.hpp"
#include "anisogauss/scene/types.hpp"

#include <filesystem>
#include <numbers>
#include <span>
#include <vector>

namespace anisogauss::spectral {

using numerics::DenseMatrix;
using scene::Mat3;
using scene::Vec3;

/// M = R·diag(1/(1+βλ_k))·Rᵀ built from the eigen-decomposition Σ = R Λ Rᵀ.
struct AnisotropicMetric {
    Mat3 matrix = Mat3::Identity();
    double beta = 1.0;
    /// Principal frame of Σ: columns ordered by decreasing eigenvalue, so the
    /// third column is the minor axis. Right-handed.
    Mat3 frame = Mat3::Identity();
    Vec3 eigenvalues = Vec3::Ones();  ///< of Σ, matching the frame columns
};

/// Throws NotSPDError if an eigenvalue of Σ is <= 1e-12, ValueError if β < 0.
AnisotropicMetric build_metric(const Mat3& sigma, double beta);

enum class NeighborRule { Knn, Radius };

struct GraphRule {
    NeighborRule kind = NeighborRule::Knn;
    std::size_t k = 8;    ///< symmetric k-NN (i in kNN(j) or j in kNN(i))
    double radius = 0.0;  ///< for NeighborRule::Radius
};

struct AlboGraph {
    std::vector<std::size_t> node_indices;
    DenseMatrix weights;            ///< symmetric, zero diagonal
    std::vector<double> degrees;    ///< a_i = Σ_j w_ij
    DenseMatrix laplacian;          ///< L_ii = 1, L_ij = -w_ij / a_i
    double sigma = 1.0;

    std::size_t size() const noexcept { return node_indices.size(); }
    /// A^{1/2} L A^{-1/2} = I - A^{-1/2} W A^{-1/2}; isolated nodes keep a unit row.
    DenseMatrix symmetrized() const;
};

/// Mean distance from every node to each of its k nearest neighbours.
double mean_knn_distance(std::span<const Vec3> points, std::size_t k);

/// Edge set of the neighbour rule; adjacency[i] is ascending.
std::vector<std::vector<std::size_t>> neighbor_graph(std::span<const Vec3> points, const GraphRule& rule);

/// Graph ALBO from explicit per-node metrics. Throws RegionTooSmall for < 2
/// nodes and ValueError for σ <= 0.
AlboGraph build_albo(std::span<const Vec3> centers, std::span<const Mat3> metrics, double sigma,
                     const GraphRule& rule, std::vector<std::size_t> node_indices = {});

/// Graph ALBO over a region, metrics from the Gaussians' covariances.
AlboGraph build_albo(const scene::LocalRegion& region, const scene::Scene& scene, double beta, double sigma,
                     const GraphRule& rule);

/// Eigenpairs of the ALBO, ascending. Eigenvectors are φ = A^{-1/2}v mapped
/// back from the symmetrised operator and rescaled to unit Euclidean norm.
struct AlboSpectrum {
    std::vector<double> values;
    DenseMatrix vectors;  ///< column k is φ_k
};
AlboSpectrum albo_spectrum(const AlboGraph& graph);

/// Number of eigenpairs actually used for a request of K: K is extended to the
/// end of a cluster of eigenvalues closer than 1e-9.
std::size_t effective_eig_count(std::span<const double> ascending_values, std::size_t k);

/// Chebyshev descriptors g^0..g^D for every node (n x (D+1)).
/// Throws ValueError unless 1 <= K <= n, DegenerateSpectrum if λ_max <= 1e-12.
DenseMatrix chebyshev_descriptors(const AlboSpectrum& spectrum, std::size_t k_eigs, std::size_t order);

/// Single-node convenience form.
std::vector<double> chebyshev_descriptor(const AlboGraph& graph, std::size_t k_eigs, std::size_t order,
                                         std::size_t node);

/// T_0..T_D at x by the three-term recurrence.
std::vector<double> chebyshev_values(double x, std::size_t order);

enum class RotationFrame { Principal, World };

struct DescriptorParams {
    double beta = 1.0;
    double sigma = 0.0;  ///< <= 0 selects the mean k-NN distance of the region
    std::size_t k_eigs = 16;
    std::size_t order = 4;
    std::vector<double> angles = {0.0, std::numbers::pi / 4, std::numbers::pi / 2, 3 * std::numbers::pi / 4};
    GraphRule rule{};
    RotationFrame frame = RotationFrame::Principal;

    std::size_t dimension() const { return angles.size() * (order + 1); }
};

/// Rotation-major concatenation [f_θ1 | f_θ2 | ...], each block of length D+1.
struct SpectralDescriptor {
    std::vector<double> values;
    std::size_t order = 0;
    std::vector<double> angles;
    std::size_t k_eigs = 0;
};

/// Rotated metric for angle θ. Principal frame: rotation about the Gaussian's
/// minor axis, R_i Rot_z(θ) R_iᵀ. World frame: Rot_z(θ) about world z.
Mat3 rotated_metric(const AnisotropicMetric& metric, double theta, RotationFrame frame);

/// One descriptor per region member, in member order.
std::vector<SpectralDescriptor> anisotropic_descriptor(const scene::LocalRegion& region, const scene::Scene& scene,
                                                       const DescriptorParams& params);

/// CSV `gaussian_index,q0..q{Q-1}`, full double precision.
void write_descriptor_csv(const std::filesystem::path& path, std::span<const std::size_t> gaussian_indices,
                          std::span<const SpectralDescriptor> descriptors);

} // namespace anisogauss::spectral
