// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/layers.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace anisogauss::transfer {

using numerics::DenseMatrix;
using numerics::Var;

struct BasisUpdateRecord {
    std::string scene_id;
    double rho = 0.0;
    double sigma_f = 0.0;
    double rho_prime = 0.0;
    std::size_t added = 0;  ///< r'
    double eta = 0.0;
    bool updated = false;
    std::size_t rank_after = 0;
    double rho_after = 0.0;
};

/// q x r matrix with orthonormal columns; r = 0 is the empty basis.
struct PatternBasis {
    DenseMatrix basis;
    std::vector<BasisUpdateRecord> history;

    static PatternBasis empty(std::size_t q) { return {DenseMatrix(q, 0), {}}; }
    std::size_t rows() const { return basis.rows(); }
    std::size_t rank() const { return basis.cols(); }
    /// max |BᵀB - I|.
    double orthonormality_error() const;
};

struct Projection {
    DenseMatrix projected;  ///< B Bᵀ W
    DenseMatrix residual;   ///< W - B Bᵀ W
    double rho = 1.0;       ///< ‖R‖_F / ‖W‖_F
};

/// Throws DimensionError (row mismatch) or ZeroMatrixError (‖W‖_F <= 1e-12).
Projection project_cks(const DenseMatrix& w, const PatternBasis& basis);

/// ρ² = ‖W - BBᵀW‖²_F / ‖W‖²_F as a differentiable 1x1 node.
Var relative_residual_sq(const Var& w, const PatternBasis& basis);

enum class Modulation { Softplus, Sigmoid };

/// α = act(linear(z̄)), z̄ a 1 x Q row.
struct ModulationNet {
    numerics::Linear layer;  ///< Q -> 1
    Modulation activation = Modulation::Softplus;

    static ModulationNet init(std::size_t input_dim, std::uint64_t seed, Modulation activation = Modulation::Softplus);
    Var operator()(const Var& zbar) const;
    void collect(numerics::NamedParams& out) const;
};

/// L_reg = α(z̄) · ρ². Throws ZeroMatrixError.
Var reg_loss(const Var& w, const PatternBasis& basis, const Var& zbar, const ModulationNet& net);

struct TransferConfig {
    double kappa = 1.0;
    double epsilon = 0.15;
    double eta = 0.9;
    std::vector<std::string> tracked;  ///< empty = every W_q, W_k, W_v

    /// Throws ValueError unless κ > 0, ε > 0 and 0 < η <= 1.
    void validate() const;
};

/// σ_f = sqrt(mean_i ‖f_i - f̄‖²) over the rows of `descriptors`.
double descriptor_spread(const DenseMatrix& descriptors);

/// Trigger ρ' = ρ(1 + κσ_f) > ε; then B <- orth([B, U_r']) with r' the smallest
/// count reaching energy η, capped at rank q - 1 by dropping the columns that
/// capture the least of W. Appends the decision to the history either way.
/// Throws ValueError for empty descriptors.
BasisUpdateRecord maybe_update_basis(const DenseMatrix& w, PatternBasis& basis, const DenseMatrix& descriptors,
                                     const TransferConfig& config, const std::string& scene_id);

using BasisStore = std::map<std::string, PatternBasis>;

/// Binary layout, little-endian:
///   "AGCK" | u32 version (1) | u32 count |
///   count x { u32 name_len | name | u64 q | u64 r | q*r f64 row-major } |
///   u64 json_len | json history | u32 CRC-32 of every preceding byte.
/// Load errors: IoError (open, truncation, bad magic), VersionError, ChecksumError.
void save_bases(const BasisStore& store, const std::filesystem::path& path);
BasisStore load_bases(const std::filesystem::path& path);

void save_basis(const PatternBasis& basis, const std::filesystem::path& path);
PatternBasis load_basis(const std::filesystem::path& path);

} // namespace anisogauss::transfer
