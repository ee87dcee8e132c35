// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/layers.hpp"
#include "anisogauss/scene/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace anisogauss::encode {

using numerics::DenseMatrix;
using numerics::Var;
using scene::Mat3;
using scene::Vec3;

struct EncoderConfig {
    std::size_t input_dim = 0;  ///< Q, the descriptor width
    std::size_t model_dim = 64;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::size_t mlp_hidden = 128;
    std::size_t pe_bands = 6;
    std::uint64_t seed = 0;

    /// Throws DimensionError (d % m != 0, zero sizes) or ValueError (L = 0).
    void validate() const;
};

/// One pre-norm block. The first block maps Q -> d, so its residual path goes
/// through `w_res`; later blocks keep `w_res` empty.
struct EncoderLayer {
    Var w_q;  ///< in x d
    Var w_k;
    Var w_v;
    Var w_res;
    numerics::Linear ff1;  ///< d -> mlp_hidden
    numerics::Linear ff2;  ///< mlp_hidden -> d
};

struct EncoderWeights {
    EncoderConfig config;
    Var token;                   ///< 1 x Q, z_0
    numerics::Linear pe_proj;    ///< 6*pe_bands -> Q
    std::vector<EncoderLayer> layers;
    numerics::Linear head1;      ///< d -> mlp_hidden
    numerics::Linear head2;      ///< mlp_hidden -> d

    /// Xavier-uniform weights from config.seed, zero biases.
    static EncoderWeights init(const EncoderConfig& config);

    /// Every trainable tensor with a stable name.
    numerics::NamedParams named_parameters() const;
    std::vector<Var> parameters() const;

    void save(const std::filesystem::path& path) const;
    /// Replaces values in place; throws DimensionError on missing or mismatched tensors.
    void load(const std::filesystem::path& path);
};

/// Sinusoidal Fourier features of n points: columns
/// [sin(2^b π x_k), cos(2^b π x_k)] for b < bands, k < 3. Rows are n.
DenseMatrix fourier_features(std::span<const Vec3> points, std::size_t bands);

/// Multi-head attention over the rows of x (already normalised). Head h uses
/// columns [h d/m, (h+1) d/m) of the projections; logits are scaled by 1/sqrt(d).
Var multi_head_attention(const Var& x, const Var& w_q, const Var& w_k, const Var& w_v, std::size_t heads);

/// Where the positional encoding is anchored: coordinates enter PE as
/// (c - origin) / scale.
struct PositionFrame {
    Vec3 origin = Vec3::Zero();
    double scale = 1.0;
};

/// p(S) as a 1 x d row. `descriptors` is n x Q, one row per member.
/// Throws DimensionError on shape mismatch or n = 0.
Var encode_region(const DenseMatrix& descriptors, std::span<const Vec3> centers, const EncoderWeights& weights,
                  const PositionFrame& frame = {});

} // namespace anisogauss::encode
