// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/adapt/densify.hpp"
#include "anisogauss/adapt/masks.hpp"
#include "anisogauss/encode/encoder.hpp"
#include "anisogauss/encode/fusion.hpp"
#include "anisogauss/scene/geometry.hpp"
#include "anisogauss/spectral/descriptor.hpp"
#include "anisogauss/transfer/cks.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace anisogauss::pipeline {

struct CameraConfig {
    int width = 48;
    int height = 48;
    std::size_t views = 16;
    std::size_t holdout_every = 4;  ///< every k-th view is held out for PSNR
    double fov_y_deg = 50.0;
    // Orbit settings; unset ("auto") takes the scene generator's suggestion.
    std::optional<double> distance;
    std::optional<double> elevation_deg;
    std::optional<double> azimuth_center_deg;
    std::optional<double> azimuth_span_deg;
    std::filesystem::path trajectory;  ///< optional JSON camera list, overrides the orbit
};

struct GeneratorConfig {
    std::size_t semantic_dim = 8;  ///< also the number of class embeddings
    double detail_keep = 0.125;    ///< fraction of the high-detail patch kept in the training scene
};

struct PruneConfig {
    bool enabled = false;
    double tau = adapt::kDefaultTauPrune;
    double phi_init = 0.0;
};

struct ShPruneConfig {
    bool enabled = false;
    std::array<double, 4> tau{adapt::kDefaultTauSh, adapt::kDefaultTauSh, adapt::kDefaultTauSh, adapt::kDefaultTauSh};
    std::size_t bins = adapt::kDefaultBins;
    std::size_t hist_hidden = 16;
    std::size_t embed_dim = 8;
    double psi_init = 0.0;
};

enum class GradSource { Render, FeatureFd };

struct DensifyConfig {
    bool enabled = false;
    adapt::DensifyParams params{};
    GradSource grad_source = GradSource::Render;
    double fd_step = 1e-3;
};

struct TransferSettings {
    bool enabled = false;
    transfer::TransferConfig cks{};
    transfer::Modulation modulation = transfer::Modulation::Softplus;
    std::filesystem::path basis_in;
    std::filesystem::path basis_out;
    std::filesystem::path encoder_in;
    std::filesystem::path encoder_out;
    std::size_t update_every = 0;  ///< 0 = end-of-scene only
};

struct TrainConfig {
    std::size_t iterations = 2000;
    std::size_t adapt_interval = adapt::kDefaultAdaptInterval;
    std::size_t eval_interval = 100;
    double lr_sh = 0.02;
    double lr_opacity = 0.05;
    double lr_semantic = 0.02;
    double lr_encoder = 1e-3;
    double lr_gate = 1e-3;
    double lr_prune_net = 1e-3;
    double lr_sh_net = 1e-3;
    double lr_phi = 0.01;
    double lr_psi = 0.05;
    double lr_modulation = 0.0;
};

struct PipelineConfig {
    std::vector<std::string> scenes{"room"};
    std::uint64_t seed = 0;
    std::filesystem::path output = "out";
    std::filesystem::path base_dir;  ///< directory of the config file; relative paths resolve against it

    CameraConfig camera{};
    GeneratorConfig generator{};
    scene::RegionParams regions{};
    spectral::DescriptorParams spectral{};
    encode::EncoderConfig encoder{};
    double tau_prop = encode::kDefaultTauProp;
    PruneConfig prune{};
    ShPruneConfig sh_prune{};
    DensifyConfig densify{};
    adapt::LossWeights loss{};
    TransferSettings transfer{};
    TrainConfig train{};

    /// Cross-module checks; throws ConfigError.
    void validate() const;
    /// Resolves a config-relative path.
    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Parses an INI file with one section per module. Every key is optional and
/// unknown keys are rejected. Throws ConfigError.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// The default configuration written back as INI.
std::string default_config_text();

/// Names accepted in the scene list besides file paths (json/ply).
const std::vector<std::string>& generator_names();

} // namespace anisogauss::pipeline
