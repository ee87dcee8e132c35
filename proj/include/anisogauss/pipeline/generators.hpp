// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/pipeline/config.hpp"
#include "anisogauss/scene/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace anisogauss::pipeline {

using scene::Vec3;

/// Where cameras should look from when the config leaves it open.
struct OrbitHint {
    Vec3 target = Vec3::Zero();
    double distance = 3.0;
    double azimuth_center_deg = 0.0;
    double azimuth_span_deg = 360.0;
    double elevation_deg = 30.0;
};

/// Gaussian tags used by the behavioural checks.
enum class Group : int {
    Plain = 0,
    Occluded = 1,        ///< room: back layers and box interior
    Detail = 2,          ///< patch: high-detail Gaussians
    Matte = 3,           ///< sh_halves: constant colour
    ViewDependent = 4,   ///< sh_halves: strong degree 1..3 colour
};

/// A procedural scene pair. `truth` produces the targets; `init` is what
/// training starts from (same geometry except where the generator thins it
/// out, DC colour copied, higher SH degrees and features zeroed).
struct SyntheticScene {
    std::string id;
    scene::Scene truth;
    scene::Scene init;
    std::vector<int> init_groups;  ///< Group per init Gaussian
    OrbitHint orbit;
};

/// name[:variant] for a generator, or a .json/.ply path (trained against itself).
SyntheticScene make_scene(const std::string& spec, const PipelineConfig& config);

/// One-hot class embedding of length dim (class index taken modulo dim).
std::vector<double> class_embedding(std::size_t cls, std::size_t dim);

/// Orbit or trajectory-file cameras. View i is held out when
/// holdout_every > 0 and i % holdout_every == holdout_every - 1.
struct CameraSet {
    std::vector<scene::Camera> all;
    std::vector<std::size_t> train;
    std::vector<std::size_t> held_out;
};
CameraSet make_cameras(const PipelineConfig& config, const OrbitHint& hint);

/// Reads {"cameras": [{"eye": [..], "target": [..], "up": [..], "fov_y_deg": x}]}.
std::vector<scene::Camera> load_trajectory(const std::filesystem::path& path, int width, int height);

} // namespace anisogauss::pipeline
