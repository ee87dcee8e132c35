// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/scene/types.hpp"

#include <filesystem>

namespace anisogauss::scene {

enum class SceneFormat { Ply, Json };

/// Loads a scene and normalises quaternions. Missing optional attributes get
/// defaults: opacity 1, isotropic scale 0.01·extent, SH degrees 1..3 zero,
/// semantic feature zero. Throws ParseError, SchemaError or ValueError.
///
/// PLY follows the usual splat export layout: `scale_*` are log-scales,
/// `opacity` is a logit, `rot_0..3` is (w, x, y, z), `f_rest_*` is
/// channel-major. Plain point clouds (x, y, z [, red, green, blue]) are accepted.
/// JSON stores linear values; see docs/scene_format.md.
Scene load_scene(const std::filesystem::path& path, SceneFormat format);
/// Picks the format from the extension (.ply / .json).
Scene load_scene(const std::filesystem::path& path);

void save_scene_json(const Scene& scene, const std::filesystem::path& path);
/// Binary little-endian PLY in the layout load_scene() reads.
void save_scene_ply(const Scene& scene, const std::filesystem::path& path);

/// DC coefficient mapping used for RGB import: rgb = 0.5 + kShC0 * c0.
inline constexpr double kShC0 = 0.28209479177387814;

} // namespace anisogauss::scene
