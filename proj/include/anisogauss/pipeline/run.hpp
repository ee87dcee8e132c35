// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/pipeline/config.hpp"
#include "anisogauss/pipeline/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace anisogauss::pipeline {

enum class Command { Train, Render, Describe, TransferStatus };

struct RunOptions {
    Command command = Command::Train;
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Loads the config, applies overrides and dispatches. Errors are reported on
/// `err` and mapped to exit codes 1 (config) and 2 (runtime).
int run(const RunOptions& options, std::ostream& out, std::ostream& err);

/// Output directory after overrides.
std::filesystem::path output_dir(const PipelineConfig& config);

/// Artifacts of one train run. While it runs, `<out>/INCOMPLETE` exists.
std::vector<SceneResult> run_train(const PipelineConfig& config, std::ostream& log, const TrainHooks& hooks = {});
void run_render(const PipelineConfig& config, std::ostream& log);
void run_describe(const PipelineConfig& config, std::ostream& log);
void run_transfer_status(const PipelineConfig& config, std::ostream& out);

/// `<index>_<scene id>`, the stem used for per-scene artifacts.
std::string scene_stem(std::size_t index, const std::string& scene_id);

} // namespace anisogauss::pipeline
