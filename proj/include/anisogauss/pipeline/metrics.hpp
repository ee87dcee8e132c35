// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace anisogauss::pipeline {

struct MetricsRecord {
    std::size_t iteration = 0;
    std::string scene_id;
    double l_render = 0.0;
    double l_semantic = 0.0;
    double l_mask = 0.0;
    double l_sh = 0.0;
    double l_reg = 0.0;
    double total = 0.0;
    std::size_t gaussian_count = 0;
    std::optional<double> psnr;  ///< held-out views; only on evaluation iterations
    std::array<double, 4> sh_active_fraction{1.0, 1.0, 1.0, 1.0};
    double wall_seconds = 0.0;   ///< written to timing.csv only, so metrics.jsonl stays reproducible
};

/// One JSON object on one line, keys in a fixed order. psnr is null when
/// absent and the string "inf" when infinite.
std::string to_json_line(const MetricsRecord& record);
MetricsRecord parse_json_line(const std::string& line);

/// Appends to metrics.jsonl, plot.csv (iteration vs PSNR, count and losses)
/// and timing.csv in `dir`. Iterations must increase strictly.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::filesystem::path& dir);
    void append(const MetricsRecord& record);
    std::size_t count() const noexcept { return count_; }

private:
    std::ofstream jsonl_;
    std::ofstream plot_;
    std::ofstream timing_;
    std::size_t count_ = 0;
    std::optional<std::size_t> last_;
};

inline constexpr const char* kPlotHeader =
    "iteration,scene,psnr,gaussian_count,L_render,L_semantic,L_mask,L_SH,L_reg,total";

struct SceneSummary {
    std::string scene_id;
    std::size_t iterations = 0;
    std::size_t gaussian_count = 0;
    std::size_t initial_count = 0;
    std::optional<double> psnr;
    double l_render = 0.0;    ///< mean over the final quarter of the scene's iterations
    double l_semantic = 0.0;
    std::array<double, 4> sh_active_fraction{1.0, 1.0, 1.0, 1.0};
    std::size_t pruned = 0;
    std::size_t added = 0;
    std::size_t basis_updates = 0;
};

void write_summary(const SceneSummary& summary, const std::filesystem::path& path);
SceneSummary read_summary(const std::filesystem::path& path);

/// psnr field text: "", "inf", or a round-trip number.
std::string format_psnr(const std::optional<double>& psnr);
std::optional<double> parse_psnr(const std::string& text);

} // namespace anisogauss::pipeline
