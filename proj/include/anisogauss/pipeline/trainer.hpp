// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/adapt/densify.hpp"
#include "anisogauss/adapt/masks.hpp"
#include "anisogauss/encode/encoder.hpp"
#include "anisogauss/encode/fusion.hpp"
#include "anisogauss/numerics/optim.hpp"
#include "anisogauss/pipeline/config.hpp"
#include "anisogauss/pipeline/generators.hpp"
#include "anisogauss/pipeline/metrics.hpp"
#include "anisogauss/splat/image.hpp"
#include "anisogauss/transfer/cks.hpp"

#include <functional>
#include <memory>

namespace anisogauss::pipeline {

struct TrainHooks {
    std::function<void(const MetricsRecord&)> on_record;
    std::function<void(const adapt::AdaptationEvent&)> on_event;
    /// Called once per triggered region, before the scene is modified.
    std::function<void(const scene::Scene& before, const scene::LocalRegion& region,
                       const adapt::DensifyResult& result)>
        on_densify;
};

struct SceneResult {
    SceneSummary summary;
    std::vector<MetricsRecord> records;
    std::vector<adapt::AdaptationEvent> events;
    std::vector<transfer::BasisUpdateRecord> basis_updates;
    /// Learned scene: committed SH, opacity σ(logit)·m, features f_final.
    scene::Scene learned;
    std::vector<int> groups;  ///< Group of each learned Gaussian (densified copies inherit)
    /// Degree blocks kept by the last committed SH mask, N x 4 of {0, 1}.
    numerics::DenseMatrix sh_kept;
    std::vector<double> heldout_psnr;  ///< per held-out view, final
};

/// Trains a sequence of scenes. Network weights (encoder, gate, mask nets)
/// and the pattern bases carry over from one scene to the next.
class Trainer {
public:
    explicit Trainer(PipelineConfig config);
    ~Trainer();
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    /// Runs config.train.iterations steps on `scene`. Metric iteration numbers
    /// continue from earlier scenes.
    SceneResult train_scene(const SyntheticScene& scene, const TrainHooks& hooks = {});

    const transfer::BasisStore& bases() const;
    void set_bases(transfer::BasisStore store);
    const encode::EncoderWeights& encoder() const;
    encode::EncoderWeights& encoder();
    std::size_t iterations_done() const;
    const PipelineConfig& config() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Held-out PSNR helpers: the mean of per-view PSNR (+inf if any view is exact).
double mean_psnr(const std::vector<double>& per_view);

/// Descriptor width Q implied by the spectral settings.
std::size_t descriptor_width(const PipelineConfig& config);

} // namespace anisogauss::pipeline
