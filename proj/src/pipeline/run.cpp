// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/pipeline/run.hpp"

#include "anisogauss/errors.hpp"
#include "anisogauss/pipeline/generators.hpp"
#include "anisogauss/pipeline/metrics.hpp"
#include "anisogauss/scene/geometry.hpp"
#include "anisogauss/scene/io.hpp"
#include "anisogauss/spectral/descriptor.hpp"
#include "anisogauss/splat/image.hpp"
#include "anisogauss/splat/render.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

namespace anisogauss::pipeline {

namespace fs = std::filesystem;

namespace {

fs::path checkpoint_dir(const PipelineConfig& c) { return output_dir(c) / "checkpoint"; }

fs::path basis_out_path(const PipelineConfig& c) {
    return c.transfer.basis_out.empty() ? checkpoint_dir(c) / "bases.agck" : c.resolve(c.transfer.basis_out);
}

void make_dirs(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) {
        throw IoError("cannot create directory " + p.string() + ": " + ec.message());
    }
}

} // namespace

std::string scene_stem(std::size_t index, const std::string& scene_id) {
    return std::to_string(index) + "_" + scene_id;
}

fs::path output_dir(const PipelineConfig& config) { return config.resolve(config.output); }

std::vector<SceneResult> run_train(const PipelineConfig& config, std::ostream& log, const TrainHooks& hooks) {
    const fs::path out = output_dir(config);
    make_dirs(out);
    make_dirs(checkpoint_dir(config));
    const fs::path marker = out / "INCOMPLETE";
    {
        std::ofstream m(marker);
        m << "train started; artifacts in this directory are partial until this file is removed\n";
    }

    Trainer trainer(config);
    if (!config.transfer.basis_in.empty()) {
        trainer.set_bases(transfer::load_bases(config.resolve(config.transfer.basis_in)));
    }
    if (!config.transfer.encoder_in.empty()) {
        trainer.encoder().load(config.resolve(config.transfer.encoder_in));
    }

    MetricsWriter writer(out);
    std::ofstream events(out / "adaptation.jsonl", std::ios::binary | std::ios::trunc);
    std::ofstream basis_log(out / "basis_updates.jsonl", std::ios::binary | std::ios::trunc);
    if (!events || !basis_log) {
        throw IoError("cannot write logs in " + out.string());
    }
    TrainHooks h = hooks;
    h.on_record = [&](const MetricsRecord& r) {
        writer.append(r);
        if (hooks.on_record) {
            hooks.on_record(r);
        }
    };
    h.on_event = [&](const adapt::AdaptationEvent& e) {
        adapt::write_adaptation_event(events, e);
        events.flush();
        if (hooks.on_event) {
            hooks.on_event(e);
        }
    };

    std::vector<SceneResult> results;
    for (std::size_t k = 0; k < config.scenes.size(); ++k) {
        const SyntheticScene s = make_scene(config.scenes[k], config);
        log << "scene " << s.id << ": " << s.init.size() << " Gaussians, " << config.train.iterations
            << " iterations\n";
        SceneResult r = trainer.train_scene(s, h);
        const std::string stem = scene_stem(k, s.id);
        write_summary(r.summary, out / ("summary_" + stem + ".csv"));
        scene::save_scene_json(r.learned, checkpoint_dir(config) / (stem + ".json"));
        for (const auto& b : r.basis_updates) {
            basis_log << "{\"scene\":\"" << b.scene_id << "\",\"rho\":" << b.rho << ",\"sigma_f\":" << b.sigma_f
                      << ",\"rho_prime\":" << b.rho_prime << ",\"added\":" << b.added
                      << ",\"updated\":" << (b.updated ? "true" : "false") << ",\"rank_after\":" << b.rank_after
                      << "}\n";
        }
        log << "  final count " << r.summary.gaussian_count << ", held-out PSNR "
            << (r.summary.psnr ? format_psnr(r.summary.psnr) : std::string("n/a")) << "\n";
        results.push_back(std::move(r));
    }

    trainer.encoder().save(config.transfer.encoder_out.empty() ? checkpoint_dir(config) / "encoder.agts"
                                                               : config.resolve(config.transfer.encoder_out));
    if (config.transfer.enabled || !trainer.bases().empty()) {
        transfer::save_bases(trainer.bases(), basis_out_path(config));
    }
    fs::remove(marker);
    return results;
}

void run_render(const PipelineConfig& config, std::ostream& log) {
    const fs::path out = output_dir(config) / "render";
    make_dirs(out);
    for (std::size_t k = 0; k < config.scenes.size(); ++k) {
        const SyntheticScene s = make_scene(config.scenes[k], config);
        const std::string stem = scene_stem(k, s.id);
        const fs::path ckpt = checkpoint_dir(config) / (stem + ".json");
        if (!fs::exists(ckpt)) {
            throw IoError("no checkpoint " + ckpt.string() + "; run train first");
        }
        const scene::Scene learned = scene::load_scene(ckpt);
        const CameraSet cams = make_cameras(config, s.orbit);
        for (std::size_t v = 0; v < cams.all.size(); ++v) {
            const splat::RenderTarget rt = splat::render(learned, cams.all[v]);
            const std::string name = stem + "_view" + std::to_string(v);
            splat::write_png(rt.color, out / (name + ".png"));
            splat::write_npy(rt.semantic, out / (name + "_semantic.npy"));
        }
        log << "rendered " << cams.all.size() << " views of " << s.id << "\n";
    }
}

void run_describe(const PipelineConfig& config, std::ostream& log) {
    const fs::path out = output_dir(config) / "describe";
    make_dirs(out);
    for (std::size_t k = 0; k < config.scenes.size(); ++k) {
        const SyntheticScene s = make_scene(config.scenes[k], config);
        const std::string stem = scene_stem(k, s.id);
        const CameraSet cams = make_cameras(config, s.orbit);
        std::size_t files = 0;
        for (std::size_t v = 0; v < cams.all.size(); ++v) {
            const auto regions = scene::build_regions(s.init, cams.all[v], config.regions);
            for (std::size_t r = 0; r < regions.size(); ++r) {
                if (regions[r].member_indices.size() < 2) {
                    continue;
                }
                const auto desc = spectral::anisotropic_descriptor(regions[r], s.init, config.spectral);
                spectral::write_descriptor_csv(
                    out / (stem + "_view" + std::to_string(v) + "_region" + std::to_string(r) + ".csv"),
                    regions[r].member_indices, desc);
                ++files;
            }
        }
        log << "wrote " << files << " descriptor files for " << s.id << "\n";
    }
}

void run_transfer_status(const PipelineConfig& config, std::ostream& out) {
    const fs::path path = config.transfer.basis_in.empty() ? basis_out_path(config)
                                                           : config.resolve(config.transfer.basis_in);
    const transfer::BasisStore store = transfer::load_bases(path);
    out << "bases: " << path.string() << "\n";
    for (const auto& [name, b] : store) {
        out << name << ": q=" << b.rows() << " rank=" << b.rank() << " orthonormality_error=" << std::setprecision(3)
            << b.orthonormality_error() << "\n";
        for (const auto& h : b.history) {
            out << "  " << h.scene_id << " rho=" << std::setprecision(6) << h.rho << " sigma_f=" << h.sigma_f
                << " rho'=" << h.rho_prime << (h.updated ? " updated" : " skipped") << " added=" << h.added
                << " rank_after=" << h.rank_after << "\n";
        }
    }
}

int run(const RunOptions& options, std::ostream& out, std::ostream& err) {
    PipelineConfig config;
    try {
        config = load_config(options.config);
        if (options.seed) {
            config.seed = *options.seed;
        }
        if (options.out) {
            config.output = fs::absolute(*options.out);
        }
        config.validate();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        switch (options.command) {
        case Command::Train:
            run_train(config, out);
            break;
        case Command::Render:
            run_render(config, out);
            break;
        case Command::Describe:
            run_describe(config, out);
            break;
        case Command::TransferStatus:
            run_transfer_status(config, out);
            break;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

} // namespace anisogauss::pipeline
