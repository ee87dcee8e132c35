// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/pipeline/config.hpp"

#include "anisogauss/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace anisogauss::pipeline {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

double to_double(const std::string& key, const std::string& s) {
    const std::string t = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError(key + ": expected a number, got '" + s + "'");
    }
    return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& s) {
    const std::string t = trim(s);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    }
    return v;
}

bool to_bool(const std::string& key, const std::string& s) {
    const std::string t = trim(s);
    if (t == "true" || t == "1" || t == "yes" || t == "on") {
        return true;
    }
    if (t == "false" || t == "0" || t == "no" || t == "off") {
        return false;
    }
    throw ConfigError(key + ": expected a boolean, got '" + s + "'");
}

std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string fmt_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? ", " : "") + fmt(v[i]);
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? ", " : "") + v[i];
    }
    return out;
}

struct Field {
    std::string section;
    std::string key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

// Binds every recognised key to a member of `c`.
std::vector<Field> fields(PipelineConfig& c) {
    std::vector<Field> f;
    auto dbl = [&f](std::string sec, std::string key, double& ref) {
        const std::string name = sec + "." + key;
        f.push_back({sec, key, [&ref, name](const std::string& s) { ref = to_double(name, s); },
                     [&ref] { return fmt(ref); }});
    };
    auto size = [&f](std::string sec, std::string key, std::size_t& ref) {
        const std::string name = sec + "." + key;
        f.push_back({sec, key, [&ref, name](const std::string& s) { ref = to_uint(name, s); },
                     [&ref] { return std::to_string(ref); }});
    };
    auto integer = [&f](std::string sec, std::string key, int& ref) {
        const std::string name = sec + "." + key;
        f.push_back({sec, key,
                     [&ref, name](const std::string& s) {
                         const std::uint64_t v = to_uint(name, s);
                         if (v > 1u << 20) {
                             throw ConfigError(name + ": value too large");
                         }
                         ref = static_cast<int>(v);
                     },
                     [&ref] { return std::to_string(ref); }});
    };
    auto flag = [&f](std::string sec, std::string key, bool& ref) {
        const std::string name = sec + "." + key;
        f.push_back({sec, key, [&ref, name](const std::string& s) { ref = to_bool(name, s); },
                     [&ref] { return std::string(ref ? "true" : "false"); }});
    };
    auto opt = [&f](std::string sec, std::string key, std::optional<double>& ref) {
        const std::string name = sec + "." + key;
        f.push_back({sec, key,
                     [&ref, name](const std::string& s) {
                         if (trim(s) == "auto" || trim(s).empty()) {
                             ref.reset();
                         } else {
                             ref = to_double(name, s);
                         }
                     },
                     [&ref] { return ref ? fmt(*ref) : std::string("auto"); }});
    };
    auto path = [&f](std::string sec, std::string key, std::filesystem::path& ref) {
        f.push_back({sec, key, [&ref](const std::string& s) { ref = trim(s); }, [&ref] { return ref.string(); }});
    };

    f.push_back({"pipeline", "scenes", [&c](const std::string& s) { c.scenes = split_list(s); },
                 [&c] { return join(c.scenes); }});
    f.push_back({"pipeline", "seed", [&c](const std::string& s) { c.seed = to_uint("pipeline.seed", s); },
                 [&c] { return std::to_string(c.seed); }});
    path("pipeline", "output", c.output);

    integer("camera", "width", c.camera.width);
    integer("camera", "height", c.camera.height);
    size("camera", "views", c.camera.views);
    size("camera", "holdout_every", c.camera.holdout_every);
    dbl("camera", "fov_y_deg", c.camera.fov_y_deg);
    opt("camera", "distance", c.camera.distance);
    opt("camera", "elevation_deg", c.camera.elevation_deg);
    opt("camera", "azimuth_center_deg", c.camera.azimuth_center_deg);
    opt("camera", "azimuth_span_deg", c.camera.azimuth_span_deg);
    path("camera", "trajectory", c.camera.trajectory);

    size("generator", "semantic_dim", c.generator.semantic_dim);
    dbl("generator", "detail_keep", c.generator.detail_keep);

    size("regions", "centers", c.regions.centers);
    dbl("regions", "radius", c.regions.radius);
    size("regions", "fps_start", c.regions.fps_start);
    size("regions", "max_region_size", c.regions.max_region_size);

    dbl("spectral", "beta", c.spectral.beta);
    dbl("spectral", "sigma", c.spectral.sigma);
    size("spectral", "k_eigs", c.spectral.k_eigs);
    size("spectral", "order", c.spectral.order);
    f.push_back({"spectral", "angles_deg",
                 [&c](const std::string& s) {
                     c.spectral.angles.clear();
                     for (const auto& item : split_list(s)) {
                         c.spectral.angles.push_back(to_double("spectral.angles_deg", item) * std::numbers::pi / 180.0);
                     }
                 },
                 [&c] {
                     std::vector<double> deg;
                     for (double a : c.spectral.angles) {
                         deg.push_back(a * 180.0 / std::numbers::pi);
                     }
                     return fmt_list(deg);
                 }});
    f.push_back({"spectral", "neighbor_rule",
                 [&c](const std::string& s) {
                     const std::string t = trim(s);
                     if (t == "knn") {
                         c.spectral.rule.kind = spectral::NeighborRule::Knn;
                     } else if (t == "radius") {
                         c.spectral.rule.kind = spectral::NeighborRule::Radius;
                     } else {
                         throw ConfigError("spectral.neighbor_rule: expected knn or radius");
                     }
                 },
                 [&c] { return std::string(c.spectral.rule.kind == spectral::NeighborRule::Knn ? "knn" : "radius"); }});
    size("spectral", "k_graph", c.spectral.rule.k);
    dbl("spectral", "graph_radius", c.spectral.rule.radius);
    f.push_back({"spectral", "rotation_frame",
                 [&c](const std::string& s) {
                     const std::string t = trim(s);
                     if (t == "principal") {
                         c.spectral.frame = spectral::RotationFrame::Principal;
                     } else if (t == "world") {
                         c.spectral.frame = spectral::RotationFrame::World;
                     } else {
                         throw ConfigError("spectral.rotation_frame: expected principal or world");
                     }
                 },
                 [&c] {
                     return std::string(c.spectral.frame == spectral::RotationFrame::Principal ? "principal" : "world");
                 }});

    size("encoder", "model_dim", c.encoder.model_dim);
    size("encoder", "heads", c.encoder.heads);
    size("encoder", "layers", c.encoder.layers);
    size("encoder", "mlp_hidden", c.encoder.mlp_hidden);
    size("encoder", "pe_bands", c.encoder.pe_bands);

    dbl("fusion", "tau_prop", c.tau_prop);

    flag("prune", "enabled", c.prune.enabled);
    dbl("prune", "tau", c.prune.tau);
    dbl("prune", "phi_init", c.prune.phi_init);

    flag("sh_prune", "enabled", c.sh_prune.enabled);
    f.push_back({"sh_prune", "tau",
                 [&c](const std::string& s) {
                     const auto items = split_list(s);
                     if (items.size() == 1) {
                         c.sh_prune.tau.fill(to_double("sh_prune.tau", items[0]));
                     } else if (items.size() == 4) {
                         for (std::size_t l = 0; l < 4; ++l) {
                             c.sh_prune.tau[l] = to_double("sh_prune.tau", items[l]);
                         }
                     } else {
                         throw ConfigError("sh_prune.tau: expected one value or four (degrees 0..3)");
                     }
                 },
                 [&c] { return fmt_list({c.sh_prune.tau.begin(), c.sh_prune.tau.end()}); }});
    size("sh_prune", "bins", c.sh_prune.bins);
    size("sh_prune", "hist_hidden", c.sh_prune.hist_hidden);
    size("sh_prune", "embed_dim", c.sh_prune.embed_dim);
    dbl("sh_prune", "psi_init", c.sh_prune.psi_init);

    flag("densify", "enabled", c.densify.enabled);
    f.push_back({"densify", "grad_source",
                 [&c](const std::string& s) {
                     const std::string t = trim(s);
                     if (t == "render") {
                         c.densify.grad_source = GradSource::Render;
                     } else if (t == "feature_fd") {
                         c.densify.grad_source = GradSource::FeatureFd;
                     } else {
                         throw ConfigError("densify.grad_source: expected render or feature_fd");
                     }
                 },
                 [&c] { return std::string(c.densify.grad_source == GradSource::Render ? "render" : "feature_fd"); }});
    dbl("densify", "grad_threshold", c.densify.params.grad_threshold);
    dbl("densify", "alpha_d", c.densify.params.alpha_d);
    size("densify", "n_max", c.densify.params.n_max);
    dbl("densify", "radius", c.densify.params.radius);
    dbl("densify", "d_min", c.densify.params.d_min);
    dbl("densify", "d_max", c.densify.params.d_max);
    dbl("densify", "fd_step", c.densify.fd_step);

    dbl("loss", "render", c.loss.render);
    dbl("loss", "semantic", c.loss.semantic);
    dbl("loss", "mask", c.loss.mask);
    dbl("loss", "sh", c.loss.sh);
    dbl("loss", "reg", c.loss.reg);

    flag("transfer", "enabled", c.transfer.enabled);
    dbl("transfer", "kappa", c.transfer.cks.kappa);
    dbl("transfer", "epsilon", c.transfer.cks.epsilon);
    dbl("transfer", "eta", c.transfer.cks.eta);
    f.push_back({"transfer", "tracked", [&c](const std::string& s) { c.transfer.cks.tracked = split_list(s); },
                 [&c] { return join(c.transfer.cks.tracked); }});
    f.push_back({"transfer", "modulation",
                 [&c](const std::string& s) {
                     const std::string t = trim(s);
                     if (t == "softplus") {
                         c.transfer.modulation = transfer::Modulation::Softplus;
                     } else if (t == "sigmoid") {
                         c.transfer.modulation = transfer::Modulation::Sigmoid;
                     } else {
                         throw ConfigError("transfer.modulation: expected softplus or sigmoid");
                     }
                 },
                 [&c] {
                     return std::string(c.transfer.modulation == transfer::Modulation::Softplus ? "softplus" : "sigmoid");
                 }});
    path("transfer", "basis_in", c.transfer.basis_in);
    path("transfer", "basis_out", c.transfer.basis_out);
    path("transfer", "encoder_in", c.transfer.encoder_in);
    path("transfer", "encoder_out", c.transfer.encoder_out);
    size("transfer", "update_every", c.transfer.update_every);

    size("train", "iterations", c.train.iterations);
    size("train", "adapt_interval", c.train.adapt_interval);
    size("train", "eval_interval", c.train.eval_interval);
    dbl("train", "lr_sh", c.train.lr_sh);
    dbl("train", "lr_opacity", c.train.lr_opacity);
    dbl("train", "lr_semantic", c.train.lr_semantic);
    dbl("train", "lr_encoder", c.train.lr_encoder);
    dbl("train", "lr_gate", c.train.lr_gate);
    dbl("train", "lr_prune_net", c.train.lr_prune_net);
    dbl("train", "lr_sh_net", c.train.lr_sh_net);
    dbl("train", "lr_phi", c.train.lr_phi);
    dbl("train", "lr_psi", c.train.lr_psi);
    dbl("train", "lr_modulation", c.train.lr_modulation);
    return f;
}

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw ConfigError(message);
    }
}

} // namespace

const std::vector<std::string>& generator_names() {
    static const std::vector<std::string> names{"room", "shells", "wall", "patch", "sh_halves"};
    return names;
}

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p) const {
    if (p.empty() || p.is_absolute() || base_dir.empty()) {
        return p;
    }
    return base_dir / p;
}

void PipelineConfig::validate() const {
    require(!scenes.empty(), "pipeline.scenes: at least one scene is required");
    for (const auto& s : scenes) {
        const std::string name = s.substr(0, s.find(':'));
        const bool generator =
            std::find(generator_names().begin(), generator_names().end(), name) != generator_names().end();
        const std::string ext = std::filesystem::path(s).extension().string();
        require(generator || ext == ".json" || ext == ".ply",
                "pipeline.scenes: '" + s + "' is neither a generator name nor a .json/.ply file");
        if (generator && s.find(':') != std::string::npos) {
            to_uint("pipeline.scenes variant", s.substr(s.find(':') + 1));
        }
    }
    require(camera.width >= 1 && camera.height >= 1, "camera: width and height must be positive");
    require(camera.views >= 1, "camera.views must be at least 1");
    require(camera.holdout_every == 0 || camera.holdout_every >= 2,
            "camera.holdout_every must be 0 (no held-out views) or at least 2");
    require(camera.fov_y_deg > 0.0 && camera.fov_y_deg < 180.0, "camera.fov_y_deg must be in (0, 180)");
    require(!camera.distance || *camera.distance > 0.0, "camera.distance must be positive");
    require(!camera.azimuth_span_deg || (*camera.azimuth_span_deg > 0.0 && *camera.azimuth_span_deg <= 360.0),
            "camera.azimuth_span_deg must be in (0, 360]");
    require(!camera.elevation_deg || std::abs(*camera.elevation_deg) < 89.0,
            "camera.elevation_deg must be within (-89, 89)");
    require(generator.semantic_dim >= 1, "generator.semantic_dim must be at least 1");
    require(generator.detail_keep > 0.0 && generator.detail_keep <= 1.0, "generator.detail_keep must be in (0, 1]");

    require(regions.radius > 0.0, "regions.radius must be positive");
    require(regions.max_region_size == 0 || regions.max_region_size >= 2,
            "regions.max_region_size must be 0 or at least 2");

    require(spectral.beta >= 0.0, "spectral.beta must be non-negative");
    require(spectral.k_eigs >= 1, "spectral.k_eigs must be at least 1");
    require(!spectral.angles.empty(), "spectral.angles_deg must list at least one angle");
    require(spectral.rule.kind != spectral::NeighborRule::Knn || spectral.rule.k >= 1,
            "spectral.k_graph must be at least 1");
    require(spectral.rule.kind != spectral::NeighborRule::Radius || spectral.rule.radius > 0.0,
            "spectral.graph_radius must be positive for the radius rule");

    require(encoder.model_dim >= 1 && encoder.heads >= 1 && encoder.model_dim % encoder.heads == 0,
            "encoder.model_dim must be divisible by encoder.heads");
    require(encoder.layers >= 1 && encoder.mlp_hidden >= 1 && encoder.pe_bands >= 1,
            "encoder: layers, mlp_hidden and pe_bands must be positive");
    require(tau_prop > 0.0, "fusion.tau_prop must be positive");

    require(prune.tau > 0.0 && prune.tau < 1.0, "prune.tau must be in (0, 1)");
    for (double t : sh_prune.tau) {
        require(t > 0.0 && t < 1.0, "sh_prune.tau must be in (0, 1)");
    }
    require(sh_prune.bins >= 1 && sh_prune.hist_hidden >= 1 && sh_prune.embed_dim >= 1,
            "sh_prune: bins, hist_hidden and embed_dim must be positive");

    try {
        densify.params.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("densify: ") + e.what());
    }
    require(densify.fd_step > 0.0, "densify.fd_step must be positive");

    for (double w : {loss.render, loss.semantic, loss.mask, loss.sh, loss.reg}) {
        require(std::isfinite(w) && w >= 0.0, "loss weights must be finite and non-negative");
    }
    try {
        transfer.cks.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("transfer: ") + e.what());
    }
    for (const auto& name : transfer.cks.tracked) {
        bool known = false;
        for (std::size_t l = 0; l < encoder.layers; ++l) {
            for (const char* m : {"w_q", "w_k", "w_v"}) {
                known = known || name == "layer" + std::to_string(l) + "." + m;
            }
        }
        require(known, "transfer.tracked: unknown projection matrix '" + name + "'");
    }

    require(train.adapt_interval >= 1, "train.adapt_interval must be at least 1");
    for (double lr : {train.lr_sh, train.lr_opacity, train.lr_semantic, train.lr_encoder, train.lr_gate,
                      train.lr_prune_net, train.lr_sh_net, train.lr_phi, train.lr_psi, train.lr_modulation}) {
        require(std::isfinite(lr) && lr >= 0.0, "learning rates must be finite and non-negative");
    }
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    boost::property_tree::ptree tree;
    try {
        std::istringstream in(text);
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    PipelineConfig config;
    config.base_dir = base_dir;
    const std::vector<Field> table = fields(config);
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError("config key '" + section + "' must live inside a [section]");
        }
        for (const auto& [key, value] : body) {
            const auto it = std::find_if(table.begin(), table.end(),
                                         [&](const Field& f) { return f.section == section && f.key == key; });
            if (it == table.end()) {
                throw ConfigError("unknown config key " + section + "." + key);
            }
            it->set(value.data());
        }
    }
    config.validate();
    return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::string default_config_text() {
    PipelineConfig config;
    std::string out;
    std::string section;
    for (const auto& f : fields(config)) {
        if (f.section != section) {
            out += (section.empty() ? "" : "\n") + std::string("[") + f.section + "]\n";
            section = f.section;
        }
        out += f.key + " = " + f.get() + "\n";
    }
    return out;
}

} // namespace anisogauss::pipeline
