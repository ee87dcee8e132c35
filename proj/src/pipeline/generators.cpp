// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/pipeline/generators.hpp"

#include "anisogauss/errors.hpp"
#include "anisogauss/scene/io.hpp"

#include "json.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace anisogauss::pipeline {

namespace {

using scene::Mat3;
using scene::Quat;
using scene::SemanticGaussian;

constexpr double kDeg = std::numbers::pi / 180.0;

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Builder {
    scene::Scene truth;
    std::vector<int> groups;
    std::size_t dim;

    explicit Builder(std::size_t semantic_dim) : dim(semantic_dim) { truth.semantic_dim = semantic_dim; }

    SemanticGaussian& add(const Vec3& center, const Mat3& frame, const Vec3& scale, double opacity,
                          const Vec3& rgb, std::size_t cls, Group group) {
        SemanticGaussian g;
        g.center = center;
        Mat3 r = frame;
        if (r.determinant() < 0.0) {
            r.col(2) = -r.col(2);
        }
        g.rotation = Quat(r).normalized();
        g.scale = scale;
        g.opacity = opacity;
        for (int c = 0; c < 3; ++c) {
            g.sh[0][c] = (std::clamp(rgb[c], 0.0, 1.0) - 0.5) / scene::kShC0;
        }
        g.semantic_feature = class_embedding(cls, dim);
        truth.gaussians.push_back(std::move(g));
        groups.push_back(static_cast<int>(group));
        return truth.gaussians.back();
    }
};

// Columns: two tangents then the normal.
Mat3 frame_from_normal(const Vec3& n) {
    const Vec3 z = n.normalized();
    const Vec3 t = std::abs(z.z()) < 0.9 ? Vec3::UnitZ().cross(z).normalized() : Vec3::UnitX().cross(z).normalized();
    Mat3 f;
    f.col(0) = t;
    f.col(1) = z.cross(t);
    f.col(2) = z;
    return f;
}

Vec3 random_colour(std::mt19937_64& rng, double lo = 0.15, double hi = 0.85) {
    std::uniform_real_distribution<double> u(lo, hi);
    const double r = u(rng);
    const double g = u(rng);
    const double b = u(rng);
    return {r, g, b};
}

void room(Builder& b, std::mt19937_64& rng, OrbitHint& hint) {
    const Vec3 floor_a = random_colour(rng);
    const Vec3 floor_b = random_colour(rng);
    const Vec3 wall_a = random_colour(rng);
    const Vec3 wall_b = random_colour(rng);
    const Vec3 side_lo = random_colour(rng);
    const Vec3 side_hi = random_colour(rng);
    const Vec3 box = random_colour(rng);
    std::uniform_real_distribution<double> pos(-0.4, 0.3);
    const double bx = pos(rng);
    const double by = pos(rng);
    const std::size_t check = 3 + rng() % 3;

    const Mat3 up = frame_from_normal(Vec3::UnitZ());
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            const Vec3 c = ((i / check + j / check) % 2) ? floor_a : floor_b;
            const double x = -0.95 + 0.1 * i;
            const double y = -0.95 + 0.1 * j;
            b.add({x, y, 0.0}, up, {0.06, 0.06, 0.01}, 0.95, c, 0, Group::Plain);
            b.add({x, y, -0.05}, up, {0.06, 0.06, 0.01}, 0.95, c, 0, Group::Occluded);
        }
    }
    const Mat3 back = frame_from_normal(-Vec3::UnitY());
    const Mat3 left = frame_from_normal(Vec3::UnitX());
    for (int i = 0; i < 20; ++i) {
        for (int k = 0; k < 12; ++k) {
            const double u = -0.95 + 0.1 * i;
            const double z = 0.05 + 0.1 * k;
            const Vec3 stripe = ((k / 3) % 2) ? wall_a : wall_b;
            b.add({u, 1.0, z}, back, {0.06, 0.06, 0.01}, 0.95, stripe, 1, Group::Plain);
            b.add({u, 1.05, z}, back, {0.06, 0.06, 0.01}, 0.95, stripe, 1, Group::Occluded);
            const double t = (u + 1.0) / 2.0;
            const Vec3 grad = (1.0 - t) * side_lo + t * side_hi;
            b.add({-1.0, u, z}, left, {0.06, 0.06, 0.01}, 0.95, grad, 2, Group::Plain);
            b.add({-1.05, u, z}, left, {0.06, 0.06, 0.01}, 0.95, grad, 2, Group::Occluded);
        }
    }
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) {
            for (int k = 0; k < 7; ++k) {
                const bool surface = i == 0 || j == 0 || k == 0 || i == 6 || j == 6 || k == 6;
                const Vec3 c(bx + 0.07 * (i - 3), by + 0.07 * (j - 3), 0.05 + 0.07 * k);
                const Vec3 shade = box * (0.8 + 0.05 * k);
                b.add(c, Mat3::Identity(), Vec3::Constant(0.045), 0.95, shade, 3,
                      surface ? Group::Plain : Group::Occluded);
            }
        }
    }
    hint = {Vec3(0.0, 0.0, 0.35), 3.2, -45.0, 120.0, 30.0};
}

void shells(Builder& b, std::mt19937_64& rng, OrbitHint& hint) {
    const Vec3 ca = random_colour(rng);
    const Vec3 cb = random_colour(rng);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    const std::size_t n = 300;
    for (std::size_t cluster = 0; cluster < 2; ++cluster) {
        const Vec3 centre(cluster == 0 ? -0.6 : 0.6, 0.0, 0.0);
        const Vec3 radii = cluster == 0 ? Vec3(0.45, 0.45, 0.45) : Vec3(0.3, 0.5, 0.3);
        for (std::size_t i = 0; i < n; ++i) {
            const double z = 1.0 - 2.0 * (i + 0.5) / n;
            const double r = std::sqrt(1.0 - z * z);
            const double a = golden * i;
            const Vec3 unit(r * std::cos(a), r * std::sin(a), z);
            const Vec3 p = centre + radii.cwiseProduct(unit);
            const Vec3 normal = unit.cwiseQuotient(radii).normalized();
            Mat3 f = frame_from_normal(normal);
            if (cluster == 1) {
                // Long axis along latitude instead of longitude.
                const Vec3 t0 = f.col(0);
                f.col(0) = f.col(1);
                f.col(1) = t0;
            }
            const Vec3 colour = (cluster == 0 ? ca : cb) * (0.7 + 0.3 * (z + 1.0) / 2.0);
            b.add(p, f, {0.08, 0.03, 0.01}, 0.9, colour, cluster, Group::Plain);
        }
    }
    hint = {Vec3::Zero(), 3.0, 0.0, 360.0, 30.0};
}

void wall(Builder& b, std::mt19937_64& rng, OrbitHint& hint) {
    const Vec3 colour = random_colour(rng);
    const Mat3 f = frame_from_normal(-Vec3::UnitY());
    for (int i = 0; i < 20; ++i) {
        for (int k = 0; k < 20; ++k) {
            b.add({-0.95 + 0.1 * i, 0.0, -0.95 + 0.1 * k}, f, {0.07, 0.07, 0.01}, 0.95, colour, 0, Group::Plain);
        }
    }
    hint = {Vec3::Zero(), 2.6, -90.0, 90.0, 15.0};
}

void patch(Builder& b, std::mt19937_64& rng, OrbitHint& hint) {
    const Vec3 lo = random_colour(rng);
    const Vec3 hi = random_colour(rng);
    const Vec3 dark = random_colour(rng, 0.05, 0.3);
    const Vec3 bright = random_colour(rng, 0.7, 0.95);
    const Mat3 f = frame_from_normal(-Vec3::UnitY());
    for (int i = 0; i < 16; ++i) {
        for (int k = 0; k < 16; ++k) {
            const double x = -0.9375 + 0.125 * i;
            const double z = -0.9375 + 0.125 * k;
            const double t = (x + z + 2.0) / 4.0;
            b.add({x, 0.02, z}, f, {0.09, 0.09, 0.01}, 0.95, (1.0 - t) * lo + t * hi, 0, Group::Plain);
        }
    }
    for (int i = 0; i < 24; ++i) {
        for (int k = 0; k < 24; ++k) {
            const double x = -0.43125 + 0.0375 * i;
            const double z = -0.43125 + 0.0375 * k;
            const Vec3 c = ((i / 2 + k / 2) % 2) ? dark : bright;
            b.add({x, 0.0, z}, f, {0.022, 0.022, 0.005}, 0.95, c, 1, Group::Detail);
        }
    }
    hint = {Vec3::Zero(), 2.2, -90.0, 100.0, 15.0};
}

void sh_halves(Builder& b, std::mt19937_64& rng, OrbitHint& hint) {
    const Vec3 lo = random_colour(rng, 0.3, 0.7);
    const Vec3 hi = random_colour(rng, 0.3, 0.7);
    std::normal_distribution<double> n1(0.0, 0.06);
    std::normal_distribution<double> n2(0.0, 0.08);
    std::normal_distribution<double> n3(0.0, 0.2);
    const Mat3 f = frame_from_normal(-Vec3::UnitY());
    for (int i = 0; i < 24; ++i) {
        for (int k = 0; k < 24; ++k) {
            const double x = -0.92 + 0.08 * i;
            const double z = -0.92 + 0.08 * k;
            const double t = (z + 1.0) / 2.0;
            const bool matte = x < 0.0;
            auto& g = b.add({x, 0.0, z}, f, {0.055, 0.055, 0.01}, 0.95, (1.0 - t) * lo + t * hi, matte ? 0 : 1,
                            matte ? Group::Matte : Group::ViewDependent);
            if (!matte) {
                for (std::size_t kk = 1; kk < scene::kShCoeffs; ++kk) {
                    for (int c = 0; c < 3; ++c) {
                        g.sh[kk][c] = kk < 4 ? n1(rng) : kk < 9 ? n2(rng) : n3(rng);
                    }
                }
            }
        }
    }
    hint = {Vec3::Zero(), 2.6, -90.0, 140.0, 20.0};
}

scene::Scene initial_from(const scene::Scene& truth, std::size_t dim) {
    scene::Scene init = truth;
    init.semantic_dim = dim;
    for (auto& g : init.gaussians) {
        for (std::size_t k = 1; k < scene::kShCoeffs; ++k) {
            g.sh[k] = {0.0, 0.0, 0.0};
        }
        g.opacity = 0.5;
        g.semantic_feature.assign(dim, 0.0);
    }
    return init;
}

} // namespace

std::vector<double> class_embedding(std::size_t cls, std::size_t dim) {
    std::vector<double> e(dim, 0.0);
    if (dim > 0) {
        e[cls % dim] = 1.0;
    }
    return e;
}

SyntheticScene make_scene(const std::string& spec, const PipelineConfig& config) {
    const std::size_t dim = config.generator.semantic_dim;
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    const bool generator =
        std::find(generator_names().begin(), generator_names().end(), name) != generator_names().end();

    SyntheticScene out;
    out.id = spec;
    std::replace(out.id.begin(), out.id.end(), ':', '-');
    std::replace(out.id.begin(), out.id.end(), '/', '_');

    if (!generator) {
        out.truth = scene::load_scene(config.resolve(spec));
        out.id = std::filesystem::path(spec).stem().string();
        if (out.truth.semantic_dim != dim) {
            for (auto& g : out.truth.gaussians) {
                g.semantic_feature.resize(dim, 0.0);
            }
            out.truth.semantic_dim = dim;
        }
        out.init = initial_from(out.truth, dim);
        out.init_groups.assign(out.init.size(), static_cast<int>(Group::Plain));
        Vec3 lo = out.truth.gaussians.empty() ? Vec3::Zero() : out.truth.gaussians.front().center;
        Vec3 hi = lo;
        for (const auto& g : out.truth.gaussians) {
            lo = lo.cwiseMin(g.center);
            hi = hi.cwiseMax(g.center);
        }
        out.orbit.target = 0.5 * (lo + hi);
        out.orbit.distance = std::max(2.0 * out.truth.extent(), 0.5);
        return out;
    }

    const std::uint64_t variant = colon == std::string::npos ? 0 : std::stoull(spec.substr(colon + 1));
    std::mt19937_64 rng(mix(mix(std::hash<std::string>{}(name)) ^ mix(variant) ^ mix(config.seed + 0x51ed)));
    Builder b(dim);
    if (name == "room") {
        room(b, rng, out.orbit);
    } else if (name == "shells") {
        shells(b, rng, out.orbit);
    } else if (name == "wall") {
        wall(b, rng, out.orbit);
    } else if (name == "patch") {
        patch(b, rng, out.orbit);
    } else {
        sh_halves(b, rng, out.orbit);
    }
    out.truth = std::move(b.truth);
    out.truth.source_path = "generator:" + spec;
    out.init = initial_from(out.truth, dim);
    out.init_groups = b.groups;

    if (name == "patch") {
        // Thin the detail patch: the training scene starts under-covered there.
        std::bernoulli_distribution keep(config.generator.detail_keep);
        scene::Scene thinned = out.init;
        thinned.gaussians.clear();
        std::vector<int> groups;
        for (std::size_t i = 0; i < out.init.size(); ++i) {
            if (out.init_groups[i] != static_cast<int>(Group::Detail) || keep(rng)) {
                thinned.gaussians.push_back(out.init.gaussians[i]);
                groups.push_back(out.init_groups[i]);
            }
        }
        out.init = std::move(thinned);
        out.init_groups = std::move(groups);
    }
    out.truth.validate();
    out.init.validate();
    return out;
}

std::vector<scene::Camera> load_trajectory(const std::filesystem::path& path, int width, int height) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open camera trajectory " + path.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("camera trajectory: ") + e.what());
    }
    if (!doc.contains("cameras") || !doc["cameras"].is_array() || doc["cameras"].empty()) {
        throw SchemaError("camera trajectory needs a non-empty \"cameras\" array");
    }
    auto vec = [](const nlohmann::json& j, const char* key) {
        if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3) {
            throw SchemaError(std::string("camera entry needs a 3-vector \"") + key + "\"");
        }
        return Vec3(j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>());
    };
    std::vector<scene::Camera> cams;
    for (const auto& c : doc["cameras"]) {
        const Vec3 eye = vec(c, "eye");
        const Vec3 target = vec(c, "target");
        const Vec3 up = c.contains("up") ? vec(c, "up") : Vec3::UnitZ();
        const double fov = c.value("fov_y_deg", 50.0);
        const double dist = (target - eye).norm();
        cams.push_back(scene::Camera::look_at(eye, target, up, width, height, fov * kDeg, 0.01 * dist, 100.0 * dist));
    }
    return cams;
}

CameraSet make_cameras(const PipelineConfig& config, const OrbitHint& hint) {
    const auto& cc = config.camera;
    CameraSet set;
    if (!cc.trajectory.empty()) {
        set.all = load_trajectory(config.resolve(cc.trajectory), cc.width, cc.height);
    } else {
        const double distance = cc.distance.value_or(hint.distance);
        const double elevation = cc.elevation_deg.value_or(hint.elevation_deg);
        const double centre = cc.azimuth_center_deg.value_or(hint.azimuth_center_deg);
        const double span = cc.azimuth_span_deg.value_or(hint.azimuth_span_deg);
        const std::size_t n = cc.views;
        for (std::size_t i = 0; i < n; ++i) {
            const double frac = span >= 360.0 ? static_cast<double>(i) / n : (i + 0.5) / n;
            const double az = (centre - (span >= 360.0 ? 0.0 : 0.5 * span) + span * frac) * kDeg;
            // Alternate the elevation a little so views are not coplanar.
            const double el = (elevation + 6.0 * (static_cast<double>(i % 3) - 1.0)) * kDeg;
            const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
            const Vec3 eye = hint.target + distance * dir;
            set.all.push_back(scene::Camera::look_at(eye, hint.target, Vec3::UnitZ(), cc.width, cc.height,
                                                     cc.fov_y_deg * kDeg, 0.01 * distance, 100.0 * distance));
        }
    }
    for (std::size_t i = 0; i < set.all.size(); ++i) {
        const bool held = cc.holdout_every > 0 && i % cc.holdout_every == cc.holdout_every - 1;
        (held ? set.held_out : set.train).push_back(i);
    }
    if (set.train.empty()) {
        throw ConfigError("camera setup leaves no training views");
    }
    return set;
}

} // namespace anisogauss::pipeline
