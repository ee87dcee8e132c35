// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/scene/io.hpp"

#include "anisogauss/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace anisogauss::scene {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary I/O assumes a little-endian host");

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<PlyType> parse_ply_type(const std::string& t) {
    static const std::map<std::string, PlyType> table = {
        {"char", PlyType::Int8},      {"int8", PlyType::Int8},      {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},    {"short", PlyType::Int16},    {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16},  {"uint16", PlyType::UInt16},  {"int", PlyType::Int32},
        {"int32", PlyType::Int32},    {"uint", PlyType::UInt32},    {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32},  {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64},
    };
    auto it = table.find(t);
    if (it == table.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t ply_type_size(PlyType t) {
    switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
    }
    return 0;
}

template <typename T>
double read_le(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
}

double decode_binary(PlyType t, const char* p) {
    switch (t) {
    case PlyType::Int8: return read_le<std::int8_t>(p);
    case PlyType::UInt8: return read_le<std::uint8_t>(p);
    case PlyType::Int16: return read_le<std::int16_t>(p);
    case PlyType::UInt16: return read_le<std::uint16_t>(p);
    case PlyType::Int32: return read_le<std::int32_t>(p);
    case PlyType::UInt32: return read_le<std::uint32_t>(p);
    case PlyType::Float32: return read_le<float>(p);
    case PlyType::Float64: return read_le<double>(p);
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    PlyType type;
};

struct PlyTable {
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    std::map<std::string, std::vector<double>> columns;
    std::map<std::string, PlyType> types;

    const std::vector<double>* find(const std::string& name) const {
        auto it = columns.find(name);
        return it == columns.end() ? nullptr : &it->second;
    }
};

PlyTable read_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) {
        throw ParseError("not a PLY file: " + path.string());
    }
    bool binary = false;
    bool have_format = false;
    bool in_vertex = false;
    bool vertex_seen = false;
    PlyTable table;
    while (true) {
        if (!std::getline(in, line)) {
            throw ParseError("PLY header not terminated");
        }
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end_header") {
            break;
        }
        if (word == "comment" || word == "obj_info" || word.empty()) {
            continue;
        }
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") {
                binary = false;
            } else if (fmt == "binary_little_endian") {
                binary = true;
            } else {
                throw ParseError("unsupported PLY format: " + fmt);
            }
            have_format = true;
        } else if (word == "element") {
            std::string name;
            std::size_t count = 0;
            ls >> name >> count;
            if (!ls) {
                throw ParseError("malformed element line");
            }
            in_vertex = name == "vertex" && !vertex_seen;
            if (in_vertex) {
                if (!table.properties.empty()) {
                    throw ParseError("vertex element must precede other elements");
                }
                vertex_seen = true;
                table.count = count;
            } else if (!vertex_seen) {
                throw ParseError("vertex element must be the first element");
            }
        } else if (word == "property") {
            if (!in_vertex) {
                continue;
            }
            std::string type_name;
            std::string name;
            ls >> type_name;
            if (type_name == "list") {
                throw ParseError("list properties are not supported on vertices");
            }
            ls >> name;
            auto type = parse_ply_type(type_name);
            if (!type || name.empty()) {
                throw ParseError("malformed property line: " + line);
            }
            table.properties.push_back({name, *type});
            table.types[name] = *type;
        } else {
            throw ParseError("unexpected PLY header line: " + line);
        }
    }
    if (!have_format || !vertex_seen) {
        throw ParseError("PLY header lacks format or vertex element");
    }
    for (const auto& p : table.properties) {
        table.columns[p.name].resize(table.count);
    }
    if (binary) {
        std::size_t stride = 0;
        for (const auto& p : table.properties) {
            stride += ply_type_size(p.type);
        }
        std::vector<char> buf(stride);
        for (std::size_t i = 0; i < table.count; ++i) {
            if (!in.read(buf.data(), static_cast<std::streamsize>(stride))) {
                throw ParseError("PLY binary payload truncated");
            }
            std::size_t off = 0;
            for (const auto& p : table.properties) {
                table.columns[p.name][i] = decode_binary(p.type, buf.data() + off);
                off += ply_type_size(p.type);
            }
        }
    } else {
        for (std::size_t i = 0; i < table.count; ++i) {
            if (!std::getline(in, line)) {
                throw ParseError("PLY ascii payload truncated");
            }
            std::istringstream ls(line);
            for (const auto& p : table.properties) {
                std::string tok;
                if (!(ls >> tok)) {
                    throw ParseError("PLY ascii row too short");
                }
                try {
                    std::size_t used = 0;
                    table.columns[p.name][i] = std::stod(tok, &used);
                    if (used != tok.size()) {
                        throw ParseError("bad number in PLY: " + tok);
                    }
                } catch (const std::logic_error&) {
                    throw ParseError("bad number in PLY: " + tok);
                }
            }
        }
    }
    return table;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p) - std::log1p(-p); }

double default_scale(double extent) { return extent > 0.0 ? 0.01 * extent : 0.01; }

double extent_of(const std::vector<Vec3>& pts) {
    if (pts.empty()) {
        return 0.0;
    }
    Vec3 lo = pts.front();
    Vec3 hi = lo;
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).maxCoeff();
}

Quat normalized_quat(double w, double x, double y, double z) {
    Quat q(w, x, y, z);
    const double n = q.norm();
    if (!(n > 1e-12) || !std::isfinite(n)) {
        throw ValueError("rotation quaternion has zero or non-finite norm");
    }
    q.coeffs() /= n;
    return q;
}

double checked_opacity(double a) {
    if (!std::isfinite(a) || a < -1e-6 || a > 1.0 + 1e-6) {
        throw ValueError("opacity outside [0,1]: " + std::to_string(a));
    }
    return std::clamp(a, 0.0, 1.0);
}

Scene from_ply(const std::filesystem::path& path) {
    const PlyTable t = read_ply(path);
    const auto* xs = t.find("x");
    const auto* ys = t.find("y");
    const auto* zs = t.find("z");
    if (!xs || !ys || !zs) {
        throw SchemaError("PLY lacks mandatory x, y, z properties");
    }
    Scene scene;
    scene.source_path = path.string();
    std::vector<Vec3> pts(t.count);
    for (std::size_t i = 0; i < t.count; ++i) {
        pts[i] = Vec3((*xs)[i], (*ys)[i], (*zs)[i]);
    }
    const double fallback_scale = default_scale(extent_of(pts));

    std::size_t sem_dim = 0;
    while (t.find("sem_" + std::to_string(sem_dim))) {
        ++sem_dim;
    }
    std::size_t rest = 0;
    while (t.find("f_rest_" + std::to_string(rest))) {
        ++rest;
    }
    if (rest % 3 != 0 || rest > 45) {
        throw SchemaError("PLY f_rest_* count must be a multiple of 3 and at most 45");
    }
    const std::size_t rest_per_channel = rest / 3;
    scene.semantic_dim = sem_dim;

    const auto* op = t.find("opacity");
    const auto* s0 = t.find("scale_0");
    const auto* s1 = t.find("scale_1");
    const auto* s2 = t.find("scale_2");
    const auto* r0 = t.find("rot_0");
    const auto* r1 = t.find("rot_1");
    const auto* r2 = t.find("rot_2");
    const auto* r3 = t.find("rot_3");
    const auto* dc0 = t.find("f_dc_0");
    const auto* dc1 = t.find("f_dc_1");
    const auto* dc2 = t.find("f_dc_2");
    const auto* red = t.find("red");
    const auto* green = t.find("green");
    const auto* blue = t.find("blue");
    const bool rgb_bytes = red && t.types.at("red") == PlyType::UInt8;

    scene.gaussians.resize(t.count);
    for (std::size_t i = 0; i < t.count; ++i) {
        SemanticGaussian& g = scene.gaussians[i];
        g.center = pts[i];
        g.opacity = op ? sigmoid((*op)[i]) : 1.0;
        if (s0 && s1 && s2) {
            g.scale = Vec3(std::exp((*s0)[i]), std::exp((*s1)[i]), std::exp((*s2)[i]));
        } else {
            g.scale = Vec3::Constant(fallback_scale);
        }
        if (r0 && r1 && r2 && r3) {
            g.rotation = normalized_quat((*r0)[i], (*r1)[i], (*r2)[i], (*r3)[i]);
        }
        if (dc0 && dc1 && dc2) {
            g.sh[0] = {(*dc0)[i], (*dc1)[i], (*dc2)[i]};
        } else if (red && green && blue) {
            const double norm = rgb_bytes ? 255.0 : 1.0;
            const double rgb[3] = {(*red)[i] / norm, (*green)[i] / norm, (*blue)[i] / norm};
            for (int c = 0; c < 3; ++c) {
                g.sh[0][c] = (rgb[c] - 0.5) / kShC0;
            }
        }
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t k = 0; k < rest_per_channel; ++k) {
                g.sh[k + 1][c] = t.columns.at("f_rest_" + std::to_string(c * rest_per_channel + k))[i];
            }
        }
        g.semantic_feature.resize(sem_dim);
        for (std::size_t d = 0; d < sem_dim; ++d) {
            g.semantic_feature[d] = t.columns.at("sem_" + std::to_string(d))[i];
        }
    }
    scene.validate();
    return scene;
}

std::vector<double> number_array(const json& j, const char* what, std::size_t expected) {
    if (!j.is_array() || (expected != 0 && j.size() != expected)) {
        throw SchemaError(std::string(what) + ": expected an array of " + std::to_string(expected) + " numbers");
    }
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) {
            throw SchemaError(std::string(what) + ": non-numeric entry");
        }
        out.push_back(v.get<double>());
    }
    return out;
}

Scene from_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON scene: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("gaussians") || !doc["gaussians"].is_array()) {
        throw SchemaError("JSON scene lacks a \"gaussians\" array");
    }
    Scene scene;
    scene.source_path = path.string();
    scene.semantic_dim = doc.value("semantic_dim", std::size_t{0});
    scene.unit_scale = doc.value("unit_scale", 1.0);

    const auto& items = doc["gaussians"];
    std::vector<Vec3> pts;
    for (const auto& item : items) {
        if (!item.is_object() || !item.contains("center")) {
            throw SchemaError("gaussian entry lacks \"center\"");
        }
        const auto c = number_array(item["center"], "center", 3);
        pts.emplace_back(c[0], c[1], c[2]);
    }
    const double fallback_scale = default_scale(extent_of(pts));

    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        SemanticGaussian g;
        g.center = pts[i];
        if (item.contains("rotation")) {
            const auto q = number_array(item["rotation"], "rotation", 4);
            g.rotation = normalized_quat(q[0], q[1], q[2], q[3]);
        }
        if (item.contains("scale")) {
            const auto s = number_array(item["scale"], "scale", 3);
            g.scale = Vec3(s[0], s[1], s[2]);
            if ((g.scale.array() <= 0.0).any()) {
                throw ValueError("scale entries must be strictly positive");
            }
        } else {
            g.scale = Vec3::Constant(fallback_scale);
        }
        g.opacity = item.contains("opacity") ? checked_opacity(item["opacity"].get<double>()) : 1.0;
        if (item.contains("sh")) {
            const auto& sh = item["sh"];
            if (!sh.is_array() || sh.size() > kShCoeffs) {
                throw SchemaError("sh: expected at most 16 RGB triplets");
            }
            for (std::size_t k = 0; k < sh.size(); ++k) {
                const auto rgb = number_array(sh[k], "sh", 3);
                g.sh[k] = {rgb[0], rgb[1], rgb[2]};
            }
        } else if (item.contains("color")) {
            const auto rgb = number_array(item["color"], "color", 3);
            for (int c = 0; c < 3; ++c) {
                g.sh[0][c] = (rgb[c] - 0.5) / kShC0;
            }
        }
        if (item.contains("semantic")) {
            g.semantic_feature = number_array(item["semantic"], "semantic", scene.semantic_dim);
        } else {
            g.semantic_feature.assign(scene.semantic_dim, 0.0);
        }
        scene.gaussians.push_back(std::move(g));
    }
    scene.validate();
    return scene;
}

template <typename T>
void write_le(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

} // namespace

Scene load_scene(const std::filesystem::path& path, SceneFormat format) {
    if (!std::filesystem::exists(path)) {
        throw ParseError("scene file does not exist: " + path.string());
    }
    if (format == SceneFormat::Ply) {
        return from_ply(path);
    }
    try {
        return from_json(path);
    } catch (const nlohmann::json::type_error& e) {
        throw SchemaError(std::string("JSON scene has a wrongly typed field: ") + e.what());
    }
}

Scene load_scene(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ply") {
        return load_scene(path, SceneFormat::Ply);
    }
    if (ext == ".json") {
        return load_scene(path, SceneFormat::Json);
    }
    throw ParseError("unknown scene extension: " + ext);
}

void save_scene_json(const Scene& scene, const std::filesystem::path& path) {
    json doc;
    doc["semantic_dim"] = scene.semantic_dim;
    doc["unit_scale"] = scene.unit_scale;
    json items = json::array();
    for (const auto& g : scene.gaussians) {
        json item;
        item["center"] = {g.center.x(), g.center.y(), g.center.z()};
        item["rotation"] = {g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z()};
        item["scale"] = {g.scale.x(), g.scale.y(), g.scale.z()};
        item["opacity"] = g.opacity;
        json sh = json::array();
        for (const auto& rgb : g.sh) {
            sh.push_back({rgb[0], rgb[1], rgb[2]});
        }
        item["sh"] = std::move(sh);
        item["semantic"] = g.semantic_feature;
        items.push_back(std::move(item));
    }
    doc["gaussians"] = std::move(items);
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << doc.dump(1) << '\n';
}

void save_scene_ply(const Scene& scene, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << scene.size() << "\n";
    std::vector<std::string> names = {"x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2",
                                      "rot_0", "rot_1", "rot_2", "rot_3", "f_dc_0", "f_dc_1", "f_dc_2"};
    for (int i = 0; i < 45; ++i) {
        names.push_back("f_rest_" + std::to_string(i));
    }
    for (std::size_t d = 0; d < scene.semantic_dim; ++d) {
        names.push_back("sem_" + std::to_string(d));
    }
    for (const auto& n : names) {
        out << "property double " << n << "\n";
    }
    out << "end_header\n";
    for (const auto& g : scene.gaussians) {
        write_le(out, g.center.x());
        write_le(out, g.center.y());
        write_le(out, g.center.z());
        write_le(out, logit(g.opacity));
        for (int k = 0; k < 3; ++k) {
            write_le(out, std::log(g.scale[k]));
        }
        write_le(out, g.rotation.w());
        write_le(out, g.rotation.x());
        write_le(out, g.rotation.y());
        write_le(out, g.rotation.z());
        for (int c = 0; c < 3; ++c) {
            write_le(out, g.sh[0][c]);
        }
        for (int c = 0; c < 3; ++c) {
            for (std::size_t k = 1; k < kShCoeffs; ++k) {
                write_le(out, g.sh[k][c]);
            }
        }
        for (double v : g.semantic_feature) {
            write_le(out, v);
        }
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

} // namespace anisogauss::scene
