// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/pipeline/metrics.hpp"

#include "anisogauss/errors.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace anisogauss::pipeline {

namespace {

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_num(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError("not a number: '" + s + "'");
    }
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(item);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

std::ofstream open(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    return out;
}

} // namespace

std::string format_psnr(const std::optional<double>& psnr) {
    if (!psnr) {
        return {};
    }
    if (std::isinf(*psnr) && *psnr > 0) {
        return "inf";
    }
    return num(*psnr);
}

std::optional<double> parse_psnr(const std::string& text) {
    if (text.empty()) {
        return std::nullopt;
    }
    if (text == "inf") {
        return std::numeric_limits<double>::infinity();
    }
    return parse_num(text);
}

std::string to_json_line(const MetricsRecord& r) {
    nlohmann::ordered_json j;
    j["iteration"] = r.iteration;
    j["scene"] = r.scene_id;
    j["L_render"] = r.l_render;
    j["L_semantic"] = r.l_semantic;
    j["L_mask"] = r.l_mask;
    j["L_SH"] = r.l_sh;
    j["L_reg"] = r.l_reg;
    j["total"] = r.total;
    j["gaussian_count"] = r.gaussian_count;
    if (!r.psnr) {
        j["psnr"] = nullptr;
    } else if (std::isinf(*r.psnr)) {
        j["psnr"] = "inf";
    } else {
        j["psnr"] = *r.psnr;
    }
    j["sh_active_fraction"] = r.sh_active_fraction;
    return j.dump();
}

MetricsRecord parse_json_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
        MetricsRecord r;
        r.iteration = j.at("iteration").get<std::size_t>();
        r.scene_id = j.at("scene").get<std::string>();
        r.l_render = j.at("L_render").get<double>();
        r.l_semantic = j.at("L_semantic").get<double>();
        r.l_mask = j.at("L_mask").get<double>();
        r.l_sh = j.at("L_SH").get<double>();
        r.l_reg = j.at("L_reg").get<double>();
        r.total = j.at("total").get<double>();
        r.gaussian_count = j.at("gaussian_count").get<std::size_t>();
        const auto& p = j.at("psnr");
        if (p.is_string()) {
            r.psnr = parse_psnr(p.get<std::string>());
        } else if (!p.is_null()) {
            r.psnr = p.get<double>();
        }
        r.sh_active_fraction = j.at("sh_active_fraction").get<std::array<double, 4>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("metrics line: ") + e.what());
    }
}

MetricsWriter::MetricsWriter(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    jsonl_ = open(dir / "metrics.jsonl");
    plot_ = open(dir / "plot.csv");
    timing_ = open(dir / "timing.csv");
    plot_ << kPlotHeader << '\n';
    timing_ << "iteration,wall_seconds\n";
    plot_.flush();
    timing_.flush();
}

void MetricsWriter::append(const MetricsRecord& r) {
    if (last_ && r.iteration <= *last_) {
        throw ValueError("metrics iterations must increase");
    }
    last_ = r.iteration;
    jsonl_ << to_json_line(r) << '\n';
    plot_ << r.iteration << ',' << r.scene_id << ',' << format_psnr(r.psnr) << ',' << r.gaussian_count << ','
          << num(r.l_render) << ',' << num(r.l_semantic) << ',' << num(r.l_mask) << ',' << num(r.l_sh) << ','
          << num(r.l_reg) << ',' << num(r.total) << '\n';
    timing_ << r.iteration << ',' << num(r.wall_seconds) << '\n';
    if (!jsonl_ || !plot_ || !timing_) {
        throw IoError("metrics write failed");
    }
    ++count_;
}

namespace {
constexpr const char* kSummaryHeader =
    "scene,iterations,gaussian_count,initial_count,psnr,L_render,L_semantic,sh_active_l0,sh_active_l1,"
    "sh_active_l2,sh_active_l3,pruned,added,basis_updates";
}

void write_summary(const SceneSummary& s, const std::filesystem::path& path) {
    std::ofstream out = open(path);
    out << kSummaryHeader << '\n'
        << s.scene_id << ',' << s.iterations << ',' << s.gaussian_count << ',' << s.initial_count << ','
        << format_psnr(s.psnr) << ',' << num(s.l_render) << ',' << num(s.l_semantic);
    for (double f : s.sh_active_fraction) {
        out << ',' << num(f);
    }
    out << ',' << s.pruned << ',' << s.added << ',' << s.basis_updates << '\n';
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
}

SceneSummary read_summary(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::string header;
    std::string line;
    std::getline(in, header);
    std::getline(in, line);
    if (header != kSummaryHeader) {
        throw ParseError("unexpected summary header in " + path.string());
    }
    const auto f = split_csv(line);
    if (f.size() != 14) {
        throw ParseError("summary row needs 14 fields in " + path.string());
    }
    try {
        SceneSummary s;
        s.scene_id = f[0];
        s.iterations = std::stoull(f[1]);
        s.gaussian_count = std::stoull(f[2]);
        s.initial_count = std::stoull(f[3]);
        s.psnr = parse_psnr(f[4]);
        s.l_render = parse_num(f[5]);
        s.l_semantic = parse_num(f[6]);
        for (std::size_t l = 0; l < 4; ++l) {
            s.sh_active_fraction[l] = parse_num(f[7 + l]);
        }
        s.pruned = std::stoull(f[11]);
        s.added = std::stoull(f[12]);
        s.basis_updates = std::stoull(f[13]);
        return s;
    } catch (const std::invalid_argument&) {
        throw ParseError("malformed summary row in " + path.string());
    }
}

} // namespace anisogauss::pipeline
