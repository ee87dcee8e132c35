// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/encode/encoder.hpp"

#include "anisogauss/errors.hpp"
#include "anisogauss/numerics/tensor_io.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <string>

namespace anisogauss::encode {

namespace ad = numerics::ad;

void EncoderConfig::validate() const {
    if (input_dim == 0 || model_dim == 0 || heads == 0 || mlp_hidden == 0 || pe_bands == 0) {
        throw DimensionError("encoder dimensions must be positive");
    }
    if (model_dim % heads != 0) {
        throw DimensionError("model_dim must be divisible by heads");
    }
    if (layers == 0) {
        throw ValueError("encoder needs at least one layer");
    }
}

EncoderWeights EncoderWeights::init(const EncoderConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    const std::size_t q = config.input_dim;
    const std::size_t d = config.model_dim;
    EncoderWeights w;
    w.config = config;
    w.token = Var::parameter(numerics::xavier_uniform(1, q, rng), "token");
    w.pe_proj = numerics::Linear::xavier(6 * config.pe_bands, q, rng, "pe_proj");
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::size_t in = l == 0 ? q : d;
        const std::string p = "layer" + std::to_string(l) + ".";
        EncoderLayer layer;
        layer.w_q = Var::parameter(numerics::xavier_uniform(in, d, rng), p + "w_q");
        layer.w_k = Var::parameter(numerics::xavier_uniform(in, d, rng), p + "w_k");
        layer.w_v = Var::parameter(numerics::xavier_uniform(in, d, rng), p + "w_v");
        if (in != d) {
            layer.w_res = Var::parameter(numerics::xavier_uniform(in, d, rng), p + "w_res");
        }
        layer.ff1 = numerics::Linear::xavier(d, config.mlp_hidden, rng, p + "ff1");
        layer.ff2 = numerics::Linear::xavier(config.mlp_hidden, d, rng, p + "ff2");
        w.layers.push_back(std::move(layer));
    }
    w.head1 = numerics::Linear::xavier(d, config.mlp_hidden, rng, "head1");
    w.head2 = numerics::Linear::xavier(config.mlp_hidden, d, rng, "head2");
    return w;
}

numerics::NamedParams EncoderWeights::named_parameters() const {
    numerics::NamedParams out;
    out.emplace_back(token.name(), token);
    pe_proj.collect(out);
    for (const auto& layer : layers) {
        for (const Var* v : {&layer.w_q, &layer.w_k, &layer.w_v, &layer.w_res}) {
            if (v->valid()) {
                out.emplace_back(v->name(), *v);
            }
        }
        layer.ff1.collect(out);
        layer.ff2.collect(out);
    }
    head1.collect(out);
    head2.collect(out);
    return out;
}

std::vector<Var> EncoderWeights::parameters() const {
    std::vector<Var> out;
    for (auto& [name, v] : named_parameters()) {
        out.push_back(v);
    }
    return out;
}

void EncoderWeights::save(const std::filesystem::path& path) const {
    numerics::NamedTensors tensors;
    for (const auto& [name, v] : named_parameters()) {
        tensors.emplace_back(name, v.value());
    }
    numerics::save_tensors(path, tensors);
}

void EncoderWeights::load(const std::filesystem::path& path) {
    std::map<std::string, DenseMatrix> loaded;
    for (auto& [name, m] : numerics::load_tensors(path)) {
        loaded.emplace(name, std::move(m));
    }
    for (auto [name, v] : named_parameters()) {
        const auto it = loaded.find(name);
        if (it == loaded.end() || !it->second.same_shape(v.value())) {
            throw DimensionError("checkpoint does not match encoder tensor " + name);
        }
        v.mutable_value() = it->second;
    }
}

DenseMatrix fourier_features(std::span<const Vec3> points, std::size_t bands) {
    DenseMatrix out(points.size(), 6 * bands);
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::size_t c = 0;
        for (std::size_t b = 0; b < bands; ++b) {
            const double f = std::ldexp(std::numbers::pi, static_cast<int>(b));
            for (int k = 0; k < 3; ++k) {
                out(i, c++) = std::sin(f * points[i][k]);
                out(i, c++) = std::cos(f * points[i][k]);
            }
        }
    }
    return out;
}

Var multi_head_attention(const Var& x, const Var& w_q, const Var& w_k, const Var& w_v, std::size_t heads) {
    const std::size_t d = w_q.cols();
    const std::size_t dh = d / heads;
    const Var q = ad::matmul(x, w_q);
    const Var k = ad::matmul(x, w_k);
    const Var v = ad::matmul(x, w_v);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Var qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
        const Var kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
        const Var vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
        const Var attn = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), scale));
        outs.push_back(ad::matmul(attn, vh));
    }
    return heads == 1 ? outs.front() : ad::concat_cols(outs);
}

Var encode_region(const DenseMatrix& descriptors, std::span<const Vec3> centers, const EncoderWeights& weights,
                  const PositionFrame& frame) {
    const auto& cfg = weights.config;
    const std::size_t n = descriptors.rows();
    if (n == 0 || centers.size() != n || descriptors.cols() != cfg.input_dim) {
        throw DimensionError("encode_region: expected n >= 1 descriptors of width " +
                             std::to_string(cfg.input_dim) + " and one center each");
    }
    std::vector<Vec3> local(n);
    for (std::size_t i = 0; i < n; ++i) {
        local[i] = (centers[i] - frame.origin) / frame.scale;
    }
    const Var pe = weights.pe_proj(Var::constant(fourier_features(local, cfg.pe_bands)));
    const Var tokens = ad::add(Var::constant(descriptors), pe);
    Var x = ad::concat_rows({weights.token, tokens});
    for (const auto& layer : weights.layers) {
        const Var h = ad::layer_norm_rows(x);
        const Var attn = multi_head_attention(h, layer.w_q, layer.w_k, layer.w_v, cfg.heads);
        const Var skip = layer.w_res.valid() ? ad::matmul(x, layer.w_res) : x;
        x = ad::add(skip, attn);
        const Var ff = layer.ff2(ad::gelu(layer.ff1(ad::layer_norm_rows(x))));
        x = ad::add(x, ff);
    }
    const Var y0 = ad::slice_rows(x, 0, 1);
    return weights.head2(ad::gelu(weights.head1(y0)));
}

} // namespace anisogauss::encode
