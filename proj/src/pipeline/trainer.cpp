// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/pipeline/trainer.hpp"

#include "anisogauss/errors.hpp"
#include "anisogauss/scene/geometry.hpp"
#include "anisogauss/spectral/descriptor.hpp"
#include "anisogauss/splat/render.hpp"
#include "anisogauss/splat/sh.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace anisogauss::pipeline {

namespace ad = numerics::ad;
using numerics::DenseMatrix;
using numerics::Var;

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double logit(double p) {
    const double q = std::clamp(p, 1e-4, 1.0 - 1e-4);
    return std::log(q / (1.0 - q));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

DenseMatrix image_matrix(const splat::Image& img) {
    return DenseMatrix(img.pixels(), static_cast<std::size_t>(img.channels), img.data);
}

// Row i of the result is row source[i] of m, or `fill` when source[i] < 0.
DenseMatrix remap_rows(const DenseMatrix& m, const std::vector<long>& source, double fill = 0.0) {
    DenseMatrix out(source.size(), m.cols(), fill);
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (source[i] >= 0) {
            const auto src = m.row(static_cast<std::size_t>(source[i]));
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
    }
    return out;
}

struct ViewCache {
    bool valid = false;
    std::vector<splat::ProjectedGaussian> projected;
    DenseMatrix basis;
    std::vector<scene::LocalRegion> regions;
    std::vector<DenseMatrix> descriptors;
    std::vector<std::vector<Vec3>> centers;
    std::vector<encode::PositionFrame> frames;
    encode::PropagationPlan plan;
    bool hist_valid = false;
    adapt::HistogramPlan hist;
};

} // namespace

std::size_t descriptor_width(const PipelineConfig& config) { return config.spectral.dimension(); }

double mean_psnr(const std::vector<double>& per_view) {
    if (per_view.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double sum = 0.0;
    for (double p : per_view) {
        if (std::isinf(p)) {
            return std::numeric_limits<double>::infinity();
        }
        sum += p;
    }
    return sum / static_cast<double>(per_view.size());
}

struct Trainer::Impl {
    PipelineConfig cfg;
    std::size_t q = 0;
    std::size_t df = 0;
    encode::EncoderWeights enc;
    encode::GateWeights gate;
    adapt::PruneNet prune_net;
    adapt::ShPruneNet sh_net;
    transfer::ModulationNet mod;
    transfer::BasisStore bases;
    std::size_t iteration = 0;
    std::size_t scene_index = 0;

    // Per-scene state.
    scene::Scene geo;
    Var sh;
    Var opacity_logit;
    Var fsem;
    adapt::AdaptationState state;
    std::vector<int> groups;
    DenseMatrix sh_kept;
    DenseMatrix last_final;
    std::vector<ViewCache> caches;
    CameraSet cams;
    std::vector<DenseMatrix> target_rgb;
    std::vector<DenseMatrix> target_sem;
    std::vector<splat::Image> target_img;

    explicit Impl(PipelineConfig c) : cfg(std::move(c)) {
        cfg.validate();
        q = descriptor_width(cfg);
        df = cfg.generator.semantic_dim;
        encode::EncoderConfig ec = cfg.encoder;
        ec.input_dim = q;
        ec.seed = mix(cfg.seed ^ 0x1);
        enc = encode::EncoderWeights::init(ec);
        gate = encode::GateWeights::init(ec.model_dim, df, mix(cfg.seed ^ 0x2));
        prune_net = adapt::PruneNet::init(df, mix(cfg.seed ^ 0x3));
        sh_net = adapt::ShPruneNet::init(df, cfg.sh_prune.bins, cfg.sh_prune.hist_hidden, cfg.sh_prune.embed_dim,
                                         mix(cfg.seed ^ 0x4));
        mod = transfer::ModulationNet::init(q, mix(cfg.seed ^ 0x5), cfg.transfer.modulation);
    }

    std::vector<std::string> tracked_names() const {
        if (!cfg.transfer.cks.tracked.empty()) {
            return cfg.transfer.cks.tracked;
        }
        std::vector<std::string> names;
        for (std::size_t l = 0; l < enc.layers.size(); ++l) {
            for (const char* m : {"w_q", "w_k", "w_v"}) {
                names.push_back("layer" + std::to_string(l) + "." + m);
            }
        }
        return names;
    }

    Var tracked_param(const std::string& name) const {
        for (const auto& [n, v] : enc.named_parameters()) {
            if (n == name) {
                return v;
            }
        }
        throw ConfigError("unknown tracked matrix " + name);
    }

    void ensure_cache(std::size_t v) {
        ViewCache& c = caches[v];
        if (!c.valid) {
            const scene::Camera& cam = cams.all[v];
            c = ViewCache{};
            c.projected = splat::project(geo, cam);
            c.basis = splat::view_sh_basis(geo, cam);
            const auto regions = scene::build_regions(geo, cam, cfg.regions);
            for (const auto& region : regions) {
                if (region.member_indices.size() < 2) {
                    continue;
                }
                std::vector<spectral::SpectralDescriptor> d;
                try {
                    d = spectral::anisotropic_descriptor(region, geo, cfg.spectral);
                } catch (const RegionTooSmall&) {
                    continue;
                } catch (const DegenerateSpectrum&) {
                    continue;
                }
                DenseMatrix m(d.size(), q);
                std::vector<Vec3> centers;
                for (std::size_t i = 0; i < d.size(); ++i) {
                    std::copy(d[i].values.begin(), d[i].values.end(), m.row(i).begin());
                    centers.push_back(geo.gaussians[region.member_indices[i]].center);
                }
                c.regions.push_back(region);
                c.descriptors.push_back(std::move(m));
                c.centers.push_back(std::move(centers));
                c.frames.push_back({geo.gaussians[region.center_index].center, region.radius});
            }
            c.plan = encode::build_propagation(geo, c.regions, cfg.tau_prop);
            c.valid = true;
        }
        if (cfg.sh_prune.enabled && !c.hist_valid) {
            c.hist = adapt::build_histogram_plan(sh.value(), c.regions, c.plan, cfg.sh_prune.bins);
            c.hist_valid = true;
        }
    }

    void invalidate(bool geometry) {
        for (auto& c : caches) {
            if (geometry) {
                c.valid = false;
            }
            c.hist_valid = false;
        }
    }

    Var encodings(const ViewCache& c) const {
        std::vector<Var> rows;
        rows.reserve(c.regions.size());
        for (std::size_t r = 0; r < c.regions.size(); ++r) {
            rows.push_back(encode::encode_region(c.descriptors[r], c.centers[r], enc, c.frames[r]));
        }
        return ad::concat_rows(rows);
    }

    // Mean over every token (z_0 included) fed to the encoder for this view, detached.
    Var mean_token(const ViewCache& c) const {
        DenseMatrix sum(1, q, 0.0);
        double count = 0.0;
        for (std::size_t r = 0; r < c.regions.size(); ++r) {
            std::vector<Vec3> local;
            for (const auto& p : c.centers[r]) {
                local.push_back((p - c.frames[r].origin) / c.frames[r].scale);
            }
            const DenseMatrix pe =
                enc.pe_proj(Var::constant(encode::fourier_features(local, enc.config.pe_bands))).value();
            for (std::size_t i = 0; i < local.size(); ++i) {
                for (std::size_t k = 0; k < q; ++k) {
                    sum(0, k) += c.descriptors[r](i, k) + pe(i, k);
                }
            }
            for (std::size_t k = 0; k < q; ++k) {
                sum(0, k) += enc.token.value()(0, k);
            }
            count += static_cast<double>(local.size() + 1);
        }
        if (count > 0.0) {
            for (auto& v : sum.data()) {
                v /= count;
            }
        }
        return Var::constant(sum);
    }

    scene::Scene materialize() const {
        scene::Scene s = geo;
        const std::size_t n = geo.size();
        for (std::size_t i = 0; i < n; ++i) {
            auto& g = s.gaussians[i];
            for (std::size_t k = 0; k < scene::kShCoeffs; ++k) {
                const int l = splat::sh_degree_of(k);
                double keep = sh_kept(i, static_cast<std::size_t>(l));
                if (cfg.sh_prune.enabled) {
                    keep *= state.sh_binary(i, static_cast<std::size_t>(l));
                }
                for (int ch = 0; ch < 3; ++ch) {
                    g.sh[k][ch] = keep * sh.value()(i, 3 * k + ch);
                }
            }
            double op = sigmoid(opacity_logit.value()(i, 0));
            if (cfg.prune.enabled && !state.binary_mask[i]) {
                op = 0.0;
            }
            g.opacity = op;
            g.semantic_feature.assign(last_final.row(i).begin(), last_final.row(i).end());
        }
        return s;
    }

    std::vector<double> evaluate() const {
        std::vector<double> out;
        if (cams.held_out.empty()) {
            return out;
        }
        const scene::Scene s = materialize();
        for (std::size_t v : cams.held_out) {
            const splat::RenderTarget rt = splat::render(s, cams.all[v]);
            out.push_back(splat::psnr(rt.color, target_img[v]));
        }
        return out;
    }

    std::array<double, 4> active_fraction() const {
        std::array<double, 4> f{1.0, 1.0, 1.0, 1.0};
        const std::size_t n = geo.size();
        if (n == 0) {
            return f;
        }
        for (std::size_t l = 0; l < 4; ++l) {
            double active = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double a = sh_kept(i, l);
                if (cfg.sh_prune.enabled) {
                    a *= state.sh_binary(i, l);
                }
                active += a;
            }
            f[l] = active / static_cast<double>(n);
        }
        return f;
    }

    std::vector<double> feature_fd_signal() {
        std::vector<double> best(geo.size(), 0.0);
        for (std::size_t v : cams.train) {
            ensure_cache(v);
            const ViewCache& c = caches[v];
            if (c.regions.empty()) {
                continue;
            }
            const DenseMatrix e = encodings(c).value();
            const auto mags = adapt::feature_gradient_magnitudes(geo, c.regions, e, gate, fsem.value(), cfg.tau_prop,
                                                                 cfg.densify.fd_step);
            for (std::size_t i = 0; i < best.size(); ++i) {
                best[i] = std::max(best[i], mags[i]);
            }
        }
        return best;
    }

    DenseMatrix final_epoch_descriptors() {
        std::vector<double> data;
        std::size_t rows = 0;
        for (std::size_t v : cams.train) {
            ensure_cache(v);
            for (const auto& d : caches[v].descriptors) {
                data.insert(data.end(), d.data().begin(), d.data().end());
                rows += d.rows();
            }
        }
        return DenseMatrix(rows, q, std::move(data));
    }

    std::vector<transfer::BasisUpdateRecord> update_bases(const std::string& scene_id) {
        std::vector<transfer::BasisUpdateRecord> out;
        const DenseMatrix desc = final_epoch_descriptors();
        if (desc.rows() == 0) {
            return out;
        }
        for (const auto& name : tracked_names()) {
            const DenseMatrix w = tracked_param(name).value();
            auto it = bases.find(name);
            if (it == bases.end()) {
                it = bases.emplace(name, transfer::PatternBasis::empty(w.rows())).first;
            }
            out.push_back(transfer::maybe_update_basis(w, it->second, desc, cfg.transfer.cks, scene_id + ":" + name));
        }
        return out;
    }

    // Applies SH masks, removes pruned Gaussians and inserts densified ones.
    adapt::AdaptationEvent commit(bool last, const TrainHooks& hooks, double l_mask, double l_sh) {
        adapt::AdaptationEvent ev;
        ev.iteration = iteration;
        ev.l_mask = l_mask;
        ev.l_sh = l_sh;
        const std::size_t n = geo.size();

        if (cfg.sh_prune.enabled) {
            DenseMatrix& coeffs = sh.mutable_value();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t l = 0; l < 4; ++l) {
                    const bool keep = state.sh_binary(i, l) >= 0.5;
                    sh_kept(i, l) = keep ? 1.0 : 0.0;
                    if (!keep) {
                        ++ev.sh_zeroed_per_degree[l];
                        for (std::size_t k = scene::sh_offset(static_cast<int>(l));
                             k < scene::sh_offset(static_cast<int>(l) + 1); ++k) {
                            for (int ch = 0; ch < 3; ++ch) {
                                coeffs(i, 3 * k + ch) = 0.0;
                            }
                        }
                    }
                }
            }
        }

        // The renderer needs a non-empty scene: if every mask is off, the
        // Gaussian with the largest soft mask survives.
        std::size_t spared = n;
        if (cfg.prune.enabled && n > 0 &&
            std::none_of(state.binary_mask.begin(), state.binary_mask.end(), [](char b) { return b != 0; })) {
            spared = static_cast<std::size_t>(
                std::max_element(state.soft_mask.begin(), state.soft_mask.end()) - state.soft_mask.begin());
        }
        std::vector<long> copy_rows;
        std::vector<long> moment_rows;
        for (std::size_t i = 0; i < n; ++i) {
            if (!cfg.prune.enabled || state.binary_mask[i] || i == spared) {
                copy_rows.push_back(static_cast<long>(i));
                moment_rows.push_back(static_cast<long>(i));
            } else {
                ++ev.pruned;
            }
        }

        std::vector<scene::SemanticGaussian> added;
        if (cfg.densify.enabled && !last) {
            const std::vector<double> signal =
                cfg.densify.grad_source == GradSource::Render ? state.grad_accum.mean() : feature_fd_signal();
            std::set<std::size_t> seen;
            std::vector<scene::LocalRegion> regions;
            for (std::size_t v : cams.train) {
                ensure_cache(v);
                for (const auto& r : caches[v].regions) {
                    if (seen.insert(r.center_index).second) {
                        regions.push_back(r);
                    }
                }
            }
            for (const auto& region : regions) {
                const std::uint64_t seed = mix(cfg.seed ^ mix(iteration) ^ mix(region.center_index + 0x9e37));
                const adapt::DensifyResult res =
                    adapt::densify_region(geo, region, signal, cfg.densify.params, seed);
                if (!res.triggered || res.added.empty()) {
                    continue;
                }
                if (hooks.on_densify) {
                    hooks.on_densify(geo, region, res);
                }
                for (std::size_t k = 0; k < res.added.size(); ++k) {
                    added.push_back(res.added[k]);
                    copy_rows.push_back(static_cast<long>(res.sources[k]));
                    moment_rows.push_back(-1);
                }
            }
        }
        ev.added = added.size();

        if (ev.pruned > 0 || ev.added > 0) {
            std::vector<scene::SemanticGaussian> next;
            next.reserve(copy_rows.size());
            std::size_t a = 0;
            for (std::size_t i = 0; i < copy_rows.size(); ++i) {
                if (moment_rows[i] >= 0) {
                    next.push_back(geo.gaussians[static_cast<std::size_t>(copy_rows[i])]);
                } else {
                    next.push_back(added[a++]);
                }
            }
            geo.gaussians = std::move(next);

            sh.mutable_value() = remap_rows(sh.value(), copy_rows);
            opacity_logit.mutable_value() = remap_rows(opacity_logit.value(), copy_rows);
            fsem.mutable_value() = remap_rows(fsem.value(), copy_rows);
            state.remap(copy_rows, cfg.prune.phi_init, cfg.sh_prune.psi_init);
            for (const Var* p : {&sh, &opacity_logit, &fsem, &state.phi, &state.psi}) {
                p->node()->grad_ready = false;
                if (optimizer.contains(*p)) {
                    optimizer.remap_rows(*p, moment_rows);
                }
            }
            sh_kept = remap_rows(sh_kept, copy_rows, 1.0);
            last_final = remap_rows(last_final, copy_rows);
            std::vector<int> g;
            for (long s : copy_rows) {
                g.push_back(groups[static_cast<std::size_t>(s)]);
            }
            groups = std::move(g);
        }
        state.grad_accum.reset(geo.size());
        invalidate(ev.pruned > 0 || ev.added > 0);
        return ev;
    }

    numerics::Adam optimizer;

    void setup_scene(const SyntheticScene& s) {
        geo = s.init;
        if (geo.size() == 0) {
            throw ValueError("training scene is empty");
        }
        const std::size_t n = geo.size();
        DenseMatrix shm(n, 3 * scene::kShCoeffs);
        DenseMatrix op(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < scene::kShCoeffs; ++k) {
                for (int ch = 0; ch < 3; ++ch) {
                    shm(i, 3 * k + ch) = geo.gaussians[i].sh[k][ch];
                }
            }
            op(i, 0) = logit(geo.gaussians[i].opacity);
        }
        std::mt19937_64 rng(mix(cfg.seed ^ 0x6 ^ mix(scene_index)));
        std::normal_distribution<double> nd(0.0, 0.01);
        DenseMatrix fs(n, df);
        for (auto& v : fs.data()) {
            v = nd(rng);
        }
        sh = Var::parameter(shm, "sh");
        opacity_logit = Var::parameter(op, "opacity_logit");
        fsem = Var::parameter(fs, "f_sem");
        state = adapt::AdaptationState::init(n, cfg.prune.phi_init, cfg.sh_prune.psi_init);
        groups = s.init_groups;
        groups.resize(n, static_cast<int>(Group::Plain));
        sh_kept = DenseMatrix(n, 4, 1.0);
        last_final = fs;

        cams = make_cameras(cfg, s.orbit);
        caches.assign(cams.all.size(), ViewCache{});
        target_rgb.clear();
        target_sem.clear();
        target_img.clear();
        for (const auto& cam : cams.all) {
            const splat::RenderTarget rt = splat::render(s.truth, cam);
            target_img.push_back(rt.color);
            target_rgb.push_back(image_matrix(rt.color));
            target_sem.push_back(image_matrix(rt.semantic));
        }

        const auto& tc = cfg.train;
        optimizer = numerics::Adam{};
        auto group = [&](const std::string& name, std::vector<Var> params, double lr) {
            if (lr > 0.0 && !params.empty()) {
                optimizer.add_group(name, std::move(params), lr);
            }
        };
        auto collect = [](auto const& net) {
            numerics::NamedParams np;
            net.collect(np);
            std::vector<Var> v;
            for (auto& [name, p] : np) {
                v.push_back(p);
            }
            return v;
        };
        group("sh", {sh}, tc.lr_sh);
        group("opacity", {opacity_logit}, tc.lr_opacity);
        group("semantic", {fsem}, tc.lr_semantic);
        group("encoder", enc.parameters(), tc.lr_encoder);
        group("gate", collect(gate), tc.lr_gate);
        if (cfg.prune.enabled) {
            group("phi", {state.phi}, tc.lr_phi);
            group("prune_net", collect(prune_net), tc.lr_prune_net);
        }
        if (cfg.sh_prune.enabled) {
            group("psi", {state.psi}, tc.lr_psi);
            group("sh_net", collect(sh_net), tc.lr_sh_net);
        }
        if (cfg.transfer.enabled) {
            group("modulation", collect(mod), tc.lr_modulation);
        }
    }
};

Trainer::Trainer(PipelineConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
Trainer::~Trainer() = default;

const transfer::BasisStore& Trainer::bases() const { return impl_->bases; }
void Trainer::set_bases(transfer::BasisStore store) { impl_->bases = std::move(store); }
const encode::EncoderWeights& Trainer::encoder() const { return impl_->enc; }
encode::EncoderWeights& Trainer::encoder() { return impl_->enc; }
std::size_t Trainer::iterations_done() const { return impl_->iteration; }
const PipelineConfig& Trainer::config() const { return impl_->cfg; }

SceneResult Trainer::train_scene(const SyntheticScene& s, const TrainHooks& hooks) {
    Impl& m = *impl_;
    const auto& cfg = m.cfg;
    m.setup_scene(s);
    const std::size_t initial = m.geo.size();
    const std::size_t iters = cfg.train.iterations;
    const std::size_t df = m.df;
    const transfer::BasisStore frozen = m.bases;

    SceneResult result;
    result.summary.scene_id = s.id;
    result.summary.iterations = iters;
    result.summary.initial_count = initial;

    std::mt19937_64 order_rng(mix(cfg.seed ^ 0x7 ^ mix(m.scene_index)));
    std::vector<std::size_t> order = m.cams.train;
    std::size_t pos = order.size();
    const auto start = std::chrono::steady_clock::now();

    for (std::size_t t = 0; t < iters; ++t) {
        if (pos == order.size()) {
            order = m.cams.train;
            std::shuffle(order.begin(), order.end(), order_rng);
            pos = 0;
        }
        const std::size_t v = order[pos++];
        m.ensure_cache(v);
        const ViewCache& c = m.caches[v];
        const std::size_t n = m.geo.size();

        const Var opacity = ad::sigmoid(m.opacity_logit);
        Var shape;
        if (!c.regions.empty()) {
            shape = encode::propagate(m.encodings(c), c.plan);
        } else {
            shape = Var::constant(DenseMatrix(n, m.enc.config.model_dim, 0.0));
        }
        const encode::FusedFeature fused = encode::gated_fuse(shape, m.fsem, m.gate, &c.plan.covered);

        adapt::LossTerms terms;
        Var op_eff = opacity;
        adapt::PruneResult pr;
        if (cfg.prune.enabled) {
            pr = adapt::prune_mask(fused.final, m.state.phi, m.prune_net, cfg.prune.tau);
            op_eff = ad::mul(opacity, pr.binary);
            terms.mask = pr.loss;
        }
        Var masks;
        adapt::ShPruneResult shr;
        if (cfg.sh_prune.enabled) {
            shr = adapt::sh_prune(fused.final, m.state.psi, m.sh, c.hist, m.sh_net, cfg.sh_prune.tau);
            // Blocks zeroed at an earlier commit stay off.
            masks = ad::mul(shr.binary, Var::constant(m.sh_kept));
            terms.sh = shr.loss;
        } else {
            masks = Var::constant(DenseMatrix(n, 4, 1.0));
        }
        const Var colors = splat::sh_colors(m.sh, masks, c.basis);
        const splat::RenderNode node = splat::render_ad(c.projected, colors, fused.final, op_eff, m.cams.all[v]);
        const Var rgb = ad::slice_cols(node.output, 0, 3);
        const Var feat = ad::slice_cols(node.output, 3, 3 + df);
        terms.render = ad::mean(ad::square(ad::sub(rgb, Var::constant(m.target_rgb[v]))));
        terms.semantic = ad::mean(ad::abs(ad::sub(feat, Var::constant(m.target_sem[v]))));

        if (cfg.transfer.enabled && !c.regions.empty()) {
            const Var zbar = m.mean_token(c);
            Var reg;
            for (const auto& name : m.tracked_names()) {
                const auto it = frozen.find(name);
                if (it == frozen.end() || it->second.rank() == 0) {
                    continue;
                }
                const Var term = transfer::reg_loss(m.tracked_param(name), it->second, zbar, m.mod);
                reg = reg.valid() ? ad::add(reg, term) : term;
            }
            terms.reg = reg;
        }
        const Var total = adapt::adaptation_losses(terms, cfg.loss);

        m.optimizer.zero_grad();
        numerics::backward(total);
        m.optimizer.step();

        if (node.last_gradients) {
            const auto& g = *node.last_gradients;
            for (std::size_t i = 0; i < n; ++i) {
                if (g.visible[i]) {
                    m.state.grad_accum.add(i, g.d_mean2d[i].norm());
                }
            }
        }
        m.last_final = fused.final.value();
        if (cfg.prune.enabled) {
            const DenseMatrix& soft = pr.soft.value();
            const DenseMatrix& bin = pr.binary.value();
            for (std::size_t i = 0; i < n; ++i) {
                m.state.soft_mask[i] = soft(i, 0);
                m.state.binary_mask[i] = bin(i, 0) >= 0.5 ? 1 : 0;
            }
        }
        if (cfg.sh_prune.enabled) {
            m.state.sh_soft = shr.soft.value();
            m.state.sh_binary = shr.binary.value();
        }

        ++m.iteration;
        MetricsRecord rec;
        rec.iteration = m.iteration;
        rec.scene_id = s.id;
        rec.l_render = terms.render.item();
        rec.l_semantic = terms.semantic.item();
        rec.l_mask = terms.mask.valid() ? terms.mask.item() : 0.0;
        rec.l_sh = terms.sh.valid() ? terms.sh.item() : 0.0;
        rec.l_reg = terms.reg.valid() ? terms.reg.item() : 0.0;
        rec.total = total.item();

        const bool last = t + 1 == iters;
        if ((t + 1) % cfg.train.adapt_interval == 0 || last) {
            if (cfg.prune.enabled || cfg.sh_prune.enabled || cfg.densify.enabled) {
                const adapt::AdaptationEvent ev = m.commit(last, hooks, rec.l_mask, rec.l_sh);
                result.summary.pruned += ev.pruned;
                result.summary.added += ev.added;
                result.events.push_back(ev);
                if (hooks.on_event) {
                    hooks.on_event(ev);
                }
            }
        }
        if (cfg.transfer.enabled && cfg.transfer.update_every > 0 && (t + 1) % cfg.transfer.update_every == 0 &&
            !last) {
            for (auto& r : m.update_bases(s.id)) {
                result.basis_updates.push_back(r);
            }
        }
        rec.gaussian_count = m.geo.size();
        rec.sh_active_fraction = m.active_fraction();
        if ((cfg.train.eval_interval > 0 && (t + 1) % cfg.train.eval_interval == 0) || last) {
            const auto per_view = m.evaluate();
            if (!per_view.empty()) {
                rec.psnr = mean_psnr(per_view);
            }
            if (last) {
                result.heldout_psnr = per_view;
            }
        }
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.records.push_back(rec);
        if (hooks.on_record) {
            hooks.on_record(rec);
        }
    }

    if (iters == 0) {
        result.heldout_psnr = m.evaluate();
    }
    if (cfg.transfer.enabled) {
        for (auto& r : m.update_bases(s.id)) {
            result.basis_updates.push_back(r);
        }
    }

    auto& sum = result.summary;
    sum.gaussian_count = m.geo.size();
    if (!result.heldout_psnr.empty()) {
        sum.psnr = mean_psnr(result.heldout_psnr);
    }
    const std::size_t window = std::max<std::size_t>(1, iters / 4);
    if (!result.records.empty()) {
        double lr = 0.0;
        double ls = 0.0;
        const std::size_t from = result.records.size() - std::min(window, result.records.size());
        for (std::size_t i = from; i < result.records.size(); ++i) {
            lr += result.records[i].l_render;
            ls += result.records[i].l_semantic;
        }
        const double cnt = static_cast<double>(result.records.size() - from);
        sum.l_render = lr / cnt;
        sum.l_semantic = ls / cnt;
    }
    sum.sh_active_fraction = m.active_fraction();
    sum.basis_updates = static_cast<std::size_t>(
        std::count_if(result.basis_updates.begin(), result.basis_updates.end(), [](const auto& r) { return r.updated; }));
    result.learned = m.materialize();
    result.groups = m.groups;
    result.sh_kept = m.sh_kept;
    ++m.scene_index;
    return result;
}

} // namespace anisogauss::pipeline
