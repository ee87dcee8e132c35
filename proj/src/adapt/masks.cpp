// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/adapt/masks.hpp"

#include "anisogauss/errors.hpp"

#include "json.hpp"

#include <cmath>
#include <ostream>
#include <random>

namespace anisogauss::adapt {

namespace ad = numerics::ad;

namespace {

std::size_t degree_begin(int l) { return 3 * scene::sh_offset(l); }
std::size_t degree_end(int l) { return 3 * scene::sh_offset(l + 1); }

Var mlp_h(const ShPruneNet& net, int l, const Var& h) {
    return net.hist2[static_cast<std::size_t>(l)](ad::gelu(net.hist1[static_cast<std::size_t>(l)](h)));
}

} // namespace

AdaptationState AdaptationState::init(std::size_t n, double phi0, double psi0) {
    AdaptationState s;
    s.phi = Var::parameter(DenseMatrix(n, 1, phi0), "phi");
    s.psi = Var::parameter(DenseMatrix(n, 4, psi0), "psi");
    s.grad_accum = splat::GradientAccumulator(n);
    s.soft_mask.assign(n, 1.0);
    s.binary_mask.assign(n, 1);
    s.sh_soft = DenseMatrix(n, 4, 1.0);
    s.sh_binary = DenseMatrix(n, 4, 1.0);
    return s;
}

void AdaptationState::remap(const std::vector<long>& source_rows, double phi0, double psi0) {
    const std::size_t n = source_rows.size();
    DenseMatrix phi_new(n, 1, phi0);
    DenseMatrix psi_new(n, 4, psi0);
    std::vector<double> soft(n, 1.0);
    std::vector<char> bin(n, 1);
    DenseMatrix sh_s(n, 4, 1.0);
    DenseMatrix sh_b(n, 4, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const long s = source_rows[i];
        if (s < 0) {
            continue;
        }
        const auto r = static_cast<std::size_t>(s);
        phi_new(i, 0) = phi.value()(r, 0);
        for (std::size_t l = 0; l < 4; ++l) {
            psi_new(i, l) = psi.value()(r, l);
            sh_s(i, l) = sh_soft(r, l);
            sh_b(i, l) = sh_binary(r, l);
        }
        soft[i] = soft_mask[r];
        bin[i] = binary_mask[r];
    }
    phi.mutable_value() = std::move(phi_new);
    psi.mutable_value() = std::move(psi_new);
    phi.zero_grad();
    psi.zero_grad();
    soft_mask = std::move(soft);
    binary_mask = std::move(bin);
    sh_soft = std::move(sh_s);
    sh_binary = std::move(sh_b);
    grad_accum.remap(source_rows);
}

PruneNet PruneNet::init(std::size_t feature_dim, std::uint64_t seed, double out_bias) {
    std::mt19937_64 rng(seed);
    PruneNet net;
    const std::size_t u = feature_dim + 1;
    net.gate = numerics::Linear::xavier(feature_dim, feature_dim, rng, "prune.gate");
    net.hidden = numerics::Linear::xavier(u, u, rng, "prune.hidden");
    net.out = numerics::Linear::xavier(u, 1, rng, "prune.out");
    DenseMatrix& wh = net.hidden.weight.mutable_value();
    for (std::size_t c = 0; c < u; ++c) {
        wh(feature_dim, c) = 0.0;
    }
    net.out.weight.mutable_value()(feature_dim, 0) = 1.0;
    net.out.bias.mutable_value().fill(out_bias);
    return net;
}

void PruneNet::collect(numerics::NamedParams& out) const {
    gate.collect(out);
    hidden.collect(out);
    this->out.collect(out);
}

PruneResult prune_mask(const Var& fused, const Var& phi, const PruneNet& net, double tau_prune) {
    if (fused.cols() != net.gate.in_dim() || phi.cols() != 1 || phi.rows() != fused.rows()) {
        throw DimensionError("prune_mask: expected fused N x d and phi N x 1");
    }
    const Var gated = ad::mul(fused, ad::sigmoid(net.gate(fused)));
    const Var u = ad::concat_cols({gated, phi});
    const Var h = ad::mul(u, ad::sigmoid(net.hidden(u)));
    PruneResult r;
    r.soft = ad::sigmoid(net.out(h));
    r.binary = ad::ste_threshold(r.soft, tau_prune);
    r.loss = ad::mean(r.soft);
    return r;
}

ShPruneNet ShPruneNet::init(std::size_t feature_dim, std::size_t bins, std::size_t hist_hidden,
                            std::size_t embed_dim, std::uint64_t seed, double mask_bias) {
    std::mt19937_64 rng(seed);
    ShPruneNet net;
    net.bins = bins;
    for (std::size_t l = 0; l < 4; ++l) {
        const std::string p = "sh_prune.l" + std::to_string(l) + ".";
        net.hist1[l] = numerics::Linear::xavier(bins, hist_hidden, rng, p + "hist1");
        net.hist2[l] = numerics::Linear::xavier(hist_hidden, embed_dim, rng, p + "hist2");
        net.mask[l] = numerics::Linear::xavier(feature_dim + 1 + embed_dim, 1, rng, p + "mask");
        net.mask[l].weight.mutable_value()(feature_dim, 0) = 1.0;
        net.mask[l].bias.mutable_value().fill(mask_bias);
    }
    return net;
}

void ShPruneNet::collect(numerics::NamedParams& out) const {
    for (std::size_t l = 0; l < 4; ++l) {
        hist1[l].collect(out);
        hist2[l].collect(out);
        mask[l].collect(out);
    }
}

HistogramPlan build_histogram_plan(const DenseMatrix& sh, std::span<const scene::LocalRegion> regions,
                                   const encode::PropagationPlan& propagation, std::size_t bins) {
    if (sh.cols() != 3 * scene::kShCoeffs || propagation.weights.rows() != sh.rows() ||
        propagation.weights.cols() != regions.size()) {
        throw DimensionError("build_histogram_plan: SH matrix and propagation plan disagree");
    }
    HistogramPlan plan;
    for (const auto& r : regions) {
        plan.region_members.push_back(r.member_indices);
    }
    plan.weights = propagation.weights;
    plan.uncovered = DenseMatrix(sh.rows(), 1);
    for (std::size_t i = 0; i < sh.rows(); ++i) {
        plan.uncovered(i, 0) = 1.0 - propagation.covered(i, 0);
    }
    for (int l = 0; l < 4; ++l) {
        std::vector<double> all;
        all.reserve(sh.rows() * (degree_end(l) - degree_begin(l)));
        for (std::size_t i = 0; i < sh.rows(); ++i) {
            for (std::size_t c = degree_begin(l); c < degree_end(l); ++c) {
                all.push_back(sh(i, c));
            }
        }
        const auto [lo, hi] = padded_range(all);
        const auto li = static_cast<std::size_t>(l);
        plan.lo[li] = lo;
        plan.hi[li] = hi;
        plan.gamma[li] = default_gamma(lo, hi, bins);
        const SoftHistogram h = soft_histogram(all, lo, hi, bins, plan.gamma[li]);
        plan.scene_hist[li] = DenseMatrix(1, bins);
        for (std::size_t b = 0; b < bins; ++b) {
            plan.scene_hist[li](0, b) = all.empty() ? 0.0 : h.counts[b] / static_cast<double>(all.size());
        }
    }
    return plan;
}

Var degree_samples(const Var& sh, int degree, const std::vector<std::size_t>& rows) {
    return ad::slice_cols(ad::gather_rows(sh, rows), degree_begin(degree), degree_end(degree));
}

Var histogram_embedding(const Var& sh, int degree, const HistogramPlan& plan, const ShPruneNet& net) {
    const auto l = static_cast<std::size_t>(degree);
    const Var gamma = Var::scalar(plan.gamma[l]);
    const Var scene_eta = mlp_h(net, degree, Var::constant(plan.scene_hist[l]));
    Var eta = ad::matmul(Var::constant(plan.uncovered), scene_eta);
    if (plan.region_members.empty()) {
        return eta;
    }
    std::vector<Var> rows;
    rows.reserve(plan.region_members.size());
    for (const auto& members : plan.region_members) {
        const Var samples = degree_samples(sh, degree, members);
        const double count = static_cast<double>(samples.rows() * samples.cols());
        const Var h = soft_histogram(samples, plan.lo[l], plan.hi[l], net.bins, gamma);
        rows.push_back(ad::scale(h, 1.0 / count));
    }
    const Var region_eta = mlp_h(net, degree, ad::concat_rows(rows));
    return ad::add(eta, ad::matmul(Var::constant(plan.weights), region_eta));
}

ShPruneResult sh_prune_with_embeddings(const Var& fused, const Var& psi, const std::array<Var, 4>& eta,
                                       const ShPruneNet& net, const std::array<double, 4>& tau) {
    const std::size_t n = fused.rows();
    if (psi.rows() != n || psi.cols() != 4 || fused.cols() + 1 + net.embed_dim() != net.mask[0].in_dim()) {
        throw DimensionError("sh_prune: expected fused N x d, psi N x 4 and matching mask nets");
    }
    std::vector<Var> soft;
    std::vector<Var> binary;
    for (std::size_t l = 0; l < 4; ++l) {
        if (eta[l].rows() != n || eta[l].cols() != net.embed_dim()) {
            throw DimensionError("sh_prune: histogram embedding has the wrong shape");
        }
        const Var v = ad::concat_cols({fused, ad::slice_cols(psi, l, l + 1), eta[l]});
        const Var d = ad::sigmoid(net.mask[l](v));
        soft.push_back(d);
        binary.push_back(ad::ste_threshold(d, tau[l]));
    }
    ShPruneResult r;
    r.soft = ad::concat_cols(soft);
    r.binary = ad::concat_cols(binary);
    const Var w = Var::constant(DenseMatrix{{1.0, 3.0, 5.0, 7.0}});
    r.loss = ad::scale(ad::sum(ad::mul_row(r.soft, w)), 1.0 / static_cast<double>(n));
    return r;
}

ShPruneResult sh_prune(const Var& fused, const Var& psi, const Var& sh, const HistogramPlan& plan,
                       const ShPruneNet& net, const std::array<double, 4>& tau) {
    if (sh.rows() != fused.rows() || sh.cols() != 3 * scene::kShCoeffs || plan.weights.rows() != sh.rows()) {
        throw DimensionError("sh_prune: SH matrix must be N x 48 and match the plan");
    }
    std::array<Var, 4> eta;
    for (int l = 0; l < 4; ++l) {
        eta[static_cast<std::size_t>(l)] = histogram_embedding(sh, l, plan, net);
    }
    return sh_prune_with_embeddings(fused, psi, eta, net, tau);
}

Var adaptation_losses(const LossTerms& terms, const LossWeights& weights) {
    Var total = Var::scalar(0.0);
    const std::pair<const Var*, double> parts[] = {{&terms.render, weights.render},
                                                   {&terms.semantic, weights.semantic},
                                                   {&terms.mask, weights.mask},
                                                   {&terms.sh, weights.sh},
                                                   {&terms.reg, weights.reg}};
    for (const auto& [v, w] : parts) {
        if (!v->valid()) {
            continue;
        }
        if (v->rows() != 1 || v->cols() != 1) {
            throw DimensionError("adaptation_losses: every term must be a scalar");
        }
        if (!std::isfinite(v->item()) || !std::isfinite(w)) {
            throw NonFiniteError("adaptation_losses: non-finite loss term");
        }
        total = ad::add(total, ad::scale(*v, w));
    }
    return total;
}

std::size_t apply_prune_mask(scene::Scene& scene, std::span<const char> keep) {
    if (keep.size() != scene.size()) {
        throw DimensionError("apply_prune_mask: one mask entry per Gaussian expected");
    }
    std::size_t masked = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) {
            scene.gaussians[i].opacity = 0.0;
            ++masked;
        }
    }
    return masked;
}

std::vector<long> remove_masked(scene::Scene& scene, std::span<const char> keep) {
    if (keep.size() != scene.size()) {
        throw DimensionError("remove_masked: one mask entry per Gaussian expected");
    }
    std::vector<long> source;
    std::vector<scene::SemanticGaussian> kept;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i]) {
            source.push_back(static_cast<long>(i));
            kept.push_back(std::move(scene.gaussians[i]));
        }
    }
    scene.gaussians = std::move(kept);
    return source;
}

std::array<std::size_t, 4> apply_sh_masks(scene::Scene& scene, const DenseMatrix& binary) {
    if (binary.rows() != scene.size() || binary.cols() != 4) {
        throw DimensionError("apply_sh_masks: expected N x 4 masks");
    }
    std::array<std::size_t, 4> zeroed{};
    for (std::size_t i = 0; i < scene.size(); ++i) {
        for (int l = 0; l < 4; ++l) {
            if (binary(i, static_cast<std::size_t>(l)) != 0.0) {
                continue;
            }
            ++zeroed[static_cast<std::size_t>(l)];
            for (std::size_t k = scene::sh_offset(l); k < scene::sh_offset(l + 1); ++k) {
                scene.gaussians[i].sh[k] = {0.0, 0.0, 0.0};
            }
        }
    }
    return zeroed;
}

void write_adaptation_event(std::ostream& os, const AdaptationEvent& event) {
    nlohmann::ordered_json j;
    j["iteration"] = event.iteration;
    j["pruned"] = event.pruned;
    j["added"] = event.added;
    j["sh_zeroed_per_degree"] = event.sh_zeroed_per_degree;
    j["L_mask"] = event.l_mask;
    j["L_SH"] = event.l_sh;
    os << j.dump() << '\n';
}

} // namespace anisogauss::adapt
