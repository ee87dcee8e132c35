// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/adapt/densify.hpp"
#include "anisogauss/adapt/masks.hpp"
#include "anisogauss/errors.hpp"
#include "anisogauss/scene/geometry.hpp"
#include "test_util.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace {

using namespace anisogauss;
using namespace anisogauss::adapt;
namespace ad = numerics::ad;
using scene::Vec3;

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---------------------------------------------------------------- histogram

TEST(SoftHistogram, BinCenterExample) {
    // Δ = 1, γ = 4 so γΔ/2 = 2.
    const std::vector<double> x{2.5};
    const SoftHistogram h = soft_histogram(x, 0.0, 4.0, 4, 4.0);
    EXPECT_NEAR(h.counts[2], 2.0 * logistic(2.0) - 1.0, 1e-15);
    EXPECT_NEAR(h.counts[2], 0.7616, 5e-5);
    EXPECT_DOUBLE_EQ(h.delta, 1.0);
}

TEST(SoftHistogram, SharpLimitMatchesHardHistogram) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 16.0);
    const double delta = 1.0;
    std::vector<double> x;
    while (x.size() < 500) {
        const double v = u(rng);
        const double frac = v - std::floor(v);
        if (frac >= delta / 10.0 && frac <= 1.0 - delta / 10.0) {
            x.push_back(v);
        }
    }
    const SoftHistogram h = soft_histogram(x, 0.0, 16.0, 16, 1e4);
    std::vector<double> hard(16, 0.0);
    for (double v : x) {
        hard[static_cast<std::size_t>(v)] += 1.0;
    }
    for (std::size_t b = 0; b < 16; ++b) {
        EXPECT_NEAR(h.counts[b], hard[b], 1e-3);
    }
}

TEST(SoftHistogram, TelescopingIdentity) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 3.0);
    for (double gamma : {0.5, 7.0, 60.0, 1e4}) {
        for (int t = 0; t < 200; ++t) {
            const double x = u(rng);
            const std::vector<double> one{x};
            const SoftHistogram h = soft_histogram(one, 0.0, 2.0, 9, gamma);
            double total = 0.0;
            for (double c : h.counts) {
                EXPECT_GE(c, 0.0);
                total += c;
            }
            EXPECT_NEAR(total, logistic(gamma * x) - logistic(gamma * (x - 2.0)), 1e-12);
        }
    }
}

TEST(SoftHistogram, EmptyAndErrors) {
    const std::vector<double> none;
    const SoftHistogram h = soft_histogram(none, 0.0, 1.0, 5, 3.0);
    EXPECT_EQ(h.counts, std::vector<double>(5, 0.0));
    EXPECT_THROW(soft_histogram(none, 0.0, 1.0, 0, 3.0), RangeError);
    EXPECT_THROW(soft_histogram(none, 0.0, 1.0, 5, 0.0), RangeError);
    EXPECT_THROW(soft_histogram(none, 1.0, 1.0, 5, 3.0), RangeError);
}

TEST(SoftHistogram, TotalMassBound) {
    std::mt19937_64 rng(3);
    const DenseMatrix x = testutil::random_matrix(40, 3, rng, -2.0, 2.0);
    const SoftHistogram h = soft_histogram(x.data(), -1.0, 1.0, 8, 20.0);
    double total = 0.0;
    for (double c : h.counts) {
        total += c;
    }
    EXPECT_LE(total, 120.0 + 1e-6);
}

TEST(SoftHistogram, GradientsInSamplesAndGamma) {
    for (unsigned seed : {4u, 5u, 6u}) {
        std::mt19937_64 rng(seed);
        Var x = Var::parameter(testutil::random_matrix(7, 3, rng, -0.2, 1.2));
        Var gamma = Var::parameter(DenseMatrix(1, 1, 9.0));
        const DenseMatrix w = testutil::random_matrix(1, 6, rng);
        auto loss = [&] { return ad::sum(ad::mul(soft_histogram(x, 0.0, 1.0, 6, gamma), Var::constant(w))); };
        numerics::backward(loss());
        auto f = [&] { return loss().item(); };
        EXPECT_LT(testutil::rel_error(x.grad(), testutil::finite_difference(x, f)), 1e-4);
        EXPECT_LT(testutil::rel_error(gamma.grad(), testutil::finite_difference(gamma, f)), 1e-4);
    }
}

TEST(SoftHistogram, PaddedRange) {
    const std::vector<double> x{1.0, 3.0, 2.0};
    const auto [lo, hi] = padded_range(x);
    EXPECT_DOUBLE_EQ(lo, 0.98);
    EXPECT_DOUBLE_EQ(hi, 3.02);
    const std::vector<double> flat{0.5, 0.5};
    const auto [a, b] = padded_range(flat);
    EXPECT_LT(a, 0.5);
    EXPECT_GT(b, 0.5);
    EXPECT_DOUBLE_EQ(default_gamma(0.0, 2.0, 16), 400.0);
}

// ---------------------------------------------------------------- prune

TEST(PruneMask, SaturatedHighKeepsEverything) {
    std::mt19937_64 rng(10);
    PruneNet net = PruneNet::init(5, 1);
    net.out.weight.mutable_value().fill(0.0);
    net.out.bias.mutable_value().fill(1e3);
    const Var f = Var::constant(testutil::random_matrix(20, 5, rng));
    const Var phi = Var::constant(testutil::random_matrix(20, 1, rng));
    const PruneResult r = prune_mask(f, phi, net, 0.01);
    for (double v : r.binary.value().data()) {
        EXPECT_EQ(v, 1.0);
    }
    EXPECT_DOUBLE_EQ(r.loss.item(), 1.0);
}

TEST(PruneMask, SaturatedLowRemovesEverything) {
    std::mt19937_64 rng(11);
    PruneNet net = PruneNet::init(5, 1);
    net.out.weight.mutable_value().fill(0.0);
    net.out.bias.mutable_value().fill(-1e3);
    const Var f = Var::constant(testutil::random_matrix(20, 5, rng));
    const Var phi = Var::constant(testutil::random_matrix(20, 1, rng));
    const PruneResult r = prune_mask(f, phi, net, 0.01);
    EXPECT_LT(r.loss.item(), 1e-300);
    scene::Scene s;
    s.gaussians.resize(20);
    std::vector<char> keep;
    for (double v : r.binary.value().data()) {
        EXPECT_EQ(v, 0.0);
        keep.push_back(static_cast<char>(v != 0.0));
    }
    EXPECT_EQ(apply_prune_mask(s, keep), 20u);
    for (const auto& g : s.gaussians) {
        EXPECT_EQ(g.opacity, 0.0);
    }
    EXPECT_TRUE(remove_masked(s, keep).empty());
    EXPECT_EQ(s.size(), 0u);
}

TEST(PruneMask, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        std::mt19937_64 rng(seed);
        PruneNet net = PruneNet::init(4, seed, 0.5);
        Var f = Var::parameter(testutil::random_matrix(6, 4, rng));
        Var phi = Var::parameter(testutil::random_matrix(6, 1, rng));
        auto loss = [&] { return prune_mask(f, phi, net, 0.01).loss; };
        numerics::backward(loss());
        numerics::NamedParams all;
        net.collect(all);
        all.emplace_back("phi", phi);
        all.emplace_back("fused", f);
        for (auto [name, v] : all) {
            EXPECT_LT(testutil::rel_error(v.grad(), testutil::finite_difference(v, [&] { return loss().item(); })),
                      1e-4)
                << name << " seed " << seed;
        }
    }
}

TEST(PruneMask, StraightThroughGradientsAreBitwiseIdentity) {
    std::mt19937_64 rng(12);
    const PruneNet net = PruneNet::init(4, 7, 0.0);
    const DenseMatrix fv = testutil::random_matrix(9, 4, rng);
    const DenseMatrix w = testutil::random_matrix(9, 1, rng);
    Var phi_a = Var::parameter(testutil::random_matrix(9, 1, rng));
    Var phi_b = Var::parameter(phi_a.value());
    const PruneResult ra = prune_mask(Var::constant(fv), phi_a, net, 0.5);
    numerics::backward(ad::sum(ad::mul(ra.binary, Var::constant(w))));
    const PruneResult rb = prune_mask(Var::constant(fv), phi_b, net, 0.5);
    numerics::backward(ad::sum(ad::mul(rb.soft, Var::constant(w))));
    EXPECT_EQ(phi_a.grad(), phi_b.grad());
    for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_EQ(ra.binary.value()(i, 0), ra.soft.value()(i, 0) >= 0.5 ? 1.0 : 0.0);
    }
}

TEST(PruneMask, LossIsStrictlyMonotoneInEachMask) {
    std::mt19937_64 rng(13);
    const PruneNet net = PruneNet::init(4, 8, 0.0);
    const Var f = Var::constant(testutil::random_matrix(5, 4, rng));
    Var phi = Var::parameter(testutil::random_matrix(5, 1, rng));
    const PruneResult r = prune_mask(f, phi, net, 0.01);
    const double base = r.loss.item();
    for (std::size_t i = 0; i < 5; ++i) {
        // m̂ is a function of φ_i alone for row i; move φ_i in the direction that raises m̂_i.
        const double m0 = r.soft.value()(i, 0);
        for (double step : {1e-3, -1e-3}) {
            Var p = Var::constant(phi.value());
            p.mutable_value()(i, 0) += step;
            const PruneResult s = prune_mask(f, p, net, 0.01);
            const double m1 = s.soft.value()(i, 0);
            if (m1 > m0) {
                EXPECT_GT(s.loss.item(), base);
            } else if (m1 < m0) {
                EXPECT_LT(s.loss.item(), base);
            }
        }
    }
}

TEST(PruneMask, FreshNetIsIncreasingInPhiAndCanCrossTheThreshold) {
    std::mt19937_64 rng(14);
    const PruneNet net = PruneNet::init(4, 9);
    const Var f = Var::constant(testutil::random_matrix(6, 4, rng));
    for (double p : {-60.0, -5.0, 0.0, 5.0, 60.0}) {
        const PruneResult r = prune_mask(f, Var::constant(DenseMatrix(6, 1, p)), net, 0.01);
        for (std::size_t i = 0; i < 6; ++i) {
            if (p == -60.0) {
                EXPECT_EQ(r.binary.value()(i, 0), 0.0);
            }
            if (p == 0.0) {
                EXPECT_EQ(r.binary.value()(i, 0), 1.0);
            }
        }
        Var phi = Var::parameter(DenseMatrix(6, 1, p));
        numerics::backward(prune_mask(f, phi, net, 0.01).loss);
        for (double g : phi.grad().data()) {
            EXPECT_GT(g, 0.0);
        }
    }
}

TEST(PruneMask, DimensionErrors) {
    const PruneNet net = PruneNet::init(4, 8);
    EXPECT_THROW(prune_mask(Var::constant(DenseMatrix(3, 5)), Var::constant(DenseMatrix(3, 1)), net, 0.01),
                 DimensionError);
    EXPECT_THROW(prune_mask(Var::constant(DenseMatrix(3, 4)), Var::constant(DenseMatrix(2, 1)), net, 0.01),
                 DimensionError);
}

scene::Scene random_scene(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    scene::Scene s;
    s.semantic_dim = 2;
    for (std::size_t i = 0; i < n; ++i) {
        scene::SemanticGaussian g;
        g.center = testutil::random_vec(rng);
        g.scale = testutil::random_vec(rng, 0.05, 0.3);
        g.rotation = scene::Quat(testutil::random_rotation(rng));
        g.opacity = 0.3 + 0.6 * u(rng);
        for (auto& c : g.sh) {
            for (auto& v : c) {
                v = 0.5 * (u(rng) - 0.5);
            }
        }
        g.semantic_feature = {u(rng), u(rng)};
        s.gaussians.push_back(g);
    }
    return s;
}

TEST(PruneCommit, MaskedEqualsDeleted) {
    std::mt19937_64 rng(14);
    scene::Scene s = random_scene(40, rng);
    std::vector<char> keep(40, 1);
    for (std::size_t i = 0; i < 40; i += 3) {
        keep[i] = 0;
    }
    const auto cam = scene::Camera::look_at(Vec3(0, 0, -4), Vec3::Zero(), Vec3(0, -1, 0), 32, 32, 0.8, 0.1, 20);
    scene::Scene masked = s;
    apply_prune_mask(masked, keep);
    scene::Scene deleted = s;
    const auto source = remove_masked(deleted, keep);
    EXPECT_EQ(deleted.size(), 40u - 14u);
    EXPECT_EQ(source[0], 1);
    EXPECT_EQ(source[1], 2);
    const auto a = splat::render(masked, cam);
    const auto b = splat::render(deleted, cam);
    for (std::size_t i = 0; i < a.color.data.size(); ++i) {
        EXPECT_NEAR(a.color.data[i], b.color.data[i], 1e-12);
    }
}

// ---------------------------------------------------------------- SH prune

Var sh_matrix(const scene::Scene& s) {
    DenseMatrix m(s.size(), 48);
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t k = 0; k < 16; ++k) {
            for (std::size_t c = 0; c < 3; ++c) {
                m(i, 3 * k + c) = s.gaussians[i].sh[k][c];
            }
        }
    }
    return Var::parameter(m, "sh");
}

struct ShFixture {
    scene::Scene s;
    std::vector<scene::LocalRegion> regions;
    encode::PropagationPlan prop;

    explicit ShFixture(unsigned seed, std::size_t n = 24) {
        std::mt19937_64 rng(seed);
        s = random_scene(n, rng);
        std::vector<std::size_t> domain(n - 3);
        std::iota(domain.begin(), domain.end(), 0);  // last three Gaussians stay uncovered
        for (std::size_t c : {std::size_t{0}, std::size_t{5}, std::size_t{10}}) {
            regions.push_back(scene::neighborhood_query(s, c, 0.8, domain));
        }
        prop = encode::build_propagation(s, regions, 1.0);
    }
};

TEST(ShPrune, SaturationExamples) {
    ShFixture fx(20);
    const std::size_t n = fx.s.size();
    ShPruneNet net = ShPruneNet::init(2, 16, 8, 4, 1);
    const Var sh = sh_matrix(fx.s);
    const HistogramPlan plan = build_histogram_plan(sh.value(), fx.regions, fx.prop);
    const Var f = Var::constant(DenseMatrix(n, 2, 0.3));
    const Var psi = Var::constant(DenseMatrix(n, 4));
    for (auto& m : net.mask) {
        m.weight.mutable_value().fill(0.0);
        m.bias.mutable_value().fill(1e3);
    }
    EXPECT_DOUBLE_EQ(sh_prune(f, psi, sh, plan, net, {0.01, 0.01, 0.01, 0.01}).loss.item(), 16.0);
    for (auto& m : net.mask) {
        m.bias.mutable_value().fill(-1e3);
    }
    const ShPruneResult r = sh_prune(f, psi, sh, plan, net, {0.01, 0.01, 0.01, 0.01});
    EXPECT_LT(r.loss.item(), 1e-300);
    scene::Scene pruned = fx.s;
    const auto zeroed = apply_sh_masks(pruned, r.binary.value());
    for (std::size_t z : zeroed) {
        EXPECT_EQ(z, n);
    }
    for (const auto& g : pruned.gaussians) {
        for (const auto& c : g.sh) {
            EXPECT_EQ(c, (std::array<double, 3>{0, 0, 0}));
        }
    }
    // Colour falls back to the mid-grey base.
    EXPECT_EQ(splat::sh_color(pruned.gaussians[0].sh, Vec3::UnitZ(), 3), Vec3::Constant(0.5));
}

TEST(ShPrune, DegreeZeroMasksEqualDegreeZeroRenderer) {
    std::mt19937_64 rng(21);
    const scene::Scene s = random_scene(50, rng);
    const auto cam = scene::Camera::look_at(Vec3(0, 0, -4), Vec3::Zero(), Vec3(0, -1, 0), 32, 32, 0.8, 0.1, 20);
    const std::vector<splat::DegreeMask> masks(s.size(), splat::DegreeMask{1, 0, 0, 0});
    const auto a = splat::render(s, cam, {3, &masks, false});
    const auto b = splat::render(s, cam, {0, nullptr, false});
    EXPECT_EQ(a.color.data, b.color.data);
}

TEST(ShPrune, GradientsOfEveryTensorMatchFiniteDifferences) {
    for (unsigned seed : {1u, 2u, 3u}) {
        ShFixture fx(30 + seed, 14);
        const std::size_t n = fx.s.size();
        std::mt19937_64 rng(seed);
        ShPruneNet net = ShPruneNet::init(3, 6, 5, 3, seed, 0.2);
        Var sh = sh_matrix(fx.s);
        const HistogramPlan plan = build_histogram_plan(sh.value(), fx.regions, fx.prop, 6);
        Var f = Var::parameter(testutil::random_matrix(n, 3, rng));
        Var psi = Var::parameter(testutil::random_matrix(n, 4, rng));
        auto loss = [&] { return sh_prune(f, psi, sh, plan, net, {0.01, 0.01, 0.01, 0.01}).loss; };
        numerics::backward(loss());
        numerics::NamedParams all;
        net.collect(all);
        all.emplace_back("fused", f);
        all.emplace_back("psi", psi);
        all.emplace_back("sh", sh);
        for (auto [name, v] : all) {
            const DenseMatrix analytic = v.grad();
            const DenseMatrix fd = testutil::finite_difference(v, [&] { return loss().item(); });
            EXPECT_LT(testutil::rel_error(analytic, fd), 1e-4) << name << " seed " << seed;
        }
    }
}

TEST(ShPrune, UncoveredRowsUseSceneHistogram) {
    ShFixture fx(40);
    const std::size_t n = fx.s.size();
    ASSERT_EQ(fx.prop.covered(n - 1, 0), 0.0);
    const ShPruneNet net = ShPruneNet::init(2, 16, 8, 4, 2);
    const Var sh = sh_matrix(fx.s);
    const HistogramPlan plan = build_histogram_plan(sh.value(), fx.regions, fx.prop);
    for (int l = 0; l < 4; ++l) {
        const auto li = static_cast<std::size_t>(l);
        const DenseMatrix eta = histogram_embedding(sh, l, plan, net).value();
        const DenseMatrix expect =
            net.hist2[li](ad::gelu(net.hist1[li](Var::constant(plan.scene_hist[li])))).value();
        for (std::size_t c = 0; c < 4; ++c) {
            EXPECT_NEAR(eta(n - 1, c), expect(0, c), 1e-14);
        }
        double mass = 0.0;
        for (double v : plan.scene_hist[li].data()) {
            mass += v;
        }
        // Extreme samples sit 0.16Δ inside the padded range: each loses at most ς(-8).
        EXPECT_LE(mass, 1.0 + 1e-12);
        EXPECT_GE(mass, 1.0 - 2.0 * logistic(-8.0));
    }
}

TEST(ShPrune, LossIsStrictlyMonotoneInEachDelta) {
    std::mt19937_64 rng(22);
    const ShPruneNet net = ShPruneNet::init(2, 4, 4, 2, 3, 0.0);
    const std::size_t n = 6;
    const Var f = Var::constant(testutil::random_matrix(n, 2, rng));
    std::array<Var, 4> eta;
    for (auto& e : eta) {
        e = Var::constant(testutil::random_matrix(n, 2, rng));
    }
    const DenseMatrix psi0 = testutil::random_matrix(n, 4, rng);
    const auto base = sh_prune_with_embeddings(f, Var::constant(psi0), eta, net, {0.01, 0.01, 0.01, 0.01});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < 4; ++l) {
            DenseMatrix p = psi0;
            const double w = net.mask[l].weight.value()(2, 0);  // ψ column sits after the 2 feature columns
            p(i, l) += w > 0 ? 1e-3 : -1e-3;
            const auto r = sh_prune_with_embeddings(f, Var::constant(p), eta, net, {0.01, 0.01, 0.01, 0.01});
            ASSERT_GT(r.soft.value()(i, l), base.soft.value()(i, l));
            EXPECT_GT(r.loss.item(), base.loss.item());
        }
    }
}

// ---------------------------------------------------------------- densify

scene::LocalRegion whole_region(const scene::Scene& s, std::size_t center, double radius) {
    scene::LocalRegion r;
    r.center_index = center;
    r.radius = radius;
    for (std::size_t i = 0; i < s.size(); ++i) {
        r.member_indices.push_back(i);
    }
    return r;
}

TEST(Densify, BelowThresholdReturnsNothing) {
    std::mt19937_64 rng(50);
    const scene::Scene s = random_scene(10, rng);
    DensifyParams p;
    p.grad_threshold = 1.0;
    const std::vector<double> g(10, 0.5);
    const auto r = densify_region(s, whole_region(s, 0, 1.0), g, p, 1);
    EXPECT_FALSE(r.triggered);
    EXPECT_TRUE(r.added.empty());
}

TEST(Densify, CandidateCountArithmetic) {
    DensifyParams p;
    p.n_max = 100;
    p.alpha_d = 2.0;
    EXPECT_EQ(candidate_count(p, 50.0, 10), 10u);
    p.n_max = 4;
    EXPECT_EQ(candidate_count(p, 50.0, 10), 4u);
    EXPECT_EQ(candidate_count(p, 50.0, 0), 0u);
}

TEST(Densify, RegionVolumeFloorForFlatRegions) {
    scene::Scene s;
    for (double x : {0.0, 1.0}) {
        for (double y : {0.0, 2.0}) {
            scene::SemanticGaussian g;
            g.center = Vec3(x, y, 0.5);
            s.gaussians.push_back(g);
        }
    }
    EXPECT_DOUBLE_EQ(region_volume(s, whole_region(s, 0, 2.0), 2.0), 8.0 * 1e-3);
    s.gaussians[3].center.z() = 1.5;
    EXPECT_DOUBLE_EQ(region_volume(s, whole_region(s, 0, 2.0), 2.0), 2.0);
}

TEST(Densify, OpenIntervalAcceptsEveryCandidate) {
    std::mt19937_64 rng(51);
    const scene::Scene s = random_scene(15, rng);
    DensifyParams p;
    p.grad_threshold = 0.0;
    p.alpha_d = 1e4;
    p.n_max = 40;
    p.d_min = std::numeric_limits<double>::min();
    p.d_max = std::numeric_limits<double>::infinity();
    const scene::LocalRegion region = whole_region(s, 2, 0.7);
    const std::vector<double> g(15, 1.0);
    const auto r = densify_region(s, region, g, p, 7);
    EXPECT_EQ(r.drawn, 40u);
    ASSERT_EQ(r.added.size(), r.drawn);
    for (std::size_t k = 0; k < r.added.size(); ++k) {
        const auto& a = r.added[k];
        EXPECT_LE((a.center - s.gaussians[2].center).norm(), 0.7 + 1e-12);
        std::size_t nn = 0;
        for (std::size_t i = 1; i < s.size(); ++i) {
            if ((s.gaussians[i].center - a.center).norm() < (s.gaussians[nn].center - a.center).norm()) {
                nn = i;
            }
        }
        EXPECT_EQ(r.sources[k], nn);
        const auto& src = s.gaussians[nn];
        EXPECT_EQ(a.scale, src.scale);
        EXPECT_EQ(a.rotation.coeffs(), src.rotation.coeffs());
        EXPECT_EQ(a.opacity, src.opacity);
        EXPECT_EQ(a.sh, src.sh);
        EXPECT_EQ(a.semantic_feature, src.semantic_feature);
    }
}

TEST(Densify, AcceptedCandidatesRespectContracts) {
    for (unsigned seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(60 + seed);
        const scene::Scene s = random_scene(20, rng);
        DensifyParams p;
        p.grad_threshold = 0.1;
        p.alpha_d = 300.0;
        p.n_max = 25;
        p.d_min = 0.05;
        p.d_max = 0.25;
        const scene::LocalRegion region = whole_region(s, seed % 20, 1.0);
        const std::vector<double> g(20, 0.2);
        const auto r = densify_region(s, region, g, p, seed);
        ASSERT_TRUE(r.triggered);
        EXPECT_EQ(r.drawn, candidate_count(p, region_volume(s, region, 1.0), 20));
        EXPECT_LE(r.added.size(), r.drawn);
        for (const auto& a : r.added) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& o : s.gaussians) {
                best = std::min(best, (o.center - a.center).norm());
            }
            EXPECT_GE(best, p.d_min);
            EXPECT_LE(best, p.d_max);
        }
        // Seeded stream.
        const auto again = densify_region(s, region, g, p, seed);
        ASSERT_EQ(again.added.size(), r.added.size());
        for (std::size_t k = 0; k < r.added.size(); ++k) {
            EXPECT_EQ(again.added[k].center, r.added[k].center);
        }
    }
}

TEST(Densify, ParameterValidation) {
    DensifyParams p;
    p.d_min = 0.2;
    p.d_max = 0.1;
    EXPECT_THROW(p.validate(), ValueError);
    p = {};
    p.n_max = 0;
    EXPECT_THROW(p.validate(), ValueError);
    p = {};
    p.alpha_d = 0.0;
    EXPECT_THROW(p.validate(), ValueError);
}

TEST(Densify, FeatureGradientSource) {
    std::mt19937_64 rng(70);
    const scene::Scene s = random_scene(6, rng);
    const encode::GateWeights gate = encode::GateWeights::init(3, 2, 1);
    const DenseMatrix sem = testutil::random_matrix(6, 2, rng);
    const DenseMatrix enc = testutil::random_matrix(2, 3, rng);
    const std::vector<scene::LocalRegion> regions{{0, {0, 1, 2}, 1.0}, {3, {2, 3}, 1.0}};
    const auto g = feature_gradient_magnitudes(s, regions, enc, gate, sem, 1.0, 1e-4);
    EXPECT_EQ(g[4], 0.0);  // uncovered
    EXPECT_EQ(g[0], 0.0);  // one region: weights are constant
    EXPECT_GT(g[2], 0.0);  // shared by two regions
}

// ---------------------------------------------------------------- losses and log

TEST(AdaptationLosses, Examples) {
    const LossTerms t{Var::scalar(2.0), Var::scalar(3.0), Var::scalar(0.5), Var::scalar(4.0), Var::scalar(1.5)};
    LossWeights only_render{1.0, 0.0, 0.0, 0.0, 0.0};
    EXPECT_EQ(adaptation_losses(t, only_render).item(), 2.0);
    const LossTerms zeros{Var::scalar(0), Var::scalar(0), Var::scalar(0), Var::scalar(0), Var::scalar(0)};
    EXPECT_EQ(adaptation_losses(zeros, LossWeights{}).item(), 0.0);
    const LossWeights w{0.3, 1.1, 2.0, 0.7, 0.9};
    const LossWeights w2{0.6, 2.2, 4.0, 1.4, 1.8};
    EXPECT_NEAR(adaptation_losses(t, w2).item(), 2.0 * adaptation_losses(t, w).item(), 1e-14);
    const LossTerms bad{Var::scalar(std::nan("")), {}, {}, {}, {}};
    EXPECT_THROW(adaptation_losses(bad, LossWeights{}), NonFiniteError);
}

TEST(AdaptationLosses, GradientReachesEveryInput) {
    std::array<Var, 5> leaves;
    for (auto& l : leaves) {
        l = Var::parameter(DenseMatrix(1, 1, 0.5));
    }
    const LossWeights w{0.3, 1.1, 2.0, 0.7, 0.9};
    numerics::backward(adaptation_losses({leaves[0], leaves[1], leaves[2], leaves[3], leaves[4]}, w));
    const double expect[] = {0.3, 1.1, 2.0, 0.7, 0.9};
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(leaves[i].grad()(0, 0), expect[i]);
    }
}

TEST(AdaptationLog, OneJsonObjectPerLine) {
    std::ostringstream os;
    write_adaptation_event(os, {100, 12, 3, {0, 1, 2, 30}, 0.4, 2.5});
    write_adaptation_event(os, {200, 0, 0, {0, 0, 0, 0}, 0.3, 2.0});
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["iteration"], 100);
    EXPECT_EQ(j["pruned"], 12);
    EXPECT_EQ(j["added"], 3);
    EXPECT_EQ(j["sh_zeroed_per_degree"][3], 30);
    EXPECT_EQ(j["L_mask"], 0.4);
    EXPECT_EQ(j["L_SH"], 2.5);
    std::getline(is, line);
    EXPECT_EQ(nlohmann::json::parse(line)["iteration"], 200);
}

TEST(AdaptationState, RemapKeepsSurvivorsAndResetsNewRows) {
    AdaptationState s = AdaptationState::init(4, 0.0, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        s.phi.mutable_value()(i, 0) = static_cast<double>(i);
        s.psi.mutable_value()(i, 2) = 10.0 + static_cast<double>(i);
        s.grad_accum.add(i, static_cast<double>(i + 1));
    }
    s.remap({3, 1, -1}, 7.0, 8.0);
    EXPECT_EQ(s.size(), 3u);
    EXPECT_EQ(s.phi.value()(0, 0), 3.0);
    EXPECT_EQ(s.psi.value()(1, 2), 11.0);
    EXPECT_EQ(s.phi.value()(2, 0), 7.0);
    EXPECT_EQ(s.psi.value()(2, 0), 8.0);
    EXPECT_EQ(s.grad_accum.mean(0), 4.0);
    EXPECT_EQ(s.grad_accum.mean(2), 0.0);
}

} // namespace
