// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/errors.hpp"
#include "anisogauss/numerics/linalg.hpp"
#include "anisogauss/transfer/cks.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace {

using namespace anisogauss;
using namespace anisogauss::transfer;
using numerics::matmul;
using numerics::matmul_tn;
namespace ad = numerics::ad;

PatternBasis random_basis(std::size_t q, std::size_t r, std::mt19937_64& rng) {
    return {numerics::orth(testutil::random_matrix(q, r, rng)), {}};
}

TEST(ProjectCks, MemberOfSpanHasZeroResidual) {
    std::mt19937_64 rng(1);
    const PatternBasis b = random_basis(10, 4, rng);
    const DenseMatrix w = matmul(b.basis, testutil::random_matrix(4, 6, rng));
    const Projection p = project_cks(w, b);
    EXPECT_LT(p.rho, 1e-12);
    EXPECT_LT(numerics::max_abs(p.residual), 1e-12);
}

TEST(ProjectCks, OrthogonalComplementGivesRhoOne) {
    std::mt19937_64 rng(2);
    const DenseMatrix full = numerics::orth(testutil::random_matrix(8, 8, rng));
    DenseMatrix b(8, 3);
    DenseMatrix rest(8, 5);
    for (std::size_t r = 0; r < 8; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
            (c < 3 ? b(r, c) : rest(r, c - 3)) = full(r, c);
        }
    }
    const DenseMatrix w = matmul(rest, testutil::random_matrix(5, 4, rng));
    const Projection p = project_cks(w, {b, {}});
    EXPECT_NEAR(p.rho, 1.0, 1e-12);
    EXPECT_LT(numerics::max_abs(p.projected), 1e-12);
}

TEST(ProjectCks, ProjectorProperties) {
    for (unsigned seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const PatternBasis b = random_basis(12, 1 + seed % 10, rng);
        const DenseMatrix w = testutil::random_matrix(12, 7, rng);
        const Projection p = project_cks(w, b);
        EXPECT_GE(p.rho, -1e-12);
        EXPECT_LE(p.rho, 1.0 + 1e-12);
        EXPECT_LT(numerics::max_abs(matmul_tn(b.basis, p.residual)), 1e-10);
        const Projection again = project_cks(p.projected, b);
        EXPECT_LT(numerics::max_abs(again.projected - p.projected), 1e-12);
    }
}

TEST(ProjectCks, EmptyBasisAndErrors) {
    std::mt19937_64 rng(3);
    const DenseMatrix w = testutil::random_matrix(6, 3, rng);
    const Projection p = project_cks(w, PatternBasis::empty(6));
    EXPECT_EQ(p.rho, 1.0);
    EXPECT_EQ(numerics::max_abs(p.projected), 0.0);
    EXPECT_THROW(project_cks(w, PatternBasis::empty(5)), DimensionError);
    EXPECT_THROW(project_cks(DenseMatrix(6, 3), PatternBasis::empty(6)), ZeroMatrixError);
}

TEST(ProjectCks, RhoIsScaleInvariant) {
    std::mt19937_64 rng(4);
    const PatternBasis b = random_basis(9, 3, rng);
    const DenseMatrix w = testutil::random_matrix(9, 5, rng);
    const double rho = project_cks(w, b).rho;
    for (double c : {-3.0, 1e-4, 250.0}) {
        EXPECT_NEAR(project_cks(w * c, b).rho, rho, 1e-12);
    }
    const DenseMatrix desc = testutil::random_matrix(10, 4, rng);
    TransferConfig cfg;
    cfg.epsilon = 0.5;
    PatternBasis b1 = b;
    PatternBasis b2 = b;
    EXPECT_EQ(maybe_update_basis(w, b1, desc, cfg, "s").updated,
              maybe_update_basis(w * 40.0, b2, desc, cfg, "s").updated);
}

TEST(RegLoss, Examples) {
    std::mt19937_64 rng(5);
    const PatternBasis b = random_basis(8, 3, rng);
    const Var zbar = Var::constant(testutil::random_matrix(1, 4, rng));
    const ModulationNet net = ModulationNet::init(4, 1);
    const Var in_span = Var::constant(matmul(b.basis, testutil::random_matrix(3, 5, rng)));
    EXPECT_LT(reg_loss(in_span, b, zbar, net).item(), 1e-24);

    ModulationNet off = ModulationNet::init(4, 1, Modulation::Sigmoid);
    off.layer.weight.mutable_value().fill(0.0);
    off.layer.bias.mutable_value().fill(-800.0);
    const Var w = Var::constant(testutil::random_matrix(8, 5, rng));
    EXPECT_EQ(reg_loss(w, b, zbar, off).item(), 0.0);

    // α · ρ² against an independent evaluation.
    const double rho = project_cks(w.value(), b).rho;
    const double a = net(zbar).item();
    EXPECT_GE(a, 0.0);
    EXPECT_NEAR(reg_loss(w, b, zbar, net).item(), a * rho * rho, 1e-14);
    EXPECT_THROW(reg_loss(Var::constant(DenseMatrix(8, 5)), b, zbar, net), ZeroMatrixError);
}

TEST(RegLoss, GradientsMatchFiniteDifferences) {
    for (unsigned seed : {1u, 2u, 3u}) {
        std::mt19937_64 rng(seed);
        for (const Modulation act : {Modulation::Softplus, Modulation::Sigmoid}) {
            const PatternBasis b = random_basis(7, 2 + seed, rng);
            Var w = Var::parameter(testutil::random_matrix(7, 4, rng), "w");
            Var zbar = Var::parameter(testutil::random_matrix(1, 5, rng), "zbar");
            ModulationNet net = ModulationNet::init(5, seed, act);
            auto loss = [&] { return reg_loss(w, b, zbar, net); };
            numerics::backward(loss());
            numerics::NamedParams all;
            net.collect(all);
            all.emplace_back("w", w);
            all.emplace_back("zbar", zbar);
            for (auto [name, v] : all) {
                EXPECT_LT(
                    testutil::rel_error(v.grad(), testutil::finite_difference(v, [&] { return loss().item(); })),
                    1e-4)
                    << name << " seed " << seed;
            }
        }
    }
}

TEST(RegLoss, EmptyBasisGradientIsZero) {
    std::mt19937_64 rng(6);
    Var w = Var::parameter(testutil::random_matrix(5, 3, rng));
    const ModulationNet net = ModulationNet::init(2, 1);
    numerics::backward(reg_loss(w, PatternBasis::empty(5), Var::constant(DenseMatrix(1, 2, 0.3)), net));
    EXPECT_LT(numerics::max_abs(w.grad()), 1e-15);
}

TEST(DescriptorSpread, Example) {
    EXPECT_DOUBLE_EQ(descriptor_spread(DenseMatrix{{0.0, 0.0}, {2.0, 0.0}}), 1.0);
    EXPECT_EQ(descriptor_spread(DenseMatrix{{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}), 0.0);
    EXPECT_THROW(descriptor_spread(DenseMatrix(0, 3)), ValueError);
}

TEST(MaybeUpdateBasis, UniformDescriptorsLeaveRhoUnchanged) {
    std::mt19937_64 rng(7);
    PatternBasis b = random_basis(10, 2, rng);
    const DenseMatrix w = testutil::random_matrix(10, 4, rng);
    const DenseMatrix uniform(6, 5, 0.25);
    TransferConfig cfg;
    cfg.epsilon = 10.0;
    const auto rec = maybe_update_basis(w, b, uniform, cfg, "a");
    EXPECT_EQ(rec.sigma_f, 0.0);
    EXPECT_EQ(rec.rho_prime, rec.rho);
}

TEST(MaybeUpdateBasis, SkipLeavesBasisBitIdentical) {
    std::mt19937_64 rng(8);
    PatternBasis b = random_basis(10, 3, rng);
    const DenseMatrix before = b.basis;
    const DenseMatrix w = testutil::random_matrix(10, 4, rng);
    TransferConfig cfg;
    cfg.epsilon = 100.0;
    const auto rec = maybe_update_basis(w, b, testutil::random_matrix(5, 3, rng), cfg, "a");
    EXPECT_FALSE(rec.updated);
    EXPECT_EQ(b.basis, before);
    ASSERT_EQ(b.history.size(), 1u);
    EXPECT_EQ(b.history[0].scene_id, "a");
}

TEST(MaybeUpdateBasis, FullEnergyUpdateAbsorbsResidual) {
    for (std::size_t k : {1u, 2u, 4u}) {
        std::mt19937_64 rng(9 + k);
        PatternBasis b = random_basis(12, 3, rng);
        // W = B C + (rank-k part orthogonal to B).
        const DenseMatrix g = testutil::random_matrix(12, k, rng);
        const DenseMatrix g_perp = g - matmul(b.basis, matmul_tn(b.basis, g));
        const DenseMatrix w = matmul(b.basis, testutil::random_matrix(3, 6, rng)) +
                              matmul(g_perp, testutil::random_matrix(k, 6, rng));
        TransferConfig cfg;
        cfg.eta = 1.0;
        cfg.epsilon = 1e-6;
        const auto rec = maybe_update_basis(w, b, testutil::random_matrix(5, 3, rng), cfg, "s");
        EXPECT_TRUE(rec.updated);
        EXPECT_EQ(rec.added, k);
        EXPECT_LT(rec.rho_after, 1e-8);
        EXPECT_LT(project_cks(w, b).rho, 1e-8);
    }
}

TEST(MaybeUpdateBasis, FirstUpdateSeedsEmptyBasis) {
    std::mt19937_64 rng(13);
    PatternBasis b = PatternBasis::empty(10);
    const DenseMatrix w = testutil::random_matrix(10, 6, rng);
    const auto rec = maybe_update_basis(w, b, testutil::random_matrix(4, 3, rng), TransferConfig{}, "first");
    EXPECT_EQ(rec.rho, 1.0);
    EXPECT_TRUE(rec.updated);
    EXPECT_GE(b.rank(), 1u);
    EXPECT_LT(rec.rho_after, 1.0);
    // Smallest r' reaching 90% energy.
    const auto s = numerics::svd(w);
    double total = 0.0;
    for (double v : s.values) {
        total += v * v;
    }
    double acc = 0.0;
    std::size_t expect = 0;
    while (acc < 0.9 * total) {
        acc += s.values[expect] * s.values[expect];
        ++expect;
    }
    EXPECT_EQ(b.rank(), expect);
}

TEST(MaybeUpdateBasis, RepeatedUpdatesStayOrthonormalAndMonotone) {
    std::mt19937_64 rng(14);
    const std::size_t q = 20;
    PatternBasis b = PatternBasis::empty(q);
    const DenseMatrix probe = testutil::random_matrix(q, 5, rng);
    double last_rho = project_cks(probe, b).rho;
    TransferConfig cfg;
    cfg.eta = 0.3;
    cfg.epsilon = 1e-3;
    for (int step = 0; step < 10; ++step) {
        const DenseMatrix w = testutil::random_matrix(q, 4, rng);
        const std::size_t before = b.rank();
        const auto rec = maybe_update_basis(w, b, testutil::random_matrix(6, 3, rng), cfg, std::to_string(step));
        EXPECT_LT(b.orthonormality_error(), 1e-10);
        EXPECT_LE(b.rank(), q - 1);
        if (rec.updated && b.rank() > before && before + rec.added == b.rank()) {
            const double rho = project_cks(probe, b).rho;
            EXPECT_LE(rho, last_rho + 1e-12);
            last_rho = rho;
        }
    }
    EXPECT_EQ(b.history.size(), 10u);
}

TEST(MaybeUpdateBasis, RankCapAtQMinusOne) {
    std::mt19937_64 rng(15);
    PatternBasis b = PatternBasis::empty(4);
    TransferConfig cfg;
    cfg.eta = 1.0;
    cfg.epsilon = 1e-9;
    for (int i = 0; i < 5; ++i) {
        maybe_update_basis(testutil::random_matrix(4, 4, rng), b, testutil::random_matrix(3, 2, rng), cfg, "x");
        EXPECT_LE(b.rank(), 3u);
        EXPECT_LT(b.orthonormality_error(), 1e-10);
    }
    EXPECT_EQ(b.rank(), 3u);
}

TEST(MaybeUpdateBasis, ConfigValidation) {
    TransferConfig c;
    c.eta = 0.0;
    EXPECT_THROW(c.validate(), ValueError);
    c = {};
    c.kappa = -1.0;
    EXPECT_THROW(c.validate(), ValueError);
    c = {};
    c.epsilon = 0.0;
    EXPECT_THROW(c.validate(), ValueError);
}

TEST(BasisFile, RoundTripAndIntegrity) {
    std::mt19937_64 rng(16);
    BasisStore store;
    store["layer0.w_q"] = random_basis(20, 5, rng);
    store["layer1.w_v"] = PatternBasis::empty(64);
    maybe_update_basis(testutil::random_matrix(20, 8, rng), store["layer0.w_q"], testutil::random_matrix(3, 3, rng),
                       TransferConfig{}, "sceneA");
    const auto path = std::filesystem::temp_directory_path() / "anisogauss_basis.bin";
    save_bases(store, path);
    const BasisStore back = load_bases(path);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.at("layer0.w_q").basis, store.at("layer0.w_q").basis);
    EXPECT_EQ(back.at("layer1.w_v").basis.rows(), 64u);
    EXPECT_EQ(back.at("layer1.w_v").rank(), 0u);
    ASSERT_EQ(back.at("layer0.w_q").history.size(), 1u);
    const auto& h = back.at("layer0.w_q").history[0];
    EXPECT_EQ(h.scene_id, "sceneA");
    EXPECT_EQ(h.rho, store.at("layer0.w_q").history[0].rho);

    const auto size = std::filesystem::file_size(path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(static_cast<std::streamoff>(size / 2));
        char c = 0;
        f.read(&c, 1);
        c = static_cast<char>(c ^ 0x5A);
        f.seekp(static_cast<std::streamoff>(size / 2));
        f.write(&c, 1);
    }
    EXPECT_THROW(load_bases(path), ChecksumError);

    save_bases(store, path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const char v[4] = {9, 0, 0, 0};
        f.write(v, 4);
    }
    EXPECT_THROW(load_bases(path), VersionError);

    save_bases(store, path);
    std::filesystem::resize_file(path, 10);
    EXPECT_THROW(load_bases(path), IoError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_bases(path), IoError);
}

TEST(BasisFile, SingleBasisHelpers) {
    std::mt19937_64 rng(17);
    const PatternBasis b = random_basis(6, 2, rng);
    const auto path = std::filesystem::temp_directory_path() / "anisogauss_single.bin";
    save_basis(b, path);
    EXPECT_EQ(load_basis(path).basis, b.basis);
    std::filesystem::remove(path);
}

} // namespace
