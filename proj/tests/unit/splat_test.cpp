// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/errors.hpp"
#include "anisogauss/splat/render.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

namespace {

using namespace anisogauss;
using namespace anisogauss::splat;
using numerics::DenseMatrix;
using numerics::Var;
using scene::Camera;
using scene::Scene;
namespace ad = numerics::ad;

Camera small_camera(int w = 32, int h = 32) {
    return Camera::look_at(Vec3(0, 0, -4), Vec3(0, 0, 0), Vec3(0, -1, 0), w, h, 0.8, 0.1, 20.0);
}

Scene random_scene(std::size_t n, std::mt19937_64& rng, std::size_t df = 2) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Scene s;
    s.semantic_dim = df;
    for (std::size_t i = 0; i < n; ++i) {
        scene::SemanticGaussian g;
        g.center = testutil::random_vec(rng, -1.0, 1.0);
        g.scale = testutil::random_vec(rng, 0.03, 0.3);
        g.rotation = scene::Quat(testutil::random_rotation(rng));
        g.opacity = 0.2 + 0.8 * u(rng);
        for (auto& c : g.sh) {
            for (auto& v : c) {
                v = 0.4 * (u(rng) - 0.5);
            }
        }
        g.semantic_feature.resize(df);
        for (auto& v : g.semantic_feature) {
            v = u(rng);
        }
        s.gaussians.push_back(g);
    }
    return s;
}

TEST(ShBasis, AnalyticLowDegrees) {
    const double c0 = 0.5 / std::sqrt(std::numbers::pi);
    const double c1 = std::sqrt(3.0 / (4.0 * std::numbers::pi));
    EXPECT_NEAR(kShC0, c0, 1e-15);
    EXPECT_NEAR(kShC1, c1, 1e-15);
    const Vec3 d = Vec3(0.3, -0.5, 0.8).normalized();
    const auto y = sh_basis(d);
    EXPECT_NEAR(y[0], c0, 1e-15);
    EXPECT_NEAR(y[1], -c1 * d.y(), 1e-15);
    EXPECT_NEAR(y[2], c1 * d.z(), 1e-15);
    EXPECT_NEAR(y[3], -c1 * d.x(), 1e-15);
}

TEST(ShBasis, OrthonormalOnSphere) {
    // Fibonacci-lattice quadrature.
    const int m = 20000;
    std::array<std::array<double, 16>, 16> gram{};
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < m; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / m;
        const double r = std::sqrt(1.0 - z * z);
        const Vec3 d(r * std::cos(golden * i), r * std::sin(golden * i), z);
        const auto y = sh_basis(d);
        for (int a = 0; a < 16; ++a) {
            for (int b = 0; b < 16; ++b) {
                gram[a][b] += y[a] * y[b] * 4.0 * std::numbers::pi / m;
            }
        }
    }
    for (int a = 0; a < 16; ++a) {
        for (int b = 0; b < 16; ++b) {
            EXPECT_NEAR(gram[a][b], a == b ? 1.0 : 0.0, 2e-3) << a << "," << b;
        }
    }
}

TEST(ShColor, ZeroCoefficientsAreMidGray) {
    scene::ShCoeffs sh{};
    EXPECT_EQ(sh_color(sh, Vec3::UnitX(), 3), Vec3::Constant(0.5));
    sh[9][0] = 1.0;
    const DegreeMask mask{1, 1, 1, 0};
    EXPECT_EQ(sh_color(sh, Vec3(0.6, 0.8, 0.0), 3, &mask), Vec3::Constant(0.5));
}

TEST(Render, SingleSplatOneTermBlend) {
    const Camera cam = small_camera(8, 8);
    Scene s;
    s.semantic_dim = 1;
    scene::SemanticGaussian g;
    g.center = Vec3(0, 0, 0);
    g.scale = Vec3::Constant(0.5);
    g.opacity = 0.6;
    g.sh[0] = {0.3, 0.0, -0.2};
    g.semantic_feature = {2.0};
    s.gaussians.push_back(g);
    const RenderTarget t = render(s, cam);
    const auto p = project(s, cam);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            double a = splat_alpha(p[0], 0.6, x, y);
            if (a < kAlphaMin) {
                a = 0.0;
            }
            const Vec3 c = sh_color(g.sh, p[0].view_dir, 3);
            EXPECT_DOUBLE_EQ(t.color.at(x, y, 0), c[0] * a);
            EXPECT_DOUBLE_EQ(t.semantic.at(x, y, 0), 2.0 * a);
            EXPECT_DOUBLE_EQ(t.transmittance.at(x, y, 0), 1.0 - a);
        }
    }
}

TEST(Render, TwoSplatBlend) {
    const Camera cam = small_camera(4, 4);
    Scene s;
    for (double z : {1.0, -1.0}) {  // second is nearer the camera
        scene::SemanticGaussian g;
        g.center = Vec3(0, 0, z);
        g.scale = Vec3::Constant(1.0);
        g.opacity = z > 0 ? 0.7 : 0.4;
        g.sh[0] = {z > 0 ? 1.0 : -1.0, 0.0, 0.0};
        s.gaussians.push_back(g);
    }
    const RenderTarget t = render(s, cam);
    const auto p = project(s, cam);
    ASSERT_EQ(p[0].index, 1u);
    const double a1 = splat_alpha(p[0], 0.4, 1, 2);
    const double a2 = splat_alpha(p[1], 0.7, 1, 2);
    const double c1 = 0.5 - kShC0;
    const double c2 = 0.5 + kShC0;
    EXPECT_NEAR(t.color.at(1, 2, 0), c1 * a1 + c2 * a2 * (1.0 - a1), 1e-15);
}

// Untiled per-pixel reference: every splat, global order, same α rule.
RenderTarget oracle_render(const Scene& s, const Camera& cam) {
    const auto p = project(s, cam);
    RenderTarget t;
    t.color = Image(cam.width, cam.height, 3);
    t.semantic = Image(cam.width, cam.height, static_cast<int>(s.semantic_dim));
    t.transmittance = Image(cam.width, cam.height, 1);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double tr = 1.0;
            for (const auto& sp : p) {
                const auto& g = s.gaussians[sp.index];
                const double dx = x + 0.5 - sp.mean2d.x();
                const double dy = y + 0.5 - sp.mean2d.y();
                const Mat2 inv = sp.cov2d.inverse();
                const double q = dx * (inv(0, 0) * dx + inv(0, 1) * dy) + dy * (inv(1, 0) * dx + inv(1, 1) * dy);
                const double a = std::min(0.999, g.opacity * std::exp(-0.5 * q));
                if (a < 1.0 / 255.0) {
                    continue;
                }
                const Vec3 c = sh_color(g.sh, sp.view_dir, 3);
                for (int k = 0; k < 3; ++k) {
                    t.color.at(x, y, k) += c[k] * a * tr;
                }
                for (std::size_t k = 0; k < s.semantic_dim; ++k) {
                    t.semantic.at(x, y, static_cast<int>(k)) += g.semantic_feature[k] * a * tr;
                }
                tr *= 1.0 - a;
            }
            t.transmittance.at(x, y, 0) = tr;
        }
    }
    return t;
}

TEST(Render, MatchesUntiledOracle) {
    std::mt19937_64 rng(50);
    const Scene s = random_scene(50, rng);
    const Camera cam = small_camera();
    const RenderTarget a = render(s, cam);
    const RenderTarget b = oracle_render(s, cam);
    for (std::size_t i = 0; i < a.color.data.size(); ++i) {
        EXPECT_NEAR(a.color.data[i], b.color.data[i], 1e-10);
    }
    for (std::size_t i = 0; i < a.semantic.data.size(); ++i) {
        EXPECT_NEAR(a.semantic.data[i], b.semantic.data[i], 1e-10);
    }
    for (std::size_t i = 0; i < a.transmittance.data.size(); ++i) {
        EXPECT_NEAR(a.transmittance.data[i], b.transmittance.data[i], 1e-10);
    }
}

TEST(Render, BlendConservation) {
    std::mt19937_64 rng(51);
    const Scene s = random_scene(50, rng);
    const Camera cam = small_camera();
    const RenderTarget t = render(s, cam, RenderOptions{3, nullptr, true});
    for (std::size_t pix = 0; pix < t.color.pixels(); ++pix) {
        double sum = t.transmittance.data[pix];
        for (std::uint32_t k = t.pixel_offset[pix]; k < t.pixel_offset[pix + 1]; ++k) {
            sum += t.contributions[k].alpha * t.contributions[k].transmittance;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Render, SemanticUsesColourWeightsBitwise) {
    std::mt19937_64 rng(52);
    Scene s = random_scene(40, rng, 3);
    const Camera cam = small_camera();
    for (auto& g : s.gaussians) {
        // Colour equal to the feature, so identical weights give identical maps.
        g.sh = {};
        for (int c = 0; c < 3; ++c) {
            g.semantic_feature[static_cast<std::size_t>(c)] = 0.5;
        }
    }
    const RenderTarget t = render(s, cam);
    for (std::size_t i = 0; i < t.color.data.size(); ++i) {
        EXPECT_EQ(t.color.data[i], t.semantic.data[i]);
    }
}

TEST(Render, MaskingEquivalentToDegreeCap) {
    std::mt19937_64 rng(53);
    const Scene s = random_scene(50, rng);
    const Camera cam = small_camera();
    for (int k = 0; k <= 3; ++k) {
        std::vector<DegreeMask> masks(s.size());
        for (auto& m : masks) {
            for (int l = 0; l < 4; ++l) {
                m[static_cast<std::size_t>(l)] = l <= k ? 1.0 : 0.0;
            }
        }
        const RenderTarget a = render(s, cam, RenderOptions{3, &masks, false});
        const RenderTarget b = render(s, cam, RenderOptions{k, nullptr, false});
        EXPECT_EQ(a.color.data, b.color.data) << "degree " << k;
    }
}

TEST(Render, ZeroOpacityIsInvisible) {
    std::mt19937_64 rng(54);
    Scene s = random_scene(30, rng);
    const Camera cam = small_camera();
    s.gaussians[7].opacity = 0.0;
    Scene removed = s;
    removed.gaussians.erase(removed.gaussians.begin() + 7);
    const RenderTarget a = render(s, cam);
    const RenderTarget b = render(removed, cam);
    EXPECT_EQ(a.color.data, b.color.data);
    EXPECT_EQ(a.semantic.data, b.semantic.data);
}

TEST(Psnr, ClosedForms) {
    const Image zero(4, 4, 3, 0.0);
    EXPECT_TRUE(std::isinf(psnr(zero, zero)));
    EXPECT_NEAR(psnr(zero, Image(4, 4, 3, 0.5)), 10.0 * std::log10(4.0), 1e-12);
    EXPECT_NEAR(psnr(zero, Image(4, 4, 3, 1.0)), 0.0, 1e-12);
    EXPECT_THROW(psnr(zero, Image(4, 3, 3)), ShapeError);
}

// Scalar loss with fixed random weights on the render_ad output.
struct LossFixture {
    Scene s;
    Camera cam = small_camera(20, 20);
    std::vector<ProjectedGaussian> projected;
    DenseMatrix weights;

    explicit LossFixture(unsigned seed) {
        std::mt19937_64 rng(seed);
        s = random_scene(12, rng, 2);
        projected = project(s, cam);
        weights = testutil::random_matrix(400, 5, rng);
    }
    double loss(const Var& c, const Var& f, const Var& o) const {
        const auto node = render_ad(projected, c, f, o, cam);
        return ad::sum(ad::mul(node.output, Var::constant(weights))).item();
    }
};

TEST(RenderGradients, MatchCentralDifferences) {
    for (unsigned seed : {1u, 2u, 3u}) {
        LossFixture fx(seed);
        const std::size_t n = fx.s.size();
        std::mt19937_64 rng(seed + 100);
        Var colors = Var::parameter(testutil::random_matrix(n, 3, rng, 0.1, 0.9));
        Var feats = Var::parameter(testutil::random_matrix(n, 2, rng));
        Var op = Var::parameter(testutil::random_matrix(n, 1, rng, 0.3, 0.9));
        const auto node = render_ad(fx.projected, colors, feats, op, fx.cam);
        numerics::backward(ad::sum(ad::mul(node.output, Var::constant(fx.weights))));
        auto f = [&] { return fx.loss(colors, feats, op); };
        EXPECT_LT(testutil::rel_error(colors.grad(), testutil::finite_difference(colors, f)), 1e-4);
        EXPECT_LT(testutil::rel_error(feats.grad(), testutil::finite_difference(feats, f)), 1e-4);
        EXPECT_LT(testutil::rel_error(op.grad(), testutil::finite_difference(op, f)), 1e-4);

        // mean2d gradient of the colour part only.
        DenseMatrix wc = fx.weights;
        for (std::size_t r = 0; r < wc.rows(); ++r) {
            wc(r, 3) = wc(r, 4) = 0.0;
        }
        const auto n2 = render_ad(fx.projected, colors, feats, op, fx.cam);
        numerics::backward(ad::sum(ad::mul(n2.output, Var::constant(wc))));
        for (std::size_t s = 0; s < fx.projected.size(); ++s) {
            const std::size_t i = fx.projected[s].index;
            for (int axis = 0; axis < 2; ++axis) {
                const double h = 1e-5;
                auto shifted = fx.projected;
                shifted[s].mean2d[axis] += h;
                const double lp = ad::sum(ad::mul(render_ad(shifted, colors, feats, op, fx.cam).output,
                                                  Var::constant(wc))).item();
                shifted[s].mean2d[axis] -= 2 * h;
                const double lm = ad::sum(ad::mul(render_ad(shifted, colors, feats, op, fx.cam).output,
                                                  Var::constant(wc))).item();
                const double fd = (lp - lm) / (2 * h);
                EXPECT_NEAR(n2.last_gradients->d_mean2d[i][axis], fd, 1e-4 * std::max(1.0, std::abs(fd)));
            }
        }
    }
}

TEST(ShColors, MatchCentralDifferences) {
    std::mt19937_64 rng(8);
    const std::size_t n = 5;
    Var sh = Var::parameter(testutil::random_matrix(n, 48, rng, -0.3, 0.3));
    Var masks = Var::parameter(testutil::random_matrix(n, 4, rng, 0.2, 1.0));
    DenseMatrix basis(n, 16);
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = sh_basis(testutil::random_vec(rng).normalized());
        std::copy(y.begin(), y.end(), basis.row(i).begin());
    }
    const DenseMatrix w = testutil::random_matrix(n, 3, rng);
    auto loss = [&] { return ad::sum(ad::mul(sh_colors(sh, masks, basis), Var::constant(w))); };
    numerics::backward(loss());
    auto f = [&] { return loss().item(); };
    EXPECT_LT(testutil::rel_error(sh.grad(), testutil::finite_difference(sh, f)), 1e-4);
    EXPECT_LT(testutil::rel_error(masks.grad(), testutil::finite_difference(masks, f)), 1e-4);
}

TEST(ShColors, AgreesWithScalarPath) {
    std::mt19937_64 rng(9);
    const Scene s = random_scene(10, rng);
    const Camera cam = small_camera();
    const DenseMatrix basis = view_sh_basis(s, cam);
    DenseMatrix shm(s.size(), 48);
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t k = 0; k < 16; ++k) {
            for (std::size_t c = 0; c < 3; ++c) {
                shm(i, 3 * k + c) = s.gaussians[i].sh[k][c];
            }
        }
    }
    const Var out = sh_colors(Var::constant(shm), Var::constant(DenseMatrix(s.size(), 4, 1.0)), basis);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Vec3 c = sh_color(s.gaussians[i].sh, (s.gaussians[i].center - cam.position()).normalized(), 3);
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(out.value()(i, static_cast<std::size_t>(k)), c[k], 1e-14);
        }
    }
}

TEST(AccumulateGradients, ZeroAtOptimum) {
    std::mt19937_64 rng(60);
    const Scene s = random_scene(20, rng);
    const Camera cam = small_camera();
    const RenderTarget t = render(s, cam, RenderOptions{3, nullptr, true});
    GradientAccumulator acc(s.size());
    const auto g = accumulate_render_gradients(t, s.size(), t.color, acc);
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_LT(g[i].norm(), 1e-10);
        EXPECT_LT(acc.mean(i), 1e-10);
    }
}

TEST(AccumulateGradients, ShiftedReferencePullsTowardIt) {
    const Camera cam = small_camera(24, 24);
    Scene s;
    scene::SemanticGaussian g;
    g.center = Vec3(0, 0, 0);
    g.scale = Vec3::Constant(0.2);
    g.opacity = 0.9;
    g.sh[0] = {1.0, 1.0, 1.0};
    s.gaussians.push_back(g);
    Scene moved = s;
    moved.gaussians[0].center = Vec3(0.15, 0, 0);  // +x in world is +u on screen
    const Image reference = render(moved, cam).color;
    const RenderTarget t = render(s, cam, RenderOptions{3, nullptr, true});
    GradientAccumulator acc(1);
    const auto grad = accumulate_render_gradients(t, 1, reference, acc);
    const auto pm = project(moved, cam);
    const auto p0 = project(s, cam);
    const Vec2 shift = pm[0].mean2d - p0[0].mean2d;
    ASSERT_GT(shift.x(), 0.5);
    // Descent direction −grad points along the shift.
    EXPECT_GT(-grad[0].dot(shift), 0.0);
    EXPECT_GT(acc.mean(0), 0.0);
    // Finite-difference confirmation on mean2d.
    auto loss_at = [&](double dx) {
        auto p = p0;
        p[0].mean2d.x() += dx;
        DenseMatrix c(1, 3, 0.5 + kShC0);
        std::vector<double> o{0.9};
        const RenderTarget r = rasterize(p, RasterInputs{&c, nullptr, &o}, cam, false);
        return mse(r.color, reference);
    };
    const double fd = (loss_at(1e-5) - loss_at(-1e-5)) / 2e-5;
    EXPECT_NEAR(grad[0].x(), fd, 1e-4 * std::max(1.0, std::abs(fd)));
}

TEST(AccumulateGradients, OutsideFrustumIsExactlyZero) {
    std::mt19937_64 rng(61);
    Scene s = random_scene(10, rng);
    s.gaussians[3].center = Vec3(0, 0, -10);  // behind the camera
    const Camera cam = small_camera();
    const RenderTarget t = render(s, cam, RenderOptions{3, nullptr, true});
    GradientAccumulator acc(s.size());
    const auto g = accumulate_render_gradients(t, s.size(), Image(32, 32, 3, 0.2), acc);
    EXPECT_EQ(g[3].x(), 0.0);
    EXPECT_EQ(g[3].y(), 0.0);
    EXPECT_EQ(acc.mean(3), 0.0);
}

TEST(AccumulateGradients, RequiresTracking) {
    std::mt19937_64 rng(62);
    const Scene s = random_scene(5, rng);
    const RenderTarget t = render(s, small_camera());
    GradientAccumulator acc(s.size());
    EXPECT_THROW(accumulate_render_gradients(t, s.size(), t.color, acc), StateError);
}

TEST(ImageIo, PngAndNpyRoundTrip) {
    std::mt19937_64 rng(70);
    Image img(7, 5, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : img.data) {
        v = u(rng);
    }
    const auto dir = std::filesystem::temp_directory_path();
    write_png(img, dir / "anisogauss_rt.png");
    const Image back = read_png(dir / "anisogauss_rt.png");
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        EXPECT_NEAR(srgb_encode(back.data[i]), srgb_encode(img.data[i]), 0.5 / 255.0 + 1e-12);
    }
    Image sem(4, 3, 6);
    for (auto& v : sem.data) {
        v = u(rng) - 0.5;
    }
    write_npy(sem, dir / "anisogauss_rt.npy");
    const Image sb = read_npy(dir / "anisogauss_rt.npy");
    EXPECT_TRUE(sb.same_shape(sem));
    EXPECT_EQ(sb.data, sem.data);
    std::filesystem::remove(dir / "anisogauss_rt.png");
    std::filesystem::remove(dir / "anisogauss_rt.npy");
}

} // namespace
