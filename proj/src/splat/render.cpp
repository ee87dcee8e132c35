// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/splat/render.hpp"

#include "anisogauss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace anisogauss::splat {

using numerics::DenseMatrix;
using numerics::Var;

namespace {

constexpr int kTile = 16;

struct PixelBox {
    int x0, x1, y0, y1;  // inclusive, may be empty (x0 > x1)
};

// Pixels whose centres can reach α >= 1/255 for this splat.
PixelBox reach_box(const ProjectedGaussian& p, double opacity, int width, int height) {
    const double qmax = 2.0 * std::log(255.0 * opacity);
    const double rx = std::sqrt(qmax * p.cov2d(0, 0)) * (1.0 + 1e-9) + 1e-9;
    const double ry = std::sqrt(qmax * p.cov2d(1, 1)) * (1.0 + 1e-9) + 1e-9;
    const double fx0 = std::ceil(p.mean2d.x() - rx - 0.5);
    const double fx1 = std::floor(p.mean2d.x() + rx - 0.5);
    const double fy0 = std::ceil(p.mean2d.y() - ry - 0.5);
    const double fy1 = std::floor(p.mean2d.y() + ry - 0.5);
    PixelBox b;
    b.x0 = static_cast<int>(std::clamp(fx0, 0.0, static_cast<double>(width)));
    b.x1 = static_cast<int>(std::clamp(fx1, -1.0, static_cast<double>(width - 1)));
    b.y0 = static_cast<int>(std::clamp(fy0, 0.0, static_cast<double>(height)));
    b.y1 = static_cast<int>(std::clamp(fy1, -1.0, static_cast<double>(height - 1)));
    return b;
}

} // namespace

std::vector<ProjectedGaussian> project(const scene::Scene& scene, const scene::Camera& camera, std::size_t* skipped) {
    camera.validate();
    const scene::Vec3 cam_pos = camera.position();
    std::vector<ProjectedGaussian> out;
    out.reserve(scene.size());
    std::size_t bad = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto& g = scene.gaussians[i];
        const scene::Vec3 p = camera.to_camera(g.center);
        if (p.z() < camera.near_plane || p.z() > camera.far_plane) {
            continue;
        }
        const double iz = 1.0 / p.z();
        Eigen::Matrix<double, 2, 3> j;
        j << camera.fx * iz, 0.0, -camera.fx * p.x() * iz * iz, 0.0, camera.fy * iz, -camera.fy * p.y() * iz * iz;
        const Eigen::Matrix<double, 2, 3> t = j * camera.rotation;
        ProjectedGaussian pg;
        pg.index = static_cast<std::uint32_t>(i);
        pg.cov2d = t * g.covariance() * t.transpose();
        pg.cov2d(0, 1) = pg.cov2d(1, 0) = 0.5 * (pg.cov2d(0, 1) + pg.cov2d(1, 0));
        pg.cov2d(0, 0) += kCov2dBlur;
        pg.cov2d(1, 1) += kCov2dBlur;
        const double det = pg.cov2d.determinant();
        if (!pg.cov2d.allFinite() || !(det > 0.0)) {
            ++bad;
            continue;
        }
        pg.conic << pg.cov2d(1, 1) / det, -pg.cov2d(0, 1) / det, -pg.cov2d(1, 0) / det, pg.cov2d(0, 0) / det;
        pg.mean2d = Vec2(camera.fx * p.x() * iz + camera.cx, camera.fy * p.y() * iz + camera.cy);
        pg.depth = p.z();
        pg.view_dir = (g.center - cam_pos).normalized();
        out.push_back(pg);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ProjectedGaussian& a, const ProjectedGaussian& b) { return a.depth < b.depth; });
    if (skipped) {
        *skipped = bad;
    }
    return out;
}

double splat_alpha(const ProjectedGaussian& p, double opacity, int x, int y) {
    const double dx = x + 0.5 - p.mean2d.x();
    const double dy = y + 0.5 - p.mean2d.y();
    const double q = p.conic(0, 0) * dx * dx + 2.0 * p.conic(0, 1) * dx * dy + p.conic(1, 1) * dy * dy;
    return std::min(kAlphaMax, opacity * std::exp(-0.5 * q));
}

RenderTarget rasterize(const std::vector<ProjectedGaussian>& projected, const RasterInputs& inputs,
                       const scene::Camera& camera, bool track_gradients) {
    camera.validate();
    if (!inputs.colors || !inputs.opacity) {
        throw ValueError("rasterize: colours and opacities are required");
    }
    const DenseMatrix& colors = *inputs.colors;
    const std::size_t n = colors.rows();
    if (colors.cols() != 3 || inputs.opacity->size() != n) {
        throw DimensionError("rasterize: colours must be N x 3 with N opacities");
    }
    const std::size_t df = inputs.features ? inputs.features->cols() : 0;
    if (inputs.features && inputs.features->rows() != n) {
        throw DimensionError("rasterize: features must have one row per Gaussian");
    }
    const int w = camera.width;
    const int h = camera.height;
    RenderTarget t;
    t.color = Image(w, h, 3);
    t.semantic = Image(w, h, static_cast<int>(df));
    t.transmittance = Image(w, h, 1, 1.0);
    t.contributor_count.assign(t.color.pixels(), 0);

    std::vector<double> slot_opacity(projected.size());
    const int tiles_x = (w + kTile - 1) / kTile;
    const int tiles_y = (h + kTile - 1) / kTile;
    std::vector<std::vector<std::uint32_t>> tile_lists(static_cast<std::size_t>(tiles_x * tiles_y));
    for (std::size_t s = 0; s < projected.size(); ++s) {
        const auto& p = projected[s];
        if (p.index >= n) {
            throw DimensionError("rasterize: projected index outside the inputs");
        }
        const double o = (*inputs.opacity)[p.index];
        slot_opacity[s] = o;
        if (!(o * 255.0 > 1.0) || !std::isfinite(o)) {
            continue;
        }
        const PixelBox b = reach_box(p, o, w, h);
        if (b.x0 > b.x1 || b.y0 > b.y1) {
            continue;
        }
        for (int ty = b.y0 / kTile; ty <= b.y1 / kTile; ++ty) {
            for (int tx = b.x0 / kTile; tx <= b.x1 / kTile; ++tx) {
                tile_lists[static_cast<std::size_t>(ty * tiles_x + tx)].push_back(static_cast<std::uint32_t>(s));
            }
        }
    }

    std::vector<std::vector<Contribution>> per_pixel;
    if (track_gradients) {
        per_pixel.resize(t.color.pixels());
    }
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tiles_x; ++tx) {
            const auto& list = tile_lists[static_cast<std::size_t>(ty * tiles_x + tx)];
            if (list.empty()) {
                continue;
            }
            for (int y = ty * kTile; y < std::min(h, (ty + 1) * kTile); ++y) {
                for (int x = tx * kTile; x < std::min(w, (tx + 1) * kTile); ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                    double tr = 1.0;
                    double* rgb = &t.color.data[pix * 3];
                    double* feat = df ? &t.semantic.data[pix * df] : nullptr;
                    std::uint32_t count = 0;
                    for (std::uint32_t s : list) {
                        const auto& p = projected[s];
                        const double o = slot_opacity[s];
                        const double dx = x + 0.5 - p.mean2d.x();
                        const double dy = y + 0.5 - p.mean2d.y();
                        const double q =
                            p.conic(0, 0) * dx * dx + 2.0 * p.conic(0, 1) * dx * dy + p.conic(1, 1) * dy * dy;
                        const double raw = o * std::exp(-0.5 * q);
                        const double a = std::min(kAlphaMax, raw);
                        if (a < kAlphaMin) {
                            continue;
                        }
                        const double wgt = a * tr;
                        for (int c = 0; c < 3; ++c) {
                            rgb[c] += wgt * colors(p.index, static_cast<std::size_t>(c));
                        }
                        for (std::size_t k = 0; k < df; ++k) {
                            feat[k] += wgt * (*inputs.features)(p.index, k);
                        }
                        if (track_gradients) {
                            per_pixel[pix].push_back(Contribution{s, raw > kAlphaMax, a, tr});
                        }
                        tr *= 1.0 - a;
                        ++count;
                    }
                    t.transmittance.data[pix] = tr;
                    t.contributor_count[pix] = count;
                }
            }
        }
    }

    if (track_gradients) {
        t.tracked = true;
        t.projected = projected;
        t.opacity = std::move(slot_opacity);
        t.colors = colors;
        t.features = inputs.features ? *inputs.features : DenseMatrix(n, 0);
        t.pixel_offset.assign(per_pixel.size() + 1, 0);
        std::size_t total = 0;
        for (std::size_t i = 0; i < per_pixel.size(); ++i) {
            total += per_pixel[i].size();
            t.pixel_offset[i + 1] = static_cast<std::uint32_t>(total);
        }
        t.contributions.reserve(total);
        for (auto& v : per_pixel) {
            t.contributions.insert(t.contributions.end(), v.begin(), v.end());
        }
    }
    return t;
}

DenseMatrix view_sh_basis(const scene::Scene& scene, const scene::Camera& camera) {
    const scene::Vec3 cam_pos = camera.position();
    DenseMatrix y(scene.size(), scene::kShCoeffs);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const scene::Vec3 d = scene.gaussians[i].center - cam_pos;
        const double nrm = d.norm();
        const auto b = sh_basis(nrm > 0.0 ? scene::Vec3(d / nrm) : scene::Vec3::UnitZ());
        std::copy(b.begin(), b.end(), y.row(i).begin());
    }
    return y;
}

RenderTarget render(const scene::Scene& scene, const scene::Camera& camera, const RenderOptions& options) {
    if (scene.gaussians.empty()) {
        throw ValueError("render: scene is empty");
    }
    if (options.sh_masks && options.sh_masks->size() != scene.size()) {
        throw DimensionError("render: one SH mask per Gaussian is required");
    }
    std::size_t skipped = 0;
    const auto projected = project(scene, camera, &skipped);
    const std::size_t n = scene.size();
    DenseMatrix colors(n, 3);
    DenseMatrix features(n, scene.semantic_dim);
    std::vector<double> opacity(n);
    const scene::Vec3 cam_pos = camera.position();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& g = scene.gaussians[i];
        const scene::Vec3 d = (g.center - cam_pos).normalized();
        const DegreeMask* mask = options.sh_masks ? &(*options.sh_masks)[i] : nullptr;
        const scene::Vec3 c = sh_color(g.sh, d, options.max_degree, mask);
        for (int k = 0; k < 3; ++k) {
            colors(i, static_cast<std::size_t>(k)) = c[k];
        }
        for (std::size_t k = 0; k < scene.semantic_dim; ++k) {
            features(i, k) = g.semantic_feature[k];
        }
        opacity[i] = g.opacity;
    }
    RenderTarget t = rasterize(projected, RasterInputs{&colors, &features, &opacity}, camera, options.track_gradients);
    t.skipped_degenerate = skipped;
    return t;
}

RenderGradients rasterize_backward(const RenderTarget& target, std::size_t scene_size, const Image& d_color,
                                   const Image* d_semantic) {
    if (!target.tracked) {
        throw StateError("rasterize_backward: render was not run with gradient tracking");
    }
    if (!d_color.same_shape(target.color) || (d_semantic && !d_semantic->same_shape(target.semantic))) {
        throw ShapeError("rasterize_backward: gradient image shape mismatch");
    }
    const std::size_t df = static_cast<std::size_t>(target.semantic.channels);
    RenderGradients g;
    g.d_color = DenseMatrix(scene_size, 3);
    g.d_feature = DenseMatrix(scene_size, df);
    g.d_opacity.assign(scene_size, 0.0);
    g.d_mean2d.assign(scene_size, Vec2::Zero());
    g.visible.assign(scene_size, 0);
    std::vector<double> acc_f(df);
    const int w = target.color.width;
    for (std::size_t pix = 0; pix < target.color.pixels(); ++pix) {
        const std::uint32_t begin = target.pixel_offset[pix];
        const std::uint32_t end = target.pixel_offset[pix + 1];
        if (begin == end) {
            continue;
        }
        const double px = static_cast<double>(pix % static_cast<std::size_t>(w)) + 0.5;
        const double py = static_cast<double>(pix / static_cast<std::size_t>(w)) + 0.5;
        const double* gc = &d_color.data[pix * 3];
        const double* gf = (d_semantic && df) ? &d_semantic->data[pix * df] : nullptr;
        double acc_c[3] = {0.0, 0.0, 0.0};
        std::fill(acc_f.begin(), acc_f.end(), 0.0);
        for (std::uint32_t k = end; k-- > begin;) {
            const Contribution& c = target.contributions[k];
            const ProjectedGaussian& p = target.projected[c.slot];
            const std::size_t i = p.index;
            const double a = c.alpha;
            const double wgt = a * c.transmittance;
            double da_color = 0.0;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double col = target.colors(i, ch);
                g.d_color(i, ch) += wgt * gc[ch];
                da_color += (col - acc_c[ch]) * gc[ch];
                acc_c[ch] = a * col + (1.0 - a) * acc_c[ch];
            }
            double da_feat = 0.0;
            for (std::size_t ch = 0; ch < df; ++ch) {
                const double f = target.features(i, ch);
                if (gf) {
                    g.d_feature(i, ch) += wgt * gf[ch];
                    da_feat += (f - acc_f[ch]) * gf[ch];
                }
                acc_f[ch] = a * f + (1.0 - a) * acc_f[ch];
            }
            da_color *= c.transmittance;
            da_feat *= c.transmittance;
            g.visible[i] = 1;
            if (!c.clamped) {
                const double o = target.opacity[c.slot];
                g.d_opacity[i] += (da_color + da_feat) * (a / o);
                const Vec2 d(px - p.mean2d.x(), py - p.mean2d.y());
                g.d_mean2d[i] += da_color * a * (p.conic * d);
            }
        }
    }
    return g;
}

void GradientAccumulator::add(std::size_t i, double magnitude) {
    sum_.at(i) += magnitude;
    ++count_.at(i);
}

std::vector<double> GradientAccumulator::mean() const {
    std::vector<double> out(sum_.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = mean(i);
    }
    return out;
}

void GradientAccumulator::reset(std::size_t n) {
    sum_.assign(n, 0.0);
    count_.assign(n, 0);
}

void GradientAccumulator::remap(const std::vector<long>& source_rows) {
    std::vector<double> s(source_rows.size(), 0.0);
    std::vector<std::size_t> c(source_rows.size(), 0);
    for (std::size_t i = 0; i < source_rows.size(); ++i) {
        if (source_rows[i] >= 0) {
            s[i] = sum_.at(static_cast<std::size_t>(source_rows[i]));
            c[i] = count_.at(static_cast<std::size_t>(source_rows[i]));
        }
    }
    sum_ = std::move(s);
    count_ = std::move(c);
}

std::vector<Vec2> accumulate_render_gradients(const RenderTarget& target, std::size_t scene_size,
                                              const Image& reference, GradientAccumulator& accum) {
    if (!target.tracked) {
        throw StateError("accumulate_render_gradients: gradient tracking was disabled for this render");
    }
    if (!reference.same_shape(target.color)) {
        throw ShapeError("accumulate_render_gradients: reference shape mismatch");
    }
    if (accum.size() != scene_size) {
        throw DimensionError("accumulate_render_gradients: accumulator size mismatch");
    }
    Image d(target.color.width, target.color.height, 3);
    const double scale = 2.0 / static_cast<double>(d.data.size());
    for (std::size_t k = 0; k < d.data.size(); ++k) {
        d.data[k] = scale * (target.color.data[k] - reference.data[k]);
    }
    const RenderGradients g = rasterize_backward(target, scene_size, d, nullptr);
    for (std::size_t i = 0; i < scene_size; ++i) {
        if (g.visible[i]) {
            accum.add(i, g.d_mean2d[i].norm());
        }
    }
    return g.d_mean2d;
}

RenderNode render_ad(const std::vector<ProjectedGaussian>& projected, const Var& colors, const Var& features,
                     const Var& opacity, const scene::Camera& camera) {
    const std::size_t n = colors.rows();
    if (opacity.rows() != n || opacity.cols() != 1) {
        throw DimensionError("render_ad: opacity must be N x 1");
    }
    const bool has_features = features.valid() && features.cols() > 0;
    std::vector<double> op(opacity.value().data().begin(), opacity.value().data().end());
    RenderNode node;
    node.target = std::make_shared<RenderTarget>(rasterize(
        projected, RasterInputs{&colors.value(), has_features ? &features.value() : nullptr, &op}, camera, true));
    node.last_gradients = std::make_shared<RenderGradients>();
    const RenderTarget& t = *node.target;
    const std::size_t df = static_cast<std::size_t>(t.semantic.channels);
    const std::size_t px = t.color.pixels();
    DenseMatrix out(px, 3 + df);
    for (std::size_t p = 0; p < px; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
            out(p, c) = t.color.data[p * 3 + c];
        }
        for (std::size_t c = 0; c < df; ++c) {
            out(p, 3 + c) = t.semantic.data[p * df + c];
        }
    }
    std::vector<Var> parents{colors, opacity};
    if (has_features) {
        parents.push_back(features);
    }
    auto target = node.target;
    auto grads = node.last_gradients;
    node.output = numerics::make_custom(std::move(out), parents, [target, grads, n, df](numerics::DiffNode& self) {
        const std::size_t px = target->color.pixels();
        Image dc(target->color.width, target->color.height, 3);
        Image ds(target->color.width, target->color.height, static_cast<int>(df));
        for (std::size_t p = 0; p < px; ++p) {
            for (std::size_t c = 0; c < 3; ++c) {
                dc.data[p * 3 + c] = self.grad(p, c);
            }
            for (std::size_t c = 0; c < df; ++c) {
                ds.data[p * df + c] = self.grad(p, 3 + c);
            }
        }
        *grads = rasterize_backward(*target, n, dc, df ? &ds : nullptr);
        if (self.parents[0]->requires_grad) {
            self.parents[0]->grad_buffer() += grads->d_color;
        }
        if (self.parents[1]->requires_grad) {
            DenseMatrix& g = self.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                g(i, 0) += grads->d_opacity[i];
            }
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            self.parents[2]->grad_buffer() += grads->d_feature;
        }
    });
    return node;
}

} // namespace anisogauss::splat
