// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

namespace anisogauss::splat {

/// Interleaved H x W x C image of doubles, row-major.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t pixels() const noexcept { return static_cast<std::size_t>(width) * height; }
    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    bool same_shape(const Image& o) const noexcept {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

/// Mean squared error. Throws ShapeError on mismatched shapes.
double mse(const Image& a, const Image& b);

/// 10·log10(1/MSE); +infinity for identical images. Throws ShapeError.
double psnr(const Image& a, const Image& b);

/// 8-bit RGB PNG; linear values are clamped to [0,1] and sRGB-encoded.
void write_png(const Image& rgb, const std::filesystem::path& path);

/// Reads an 8-bit RGB(A) PNG back to linear values.
Image read_png(const std::filesystem::path& path);

/// NPY v1.0, '<f8', C order, shape (H, W, C).
void write_npy(const Image& image, const std::filesystem::path& path);
Image read_npy(const std::filesystem::path& path);

double srgb_encode(double linear);
double srgb_decode(double encoded);

} // namespace anisogauss::splat
