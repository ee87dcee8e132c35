// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/splat/image.hpp"

#include "anisogauss/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <regex>

namespace anisogauss::splat {

double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("image shapes differ");
    }
    if (a.data.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
    const double e = mse(a, b);
    if (e == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(1.0 / e);
}

double srgb_encode(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double srgb_decode(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) {
            std::fclose(f);
        }
    }
};

} // namespace

void write_png(const Image& rgb, const std::filesystem::path& path) {
    if (rgb.channels != 3 || rgb.width <= 0 || rgb.height <= 0) {
        throw ShapeError("write_png: expected a non-empty 3-channel image");
    }
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) {
        throw IoError("write_png: cannot open " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng initialisation failed");
    }
    std::vector<png_byte> bytes(rgb.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        bytes[i] = static_cast<png_byte>(std::lround(255.0 * srgb_encode(rgb.data[i])));
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(rgb.height));
    for (int y = 0; y < rgb.height; ++y) {
        rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * rgb.width * 3;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(rgb.width), static_cast<png_uint_32>(rgb.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
        throw IoError("read_png: cannot read " + path.string());
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw IoError("read_png: decode failed for " + path.string());
    }
    Image out(static_cast<int>(img.width), static_cast<int>(img.height), 3);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = srgb_decode(buf[i] / 255.0);
    }
    return out;
}

void write_npy(const Image& image, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("write_npy: cannot open " + path.string());
    }
    std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(image.height) + ", " +
                         std::to_string(image.width) + ", " + std::to_string(image.channels) + "), }";
    // magic(6) + version(2) + len(2) + header + '\n' padded to a multiple of 64
    const std::size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header.push_back('\n');
    const auto len = static_cast<std::uint16_t>(header.size());
    os.write("\x93NUMPY\x01\x00", 8);
    const char lb[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
    os.write(lb, 2);
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    os.write(reinterpret_cast<const char*>(image.data.data()),
             static_cast<std::streamsize>(image.data.size() * sizeof(double)));
    if (!os) {
        throw IoError("write_npy: write failed for " + path.string());
    }
}

Image read_npy(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("read_npy: cannot open " + path.string());
    }
    char magic[10];
    is.read(magic, 10);
    if (!is || std::memcmp(magic, "\x93NUMPY\x01\x00", 8) != 0) {
        throw ParseError("read_npy: not an NPY v1.0 file");
    }
    const std::size_t len = static_cast<unsigned char>(magic[8]) | (static_cast<unsigned char>(magic[9]) << 8);
    std::string header(len, '\0');
    is.read(header.data(), static_cast<std::streamsize>(len));
    std::smatch m;
    if (header.find("'<f8'") == std::string::npos ||
        !std::regex_search(header, m, std::regex(R"(\((\d+), (\d+), (\d+)\))"))) {
        throw ParseError("read_npy: unsupported header " + header);
    }
    Image out(std::stoi(m[2]), std::stoi(m[1]), std::stoi(m[3]));
    is.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(out.data.size() * sizeof(double)));
    if (!is) {
        throw ParseError("read_npy: truncated data");
    }
    return out;
}

} // namespace anisogauss::splat
