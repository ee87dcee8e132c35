// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/numerics/tensor_io.hpp"

#include "anisogauss/errors.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace anisogauss::numerics {

namespace {

constexpr std::array<char, 4> kMagic{'A', 'G', 'T', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
    std::array<unsigned char, sizeof(T)> b{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    }
    os.write(reinterpret_cast<const char*>(b.data()), b.size());
}

template <typename T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) {
        throw IoError("unexpected end of file");
    }
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<T>(b[i]) << (8 * i);
    }
    return v;
}

} // namespace

void write_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
void write_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }
std::uint32_t read_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return get_le<std::uint64_t>(is); }
double read_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open for writing: " + path.string());
    }
    os.write(kMagic.data(), kMagic.size());
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(os, m.rows());
        write_u64(os, m.cols());
        for (double v : m.data()) {
            write_f64(os, v);
        }
    }
    if (!os) {
        throw IoError("write failed: " + path.string());
    }
}

NamedTensors load_tensors(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open: " + path.string());
    }
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
        throw IoError("not a tensor checkpoint: " + path.string());
    }
    const std::uint32_t version = read_u32(is);
    if (version != kVersion) {
        throw VersionError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = read_u32(is);
    NamedTensors out;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t len = read_u32(is);
        if (len > (1u << 16)) {
            throw IoError("implausible tensor name length");
        }
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) {
            throw IoError("unexpected end of file");
        }
        const std::uint64_t rows = read_u64(is);
        const std::uint64_t cols = read_u64(is);
        if (rows > (1ull << 28) || cols > (1ull << 28) || rows * cols > (1ull << 30)) {
            throw IoError("implausible tensor shape");
        }
        DenseMatrix m(rows, cols);
        for (auto& v : m.data()) {
            v = read_f64(is);
        }
        out.emplace_back(std::move(name), std::move(m));
    }
    return out;
}

} // namespace anisogauss::numerics
