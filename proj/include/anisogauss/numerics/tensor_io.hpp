// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace anisogauss::numerics {

// Little-endian primitives, independent of the host byte order.
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);

using NamedTensors = std::vector<std::pair<std::string, DenseMatrix>>;

/// Tensor checkpoint, all integers and floats little-endian:
///   "AGTS" | u32 version (1) | u32 count |
///   count x { u32 name_len | name bytes | u64 rows | u64 cols | rows*cols f64 }
/// Throws IoError on open/short read, VersionError on an unknown version.
void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::filesystem::path& path);

} // namespace anisogauss::numerics
