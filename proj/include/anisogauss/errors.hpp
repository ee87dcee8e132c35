// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace anisogauss {

/// Root of every error thrown by the library. Each subclass names one failure
/// mode so callers (and the CLI exit-code mapping) can dispatch on type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define ANISOGAUSS_DEFINE_ERROR(Name)            \
    class Name : public Error {                  \
    public:                                      \
        using Error::Error;                      \
    }

// scene
ANISOGAUSS_DEFINE_ERROR(ParseError);
ANISOGAUSS_DEFINE_ERROR(SchemaError);
ANISOGAUSS_DEFINE_ERROR(ValueError);
ANISOGAUSS_DEFINE_ERROR(CountError);

// numerics
ANISOGAUSS_DEFINE_ERROR(SymmetryError);
ANISOGAUSS_DEFINE_ERROR(ConvergenceError);
ANISOGAUSS_DEFINE_ERROR(RankError);
ANISOGAUSS_DEFINE_ERROR(GraphError);

// spectral
ANISOGAUSS_DEFINE_ERROR(NotSPDError);
ANISOGAUSS_DEFINE_ERROR(RegionTooSmall);
ANISOGAUSS_DEFINE_ERROR(DegenerateSpectrum);

// encode / adapt
ANISOGAUSS_DEFINE_ERROR(DimensionError);
ANISOGAUSS_DEFINE_ERROR(NoRegionError);
ANISOGAUSS_DEFINE_ERROR(RangeError);
ANISOGAUSS_DEFINE_ERROR(NonFiniteError);

// transfer
ANISOGAUSS_DEFINE_ERROR(ZeroMatrixError);
ANISOGAUSS_DEFINE_ERROR(IoError);
ANISOGAUSS_DEFINE_ERROR(ChecksumError);
ANISOGAUSS_DEFINE_ERROR(VersionError);

// splat
ANISOGAUSS_DEFINE_ERROR(ShapeError);
ANISOGAUSS_DEFINE_ERROR(StateError);

// pipeline
ANISOGAUSS_DEFINE_ERROR(ConfigError);

#undef ANISOGAUSS_DEFINE_ERROR

} // namespace anisogauss
