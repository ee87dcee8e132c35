// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/autodiff.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace anisogauss::numerics {

/// Uniform in ±sqrt(6 / (rows + cols)).
DenseMatrix xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

/// y = x W + b with W in_dim x out_dim and b 1 x out_dim.
struct Linear {
    Var weight;
    Var bias;

    static Linear xavier(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng, const std::string& name);
    Var operator()(const Var& x) const;
    std::size_t in_dim() const { return weight.rows(); }
    std::size_t out_dim() const { return weight.cols(); }
    void collect(std::vector<std::pair<std::string, Var>>& out) const;
};

using NamedParams = std::vector<std::pair<std::string, Var>>;

} // namespace anisogauss::numerics
