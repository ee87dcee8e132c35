// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/numerics/layers.hpp"

#include <cmath>

namespace anisogauss::numerics {

DenseMatrix xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseMatrix m(rows, cols);
    for (auto& v : m.data()) {
        v = u(rng);
    }
    return m;
}

Linear Linear::xavier(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng, const std::string& name) {
    return Linear{Var::parameter(xavier_uniform(in_dim, out_dim, rng), name + ".weight"),
                  Var::parameter(DenseMatrix(1, out_dim), name + ".bias")};
}

Var Linear::operator()(const Var& x) const { return ad::add_row(ad::matmul(x, weight), bias); }

void Linear::collect(std::vector<std::pair<std::string, Var>>& out) const {
    out.emplace_back(weight.name(), weight);
    out.emplace_back(bias.name(), bias);
}

} // namespace anisogauss::numerics
