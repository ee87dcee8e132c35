// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/autodiff.hpp"

#include <map>
#include <string>
#include <vector>

namespace anisogauss::numerics {

/// Adam with per-group learning rates.
class Adam {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam() = default;
    explicit Adam(Options options) : options_(options) {}

    void add_group(std::string name, std::vector<Var> params, double lr);
    void step();
    void zero_grad();

    /// Reorders the first/second moments of a row-indexed parameter after the
    /// parameter itself was resized. `source_rows[i]` is the old row feeding new
    /// row i, or -1 for a fresh row (zero moments).
    void remap_rows(const Var& param, const std::vector<long>& source_rows);

    bool contains(const Var& param) const noexcept;

    std::size_t steps_taken() const noexcept { return t_; }

private:
    struct Slot {
        Var param;
        DenseMatrix m;
        DenseMatrix v;
    };
    struct Group {
        std::string name;
        double lr;
        std::vector<Slot> slots;
    };

    Options options_;
    std::vector<Group> groups_;
    std::size_t t_ = 0;
};

} // namespace anisogauss::numerics
