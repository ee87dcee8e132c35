// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/numerics/optim.hpp"

#include "anisogauss/errors.hpp"

#include <cmath>

namespace anisogauss::numerics {

void Adam::add_group(std::string name, std::vector<Var> params, double lr) {
    Group g{std::move(name), lr, {}};
    for (auto& p : params) {
        if (!p.requires_grad()) {
            throw GraphError("Adam: parameter does not require a gradient");
        }
        g.slots.push_back(Slot{p, DenseMatrix(p.rows(), p.cols()), DenseMatrix(p.rows(), p.cols())});
    }
    groups_.push_back(std::move(g));
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (auto& group : groups_) {
        for (auto& slot : group.slots) {
            DenseMatrix& w = slot.param.mutable_value();
            const DenseMatrix& g = slot.param.grad();
            if (!slot.m.same_shape(w)) {
                throw DimensionError("Adam: parameter resized without remap_rows");
            }
            for (std::size_t i = 0; i < w.size(); ++i) {
                slot.m[i] = options_.beta1 * slot.m[i] + (1.0 - options_.beta1) * g[i];
                slot.v[i] = options_.beta2 * slot.v[i] + (1.0 - options_.beta2) * g[i] * g[i];
                const double mhat = slot.m[i] / bc1;
                const double vhat = slot.v[i] / bc2;
                w[i] -= group.lr * mhat / (std::sqrt(vhat) + options_.eps);
            }
        }
    }
}

void Adam::zero_grad() {
    for (auto& group : groups_) {
        for (auto& slot : group.slots) {
            slot.param.zero_grad();
        }
    }
}

bool Adam::contains(const Var& param) const noexcept {
    for (const auto& group : groups_) {
        for (const auto& slot : group.slots) {
            if (slot.param.node() == param.node()) {
                return true;
            }
        }
    }
    return false;
}

void Adam::remap_rows(const Var& param, const std::vector<long>& source_rows) {
    for (auto& group : groups_) {
        for (auto& slot : group.slots) {
            if (slot.param.node() != param.node()) {
                continue;
            }
            const std::size_t cols = slot.m.cols();
            DenseMatrix m(source_rows.size(), cols);
            DenseMatrix v(source_rows.size(), cols);
            for (std::size_t r = 0; r < source_rows.size(); ++r) {
                if (source_rows[r] < 0) {
                    continue;
                }
                const auto src = static_cast<std::size_t>(source_rows[r]);
                for (std::size_t c = 0; c < cols; ++c) {
                    m(r, c) = slot.m(src, c);
                    v(r, c) = slot.v(src, c);
                }
            }
            slot.m = std::move(m);
            slot.v = std::move(v);
            return;
        }
    }
    throw GraphError("Adam::remap_rows: parameter not registered");
}

} // namespace anisogauss::numerics
