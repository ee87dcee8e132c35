// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#include "anisogauss/adapt/histogram.hpp"

#include "anisogauss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace anisogauss::adapt {

namespace {

double logistic(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

void check(double lo, double hi, std::size_t bins, double gamma) {
    if (bins == 0) {
        throw RangeError("histogram needs at least one bin");
    }
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw RangeError("histogram softness must be positive");
    }
    if (!(hi > lo)) {
        throw RangeError("histogram range must satisfy hi > lo");
    }
}

} // namespace

SoftHistogram soft_histogram(std::span<const double> samples, double lo, double hi, std::size_t bins, double gamma) {
    check(lo, hi, bins, gamma);
    SoftHistogram h;
    h.counts.assign(bins, 0.0);
    h.lo = lo;
    h.hi = hi;
    h.gamma = gamma;
    h.delta = (hi - lo) / static_cast<double>(bins);
    std::vector<double> s(bins + 1);
    for (double x : samples) {
        for (std::size_t k = 0; k <= bins; ++k) {
            s[k] = logistic(gamma * (x - (lo + static_cast<double>(k) * h.delta)));
        }
        for (std::size_t b = 0; b < bins; ++b) {
            h.counts[b] += s[b] - s[b + 1];
        }
    }
    return h;
}

Var soft_histogram(const Var& samples, double lo, double hi, std::size_t bins, const Var& gamma) {
    if (gamma.rows() != 1 || gamma.cols() != 1) {
        throw DimensionError("soft_histogram: gamma must be 1x1");
    }
    const double g = gamma.value()(0, 0);
    const SoftHistogram h = soft_histogram(samples.value().data(), lo, hi, bins, g);
    DenseMatrix out(1, bins);
    std::copy(h.counts.begin(), h.counts.end(), out.row(0).begin());
    const double delta = h.delta;
    return numerics::make_custom(std::move(out), {samples, gamma}, [lo, bins, delta](numerics::DiffNode& node) {
        const auto& xs = node.parents[0];
        const auto& gn = node.parents[1];
        const double g = gn->value(0, 0);
        DenseMatrix* dx = xs->requires_grad ? &xs->grad_buffer() : nullptr;
        DenseMatrix* dg = gn->requires_grad ? &gn->grad_buffer() : nullptr;
        const auto up = node.grad.row(0);
        std::vector<double> ds(bins + 1);
        std::vector<double> u(bins + 1);
        double g_total = 0.0;
        const auto values = xs->value.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double x = values[i];
            double gx = 0.0;
            for (std::size_t k = 0; k <= bins; ++k) {
                u[k] = x - (lo + static_cast<double>(k) * delta);
                const double s = logistic(g * u[k]);
                ds[k] = s * (1.0 - s);
            }
            for (std::size_t b = 0; b < bins; ++b) {
                gx += up[b] * g * (ds[b] - ds[b + 1]);
                g_total += up[b] * (u[b] * ds[b] - u[b + 1] * ds[b + 1]);
            }
            if (dx) {
                dx->data()[i] += gx;
            }
        }
        if (dg) {
            (*dg)(0, 0) += g_total;
        }
    });
}

std::pair<double, double> padded_range(std::span<const double> samples, double pad) {
    if (samples.empty()) {
        return {-1e-6, 1e-6};
    }
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    const double w = *mx - *mn;
    const double p = w > 0.0 ? pad * w : 1e-6;
    return {*mn - p, *mx + p};
}

double default_gamma(double lo, double hi, std::size_t bins) {
    return 50.0 * static_cast<double>(bins) / (hi - lo);
}

} // namespace anisogauss::adapt
