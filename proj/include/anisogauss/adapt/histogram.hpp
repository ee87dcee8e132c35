// Copyright Contributors to the anisogauss project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "anisogauss/numerics/autodiff.hpp"

#include <span>
#include <vector>

namespace anisogauss::adapt {

using numerics::DenseMatrix;
using numerics::Var;

inline constexpr std::size_t kDefaultBins = 16;

struct SoftHistogram {
    std::vector<double> counts;
    double lo = 0.0;
    double hi = 1.0;
    double gamma = 1.0;
    double delta = 1.0;  ///< (hi - lo) / B
};

/// H[b] = Σ_x ς(γ(x - e_b)) - ς(γ(x - e_{b+1})) with edges e_b = lo + bΔ.
/// Throws RangeError unless B >= 1, γ > 0 and hi > lo.
SoftHistogram soft_histogram(std::span<const double> samples, double lo, double hi, std::size_t bins, double gamma);

/// Differentiable form: every entry of `samples` is one sample; `gamma` is 1x1.
/// Returns 1 x B. Gradients reach both the samples and γ.
Var soft_histogram(const Var& samples, double lo, double hi, std::size_t bins, const Var& gamma);

/// Empirical [min, max] widened by `pad` of its width on each side. A
/// zero-width range is widened by 1e-6 so the histogram stays defined.
std::pair<double, double> padded_range(std::span<const double> samples, double pad = 0.01);

/// Default softness γ = 50 / Δ.
double default_gamma(double lo, double hi, std::size_t bins);

} // namespace anisogauss::adapt
