#pragma once

// Random generators and comparison helpers shared by the unit and acceptance
// suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

#include "vcod/numerics.hpp"

namespace vcod::test {

using Rng = std::mt19937_64;

inline DenseArray random_array(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    DenseArray out(std::move(shape));
    for (auto& v : out.values()) v = dist(rng);
    return out;
}

inline DenseArray random_binary(Rng& rng, Shape shape, double p_one = 0.5) {
    std::bernoulli_distribution dist(p_one);
    DenseArray out(std::move(shape));
    for (auto& v : out.values()) v = dist(rng) ? 1.0 : 0.0;
    return out;
}

inline std::size_t random_extent(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double relative_error(double a, double b, double floor = 1e-300) {
    const double scale = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / scale;
}

inline double max_relative_error(const DenseArray& a, const DenseArray& b, double floor = 1e-300) {
    if (a.shape() != b.shape()) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
    return worst;
}

// Central differences of a scalar function over every entry of `x`.
inline DenseArray numeric_gradient(const std::function<double(const DenseArray&)>& f, DenseArray x,
                                   double step = 1e-5) {
    DenseArray grad(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double up = f(x);
        x[i] = keep - step;
        const double down = f(x);
        x[i] = keep;
        grad[i] = (up - down) / (2 * step);
    }
    return grad;
}

// Gradient agreement: |a - n| / max(|a|, |n|, 1e-3). The floor keeps entries
// whose true value is ~0 from turning rounding noise into relative error.
inline double gradient_error(const DenseArray& analytic, const DenseArray& numeric) {
    return max_relative_error(analytic, numeric, 1e-3);
}

}  // namespace vcod::test
