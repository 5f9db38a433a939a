#pragma once

// Building blocks for the toy pipeline, each with a hand-written backward.
// Activations are C x H x W DenseArrays.

#include <cmath>
#include <random>
#include <string>

#include "vcod/errors.hpp"
#include "vcod/numerics.hpp"

namespace vcod::toynet {

struct ConvParams {
    DenseArray weight;  // Cout x Cin x kh x kw
    DenseArray bias;    // Cout
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t out_channels() const { return weight.extent(0); }
    std::size_t in_channels() const { return weight.extent(1); }
};

// Uniform(-a, a) with a = gain * sqrt(3 / fan_in): variance gain^2 / fan_in.
inline ConvParams make_conv(std::mt19937_64& rng, std::size_t cout, std::size_t cin, std::size_t k,
                            std::size_t stride, std::size_t padding, double gain) {
    ConvParams p{DenseArray({cout, cin, k, k}), DenseArray({cout}, 0.0), stride, padding};
    const double a = gain * std::sqrt(3.0 / static_cast<double>(cin * k * k));
    std::uniform_real_distribution<double> dist(-a, a);
    for (auto& v : p.weight.values()) v = dist(rng);
    return p;
}

inline DenseArray conv_forward(const ConvParams& p, const DenseArray& x) {
    return conv2d(x, p.weight, std::span<const double>(p.bias.values()), p.stride, p.padding);
}

struct ConvGrads {
    DenseArray d_input;
    DenseArray d_weight;
    DenseArray d_bias;
};

inline ConvGrads conv_backward(const ConvParams& p, const DenseArray& x, const DenseArray& dy) {
    const auto Cin = x.extent(0), H = x.extent(1), W = x.extent(2);
    const auto Cout = p.weight.extent(0), kh = p.weight.extent(2), kw = p.weight.extent(3);
    const auto Ho = dy.extent(1), Wo = dy.extent(2);
    if (dy.extent(0) != Cout) throw ContractError("conv_backward: cotangent channel mismatch");
    ConvGrads g{DenseArray(x.shape()), DenseArray(p.weight.shape()), DenseArray({Cout})};
    const long pad = static_cast<long>(p.padding);
    for (std::size_t co = 0; co < Cout; ++co) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                const double d = dy(co, oy, ox);
                if (d == 0.0) continue;
                g.d_bias[co] += d;
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * p.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(ox * p.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            const auto yy = static_cast<std::size_t>(iy), xx = static_cast<std::size_t>(ix);
                            g.d_weight(co, ci, ky, kx) += d * x(ci, yy, xx);
                            g.d_input(ci, yy, xx) += d * p.weight(co, ci, ky, kx);
                        }
                    }
                }
            }
        }
    }
    return g;
}

inline DenseArray relu(const DenseArray& z) {
    return map(z, [](double v) { return v > 0.0 ? v : 0.0; });
}

inline DenseArray relu_backward(const DenseArray& z, const DenseArray& dy) {
    return zip(z, dy, [](double v, double d) { return v > 0.0 ? d : 0.0; });
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline DenseArray sigmoid(const DenseArray& z) {
    return map(z, [](double v) { return sigmoid(v); });
}

// Adjoint of resize_bilinear: scatters each output cotangent onto the taps
// that produced it.
inline DenseArray resize_bilinear_backward(const DenseArray& dy, std::size_t in_h, std::size_t in_w) {
    const auto C = dy.extent(0), Ho = dy.extent(1), Wo = dy.extent(2);
    DenseArray dx({C, in_h, in_w});
    for (std::size_t r = 0; r < Ho; ++r) {
        const double sy = resize_source_coord(r, in_h, Ho);
        for (std::size_t c = 0; c < Wo; ++c) {
            const auto taps = bilinear_taps(in_h, in_w, resize_source_coord(c, in_w, Wo), sy);
            for (std::size_t ch = 0; ch < C; ++ch) {
                const double d = dy(ch, r, c);
                double* plane = dx.data() + ch * in_h * in_w;
                for (int t = 0; t < 4; ++t) plane[taps.index[t]] += taps.weight[t] * d;
            }
        }
    }
    return dx;
}

inline DenseArray concat_channels(const DenseArray& a, const DenseArray& b) {
    if (a.extent(1) != b.extent(1) || a.extent(2) != b.extent(2)) {
        throw DimensionError("concat_channels: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    DenseArray out({a.extent(0) + b.extent(0), a.extent(1), a.extent(2)});
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

inline std::pair<DenseArray, DenseArray> split_channels(const DenseArray& x, std::size_t first) {
    const auto H = x.extent(1), W = x.extent(2);
    DenseArray a({first, H, W}), b({x.extent(0) - first, H, W});
    std::copy(x.values().begin(), x.values().begin() + static_cast<std::ptrdiff_t>(a.size()), a.values().begin());
    std::copy(x.values().begin() + static_cast<std::ptrdiff_t>(a.size()), x.values().end(), b.values().begin());
    return {std::move(a), std::move(b)};
}

}  // namespace vcod::toynet
