#pragma once

// Dense row-major arrays and the handful of image kernels the rest of the
// library is built from. Index order is (channel, row, col) everywhere; a
// 2-D array is (row, col). Coordinates passed to the samplers are (x, y) =
// (col, row) in pixel units.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vcod/errors.hpp"

namespace vcod {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "x" : "") << shape[i];
    }
    out << ']';
    return out.str();
}

inline std::size_t shape_volume(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

template <typename T>
class BasicArray {
public:
    using value_type = T;

    BasicArray() = default;

    explicit BasicArray(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
        check_extents();
        data_.assign(shape_volume(shape_), fill);
    }

    BasicArray(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (shape_volume(shape_) != data_.size()) {
            throw DimensionError("array of shape " + shape_string(shape_) + " cannot hold " +
                                 std::to_string(data_.size()) + " values");
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

    T& operator()(std::size_t ch, std::size_t r, std::size_t c) noexcept {
        return data_[(ch * shape_[1] + r) * shape_[2] + c];
    }
    const T& operator()(std::size_t ch, std::size_t r, std::size_t c) const noexcept {
        return data_[(ch * shape_[1] + r) * shape_[2] + c];
    }

    T& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) noexcept {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    const T& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    // Same values viewed under a different shape of equal volume.
    BasicArray reshaped(Shape shape) const { return BasicArray(std::move(shape), data_); }

    bool operator==(const BasicArray&) const = default;

private:
    void check_extents() const {
        for (auto e : shape_) {
            if (e == 0) throw DimensionError("zero extent in shape " + shape_string(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using DenseArray = BasicArray<double>;

// ---------------------------------------------------------------------------
// Elementwise and reductions

template <typename T, typename F>
BasicArray<T> map(const BasicArray<T>& x, F&& f) {
    BasicArray<T> out(x.shape());
    std::transform(x.values().begin(), x.values().end(), out.values().begin(), f);
    return out;
}

template <typename T, typename F>
BasicArray<T> zip(const BasicArray<T>& a, const BasicArray<T>& b, F&& f) {
    if (a.shape() != b.shape()) {
        throw DimensionError("elementwise op on " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    BasicArray<T> out(a.shape());
    std::transform(a.values().begin(), a.values().end(), b.values().begin(), out.values().begin(), f);
    return out;
}

template <typename T>
BasicArray<T> operator+(const BasicArray<T>& a, const BasicArray<T>& b) {
    return zip(a, b, std::plus<T>{});
}
template <typename T>
BasicArray<T> operator-(const BasicArray<T>& a, const BasicArray<T>& b) {
    return zip(a, b, std::minus<T>{});
}
template <typename T>
BasicArray<T> operator*(T s, const BasicArray<T>& a) {
    return map(a, [s](T v) { return s * v; });
}

template <typename T>
T sum(const BasicArray<T>& x) {
    return std::accumulate(x.values().begin(), x.values().end(), T{});
}
template <typename T>
T mean(const BasicArray<T>& x) {
    return sum(x) / static_cast<T>(x.size());
}
template <typename T>
T max_value(const BasicArray<T>& x) {
    return *std::max_element(x.values().begin(), x.values().end());
}
template <typename T>
T min_value(const BasicArray<T>& x) {
    return *std::min_element(x.values().begin(), x.values().end());
}
template <typename T>
bool all_finite(const BasicArray<T>& x) {
    return std::all_of(x.values().begin(), x.values().end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
T max_abs_diff(const BasicArray<T>& a, const BasicArray<T>& b) {
    if (a.shape() != b.shape()) throw DimensionError("max_abs_diff shape mismatch");
    T best{};
    for (std::size_t i = 0; i < a.size(); ++i) best = std::max(best, std::abs(a[i] - b[i]));
    return best;
}

// ---------------------------------------------------------------------------
// Pooling

namespace detail {
inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
    if (s.size() != rank) {
        throw DimensionError(std::string(op) + " expects a rank-" + std::to_string(rank) +
                             " array, got " + shape_string(s));
    }
}
inline std::size_t pooled_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t pad = 0) {
    return (in + 2 * pad - k) / s + 1;
}
}  // namespace detail

template <typename T>
struct MaxPoolResult {
    BasicArray<T> values;
    // Flat index into the input of the element selected by each output.
    std::vector<std::size_t> argmax;
};

// Window k, stride s, no padding. Ties resolve to the first element in
// row-major scan order.
template <typename T>
MaxPoolResult<T> max_pool2d_with_indices(const BasicArray<T>& x, std::size_t k, std::size_t s) {
    detail::require_rank(x.shape(), 3, "max_pool2d");
    const auto C = x.extent(0), H = x.extent(1), W = x.extent(2);
    if (k == 0 || s == 0) throw DimensionError("max_pool2d: window and stride must be positive");
    if (H < k || W < k) {
        throw DimensionError("max_pool2d: window " + std::to_string(k) + " larger than input " +
                             shape_string(x.shape()));
    }
    const auto Ho = detail::pooled_extent(H, k, s), Wo = detail::pooled_extent(W, k, s);
    MaxPoolResult<T> out{BasicArray<T>({C, Ho, Wo}), std::vector<std::size_t>(C * Ho * Wo)};
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                std::size_t best = (c * H + oy * s) * W + ox * s;
                for (std::size_t dy = 0; dy < k; ++dy) {
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const std::size_t idx = (c * H + oy * s + dy) * W + ox * s + dx;
                        if (x[idx] > x[best]) best = idx;
                    }
                }
                const std::size_t o = (c * Ho + oy) * Wo + ox;
                out.values[o] = x[best];
                out.argmax[o] = best;
            }
        }
    }
    return out;
}

template <typename T>
BasicArray<T> max_pool2d(const BasicArray<T>& x, std::size_t k, std::size_t s) {
    return max_pool2d_with_indices(x, k, s).values;
}

// Zero-padded average pooling. With count_include_pad the divisor is always
// k*k; otherwise only in-bounds taps are counted.
template <typename T>
BasicArray<T> avg_pool2d(const BasicArray<T>& x, std::size_t k, std::size_t s, std::size_t pad,
                         bool count_include_pad) {
    detail::require_rank(x.shape(), 3, "avg_pool2d");
    const auto C = x.extent(0), H = x.extent(1), W = x.extent(2);
    if (k == 0 || s == 0) throw DimensionError("avg_pool2d: window and stride must be positive");
    if (H + 2 * pad < k || W + 2 * pad < k) throw DimensionError("avg_pool2d: window larger than padded input");
    const auto Ho = detail::pooled_extent(H, k, s, pad), Wo = detail::pooled_extent(W, k, s, pad);

    // Summed-area table per channel keeps large windows cheap.
    BasicArray<T> out({C, Ho, Wo});
    std::vector<T> sat((H + 1) * (W + 1));
    for (std::size_t c = 0; c < C; ++c) {
        std::fill(sat.begin(), sat.end(), T{});
        for (std::size_t y = 0; y < H; ++y) {
            T row{};
            for (std::size_t xx = 0; xx < W; ++xx) {
                row += x(c, y, xx);
                sat[(y + 1) * (W + 1) + xx + 1] = sat[y * (W + 1) + xx + 1] + row;
            }
        }
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long y0 = static_cast<long>(oy * s) - static_cast<long>(pad);
            const auto ya = static_cast<std::size_t>(std::clamp<long>(y0, 0, static_cast<long>(H)));
            const auto yb = static_cast<std::size_t>(std::clamp<long>(y0 + static_cast<long>(k), 0, static_cast<long>(H)));
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                const long x0 = static_cast<long>(ox * s) - static_cast<long>(pad);
                const auto xa = static_cast<std::size_t>(std::clamp<long>(x0, 0, static_cast<long>(W)));
                const auto xb = static_cast<std::size_t>(std::clamp<long>(x0 + static_cast<long>(k), 0, static_cast<long>(W)));
                const T total = sat[yb * (W + 1) + xb] - sat[ya * (W + 1) + xb] - sat[yb * (W + 1) + xa] +
                                sat[ya * (W + 1) + xa];
                const auto count = count_include_pad ? k * k : (yb - ya) * (xb - xa);
                out(c, oy, ox) = total / static_cast<T>(count);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation)

// x: Cin x H x W, kernel: Cout x Cin x kh x kw, bias: Cout values or empty.
template <typename T>
BasicArray<T> conv2d(const BasicArray<T>& x, const BasicArray<T>& kernel, std::span<const T> bias,
                     std::size_t stride = 1, std::size_t padding = 0) {
    detail::require_rank(x.shape(), 3, "conv2d input");
    detail::require_rank(kernel.shape(), 4, "conv2d kernel");
    const auto Cin = x.extent(0), H = x.extent(1), W = x.extent(2);
    const auto Cout = kernel.extent(0), kh = kernel.extent(2), kw = kernel.extent(3);
    if (kernel.extent(1) != Cin) {
        throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.extent(1)) +
                             " input channels, got " + std::to_string(Cin));
    }
    if (!bias.empty() && bias.size() != Cout) throw DimensionError("conv2d: bias length mismatch");
    if (stride == 0) throw DimensionError("conv2d: stride must be positive");
    if (kh > H + 2 * padding || kw > W + 2 * padding) {
        throw DimensionError("conv2d: kernel larger than padded input " + shape_string(x.shape()));
    }
    const auto Ho = detail::pooled_extent(H, kh, stride, padding);
    const auto Wo = detail::pooled_extent(W, kw, stride, padding);
    BasicArray<T> out({Cout, Ho, Wo});
    for (std::size_t co = 0; co < Cout; ++co) {
        const T b = bias.empty() ? T{} : bias[co];
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                T acc = b;
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            acc += kernel(co, ci, ky, kx) * x(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                        }
                    }
                }
                out(co, oy, ox) = acc;
            }
        }
    }
    return out;
}

template <typename T>
BasicArray<T> conv2d(const BasicArray<T>& x, const BasicArray<T>& kernel, std::size_t stride = 1,
                     std::size_t padding = 0) {
    return conv2d(x, kernel, std::span<const T>{}, stride, padding);
}

// ---------------------------------------------------------------------------
// Bilinear sampling

// The four taps of a bilinear read at (x, y) after clamping to the border.
struct BilinearTaps {
    std::array<std::size_t, 4> index;  // flat row-major offsets within one H x W plane
    std::array<double, 4> weight;
};

inline BilinearTaps bilinear_taps(std::size_t H, std::size_t W, double x, double y) {
    const double cx = std::clamp(x, 0.0, static_cast<double>(W - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(H - 1));
    const auto x0 = static_cast<std::size_t>(std::floor(cx));
    const auto y0 = static_cast<std::size_t>(std::floor(cy));
    const auto x1 = std::min(x0 + 1, W - 1);
    const auto y1 = std::min(y0 + 1, H - 1);
    const double ax = cx - static_cast<double>(x0);
    const double ay = cy - static_cast<double>(y0);
    return {{y0 * W + x0, y0 * W + x1, y1 * W + x0, y1 * W + x1},
            {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay}};
}

// Samples every channel of x (C x H x W) at per-output coordinates given as
// two Ho x Wo arrays. Out-of-range coordinates clamp to the border.
template <typename T>
BasicArray<T> bilinear_sample(const BasicArray<T>& x, const BasicArray<T>& xs, const BasicArray<T>& ys) {
    detail::require_rank(x.shape(), 3, "bilinear_sample");
    detail::require_rank(xs.shape(), 2, "bilinear_sample coordinates");
    if (xs.shape() != ys.shape()) throw DimensionError("bilinear_sample: coordinate grids differ in shape");
    const auto C = x.extent(0), H = x.extent(1), W = x.extent(2);
    const auto Ho = xs.extent(0), Wo = xs.extent(1);
    BasicArray<T> out({C, Ho, Wo});
    for (std::size_t i = 0; i < Ho * Wo; ++i) {
        const auto taps = bilinear_taps(H, W, static_cast<double>(xs[i]), static_cast<double>(ys[i]));
        for (std::size_t c = 0; c < C; ++c) {
            const T* plane = x.data() + c * H * W;
            T v{};
            for (int t = 0; t < 4; ++t) v += static_cast<T>(taps.weight[t]) * plane[taps.index[t]];
            out[c * Ho * Wo + i] = v;
        }
    }
    return out;
}

// Source coordinate of output pixel `o` when resizing `in` -> `out` samples
// with half-pixel centres.
inline double resize_source_coord(std::size_t o, std::size_t in, std::size_t out) {
    return (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
}

template <typename T>
BasicArray<T> resize_bilinear(const BasicArray<T>& x, std::size_t Ho, std::size_t Wo) {
    detail::require_rank(x.shape(), 3, "resize_bilinear");
    BasicArray<T> xs({Ho, Wo}), ys({Ho, Wo});
    for (std::size_t r = 0; r < Ho; ++r) {
        for (std::size_t c = 0; c < Wo; ++c) {
            xs(r, c) = static_cast<T>(resize_source_coord(c, x.extent(2), Wo));
            ys(r, c) = static_cast<T>(resize_source_coord(r, x.extent(1), Ho));
        }
    }
    return bilinear_sample(x, xs, ys);
}

}  // namespace vcod
