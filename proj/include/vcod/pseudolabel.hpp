#pragma once

// Flow-based pseudo ground truth: masks annotated on frame t are pulled onto
// frames t+1..t+4 by inverse warping, binarised, and pixels that fail the
// forward-backward consistency check are reset to background.
//
// Flow convention: a field attached to frame B's grid that warps frame A's
// content onto B stores, for every pixel (x, y) of B, the displacement to its
// source position (x + u_x, y + u_y) in A.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vcod/errors.hpp"
#include "vcod/image_io.hpp"
#include "vcod/numerics.hpp"

namespace vcod {

struct FlowField {
    DenseArray u_x;  // H x W, horizontal displacement in pixels
    DenseArray u_y;  // H x W, vertical displacement in pixels

    FlowField() = default;
    FlowField(DenseArray ux, DenseArray uy) : u_x(std::move(ux)), u_y(std::move(uy)) {
        if (u_x.rank() != 2 || u_x.shape() != u_y.shape()) {
            throw DimensionError("flow components must be matching H x W arrays");
        }
        if (!all_finite(u_x) || !all_finite(u_y)) throw InputError("flow field contains non-finite values");
    }
    static FlowField constant(std::size_t height, std::size_t width, double dx, double dy) {
        return {DenseArray({height, width}, dx), DenseArray({height, width}, dy)};
    }

    std::size_t height() const { return u_x.extent(0); }
    std::size_t width() const { return u_x.extent(1); }
};

enum class MaskKind { probability, binary };

class MaskImage {
public:
    MaskImage() = default;
    MaskImage(DenseArray values, MaskKind kind) : values_(std::move(values)), kind_(kind) {
        if (values_.rank() != 2) throw DimensionError("mask must be H x W, got " + shape_string(values_.shape()));
        for (double v : values_.values()) {
            if (kind_ == MaskKind::binary ? (v != 0.0 && v != 1.0) : !(v >= 0.0 && v <= 1.0)) {
                throw InputError(kind_ == MaskKind::binary ? "binary mask holds a value outside {0,1}"
                                                           : "probability mask holds a value outside [0,1]");
            }
        }
    }
    MaskImage(std::size_t height, std::size_t width, MaskKind kind, double fill = 0.0)
        : MaskImage(DenseArray({height, width}, fill), kind) {}

    std::size_t height() const { return values_.extent(0); }
    std::size_t width() const { return values_.extent(1); }
    MaskKind kind() const { return kind_; }
    const DenseArray& values() const noexcept { return values_; }
    double operator()(std::size_t r, std::size_t c) const { return values_(r, c); }

    bool operator==(const MaskImage&) const = default;

private:
    DenseArray values_;
    MaskKind kind_ = MaskKind::probability;
};

// 1 marks a flow-consistent pixel.
using ValidityMask = MaskImage;

// ---------------------------------------------------------------------------
// .flo files: "PIEH", int32 width, int32 height, then (u, v) float32 pairs in
// row-major order, all little-endian.

namespace detail {
inline std::uint32_t load_le32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline void store_le32(unsigned char* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}
}  // namespace detail

inline FlowField read_flow_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open flow file " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12) throw FormatError(path.string() + ": truncated .flo header");
    if (std::memcmp(bytes.data(), "PIEH", 4) != 0) throw FormatError(path.string() + ": bad .flo magic tag");
    const auto width = static_cast<std::int32_t>(detail::load_le32(bytes.data() + 4));
    const auto height = static_cast<std::int32_t>(detail::load_le32(bytes.data() + 8));
    if (width < 1 || height < 1) throw FormatError(path.string() + ": invalid .flo extents");
    const auto H = static_cast<std::size_t>(height), W = static_cast<std::size_t>(width);
    if (bytes.size() != 12 + H * W * 8) {
        throw FormatError(path.string() + ": payload holds " + std::to_string(bytes.size() - 12) + " bytes, expected " +
                          std::to_string(H * W * 8));
    }
    DenseArray ux({H, W}), uy({H, W});
    const unsigned char* p = bytes.data() + 12;
    for (std::size_t i = 0; i < H * W; ++i, p += 8) {
        ux[i] = std::bit_cast<float>(detail::load_le32(p));
        uy[i] = std::bit_cast<float>(detail::load_le32(p + 4));
    }
    if (!all_finite(ux) || !all_finite(uy)) throw FormatError(path.string() + ": non-finite flow values");
    return {std::move(ux), std::move(uy)};
}

// Values are stored as float32; doubles that are not representable round.
inline void write_flow_file(const std::filesystem::path& path, const FlowField& flow) {
    const auto H = flow.height(), W = flow.width();
    std::vector<unsigned char> bytes(12 + H * W * 8);
    std::memcpy(bytes.data(), "PIEH", 4);
    detail::store_le32(bytes.data() + 4, static_cast<std::uint32_t>(W));
    detail::store_le32(bytes.data() + 8, static_cast<std::uint32_t>(H));
    unsigned char* p = bytes.data() + 12;
    for (std::size_t i = 0; i < H * W; ++i, p += 8) {
        detail::store_le32(p, std::bit_cast<std::uint32_t>(static_cast<float>(flow.u_x[i])));
        detail::store_le32(p + 4, std::bit_cast<std::uint32_t>(static_cast<float>(flow.u_y[i])));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot create flow file " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("failed writing flow file " + path.string());
}

// ---------------------------------------------------------------------------
// Mask PNGs: foreground 255, background 0.

inline MaskImage read_mask_png(const std::filesystem::path& path) {
    const auto img = read_png_gray(path);
    DenseArray v({img.height, img.width});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] >= 128 ? 1.0 : 0.0;
    return {std::move(v), MaskKind::binary};
}

inline MaskImage read_probability_png(const std::filesystem::path& path) {
    const auto img = read_png_gray(path);
    DenseArray v({img.height, img.width});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
    return {std::move(v), MaskKind::probability};
}

inline void write_mask_png(const std::filesystem::path& path, const MaskImage& mask) {
    GrayImage img{mask.height(), mask.width(), std::vector<std::uint8_t>(mask.values().size())};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(mask.values()[i] * 255.0));
    }
    write_png_gray(path, img);
}

// ---------------------------------------------------------------------------

namespace detail {
inline void require_same_extents(std::size_t h1, std::size_t w1, std::size_t h2, std::size_t w2, const char* op) {
    if (h1 != h2 || w1 != w2) {
        throw DimensionError(std::string(op) + ": extents " + std::to_string(h1) + "x" + std::to_string(w1) +
                             " and " + std::to_string(h2) + "x" + std::to_string(w2) + " differ");
    }
}

// Source coordinates (x + u_x, y + u_y) for every pixel of the flow grid.
inline std::pair<DenseArray, DenseArray> displaced_grid(const FlowField& flow) {
    DenseArray xs({flow.height(), flow.width()}), ys({flow.height(), flow.width()});
    for (std::size_t r = 0; r < flow.height(); ++r) {
        for (std::size_t c = 0; c < flow.width(); ++c) {
            xs(r, c) = static_cast<double>(c) + flow.u_x(r, c);
            ys(r, c) = static_cast<double>(r) + flow.u_y(r, c);
        }
    }
    return {std::move(xs), std::move(ys)};
}
}  // namespace detail

// output(x, y) = gt(x + u_x(x, y), y + u_y(x, y)), border-clamped.
inline MaskImage warp_mask(const MaskImage& gt, const FlowField& flow) {
    detail::require_same_extents(gt.height(), gt.width(), flow.height(), flow.width(), "warp_mask");
    const auto [xs, ys] = detail::displaced_grid(flow);
    auto out = bilinear_sample(gt.values().reshaped({1, gt.height(), gt.width()}), xs, ys);
    // Interpolating values in [0,1] stays in [0,1] up to rounding.
    for (auto& v : out.values()) v = std::clamp(v, 0.0, 1.0);
    return {out.reshaped({gt.height(), gt.width()}), MaskKind::probability};
}

struct ConsistencyParams {
    double alpha = 0.01;
    double beta = 0.5;
};

// Valid iff |f(p) + b(p + f(p))|^2 <= alpha (|f(p)|^2 + |b(p + f(p))|^2) + beta,
// with b read bilinearly.
inline ValidityMask fb_consistency(const FlowField& fwd, const FlowField& bwd, ConsistencyParams params = {}) {
    detail::require_same_extents(fwd.height(), fwd.width(), bwd.height(), bwd.width(), "fb_consistency");
    if (!(params.alpha >= 0.0) || !(params.beta >= 0.0)) throw InputError("fb_consistency: alpha and beta must be >= 0");
    const auto H = fwd.height(), W = fwd.width();
    const auto [xs, ys] = detail::displaced_grid(fwd);
    const auto bx = bilinear_sample(bwd.u_x.reshaped({1, H, W}), xs, ys);
    const auto by = bilinear_sample(bwd.u_y.reshaped({1, H, W}), xs, ys);
    DenseArray valid({H, W});
    for (std::size_t i = 0; i < H * W; ++i) {
        const double fx = fwd.u_x[i], fy = fwd.u_y[i];
        const double rx = fx + bx[i], ry = fy + by[i];
        const double lhs = rx * rx + ry * ry;
        const double rhs = params.alpha * (fx * fx + fy * fy + bx[i] * bx[i] + by[i] * by[i]) + params.beta;
        valid[i] = lhs <= rhs ? 1.0 : 0.0;
    }
    return {std::move(valid), MaskKind::binary};
}

inline MaskImage binarize(const MaskImage& m, double threshold) {
    DenseArray out(m.values().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.values()[i] >= threshold ? 1.0 : 0.0;
    return {std::move(out), MaskKind::binary};
}

struct PseudoLabelParams {
    double binarize_threshold = 0.5;
    ConsistencyParams consistency{};
};

inline constexpr std::size_t kPseudoOffsets = 4;

// One pseudo mask for a single offset: warp, binarise, drop inconsistent pixels.
// `to_target` lives on the target grid and points into frame t; `to_source`
// is the reverse field on frame t's grid.
inline MaskImage pseudo_mask(const MaskImage& gt_t, const FlowField& to_target, const FlowField& to_source,
                             const PseudoLabelParams& params = {}) {
    const auto warped = binarize(warp_mask(gt_t, to_target), params.binarize_threshold);
    const auto valid = fb_consistency(to_target, to_source, params.consistency);
    DenseArray out(warped.values().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = warped.values()[i] * valid.values()[i];
    return {std::move(out), MaskKind::binary};
}

// Pseudo masks for frames t+1..t+4 from the annotation of frame t.
inline std::array<MaskImage, kPseudoOffsets> generate_pseudo_masks(const MaskImage& gt_t,
                                                                   std::span<const std::optional<FlowField>> fwd_flows,
                                                                   std::span<const std::optional<FlowField>> bwd_flows,
                                                                   const PseudoLabelParams& params = {}) {
    if (gt_t.kind() != MaskKind::binary) throw InputError("generate_pseudo_masks: gt must be a binary mask");
    if (fwd_flows.size() != kPseudoOffsets || bwd_flows.size() != kPseudoOffsets) {
        throw InputError("generate_pseudo_masks: expected flows for offsets 1..4");
    }
    for (std::size_t n = 0; n < kPseudoOffsets; ++n) {
        if (!fwd_flows[n] || !bwd_flows[n]) {
            throw InputError("generate_pseudo_masks: missing flow for offset " + std::to_string(n + 1));
        }
    }
    std::array<MaskImage, kPseudoOffsets> out;
    for (std::size_t n = 0; n < kPseudoOffsets; ++n) out[n] = pseudo_mask(gt_t, *fwd_flows[n], *bwd_flows[n], params);
    return out;
}

}  // namespace vcod
