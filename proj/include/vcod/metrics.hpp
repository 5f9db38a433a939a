#pragma once

// Segmentation measures for camouflaged-object masks: MAE, threshold-swept
// Dice/IoU, structure measure, mean enhanced-alignment measure and weighted
// F-measure. Conventions follow the widely used MATLAB evaluation toolbox;
// per-threshold binarisation is `prediction > k/255` for k = 0..255.

#include <array>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vcod/errors.hpp"
#include "vcod/numerics.hpp"
#include "vcod/pseudolabel.hpp"

namespace vcod {

inline constexpr std::size_t kThresholdCount = 256;
inline constexpr double kMetricEps = DBL_EPSILON;

struct FramePair {
    MaskImage prediction;
    MaskImage groundtruth;

    FramePair(MaskImage pred, MaskImage gt) : prediction(std::move(pred)), groundtruth(std::move(gt)) {
        if (groundtruth.kind() != MaskKind::binary) throw InputError("FramePair: groundtruth must be binary");
        if (prediction.height() != groundtruth.height() || prediction.width() != groundtruth.width()) {
            throw DimensionError("FramePair: prediction " + shape_string(prediction.values().shape()) +
                                 " vs groundtruth " + shape_string(groundtruth.values().shape()));
        }
    }
    std::size_t pixels() const { return groundtruth.values().size(); }
};

struct FrameMetrics {
    double s_alpha = 0, f_beta_w = 0, e_phi_mean = 0, mae = 0, m_dice = 0, m_iou = 0;
};

struct MetricReport {
    double s_alpha = 0, f_beta_w = 0, e_phi_mean = 0, mae = 0, m_dice = 0, m_iou = 0;
    std::size_t frame_count = 0;
};

// ---------------------------------------------------------------------------

inline double mae(const FramePair& p) {
    const auto& a = p.prediction.values();
    const auto& b = p.groundtruth.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

// Confusion counts of the binarised prediction at every threshold.
struct ThresholdCounts {
    std::array<double, kThresholdCount> tp{}, fp{};
    double positives = 0;  // |G|
    double pixels = 0;
};

inline double threshold_value(std::size_t k) { return static_cast<double>(k) / 255.0; }

namespace detail {
// Largest k with v > k/255, or -1 when v is below every threshold.
inline long last_threshold_passed(double v) {
    long k = std::clamp(static_cast<long>(std::floor(v * 255.0)), -1L, 255L);
    while (k < 255 && v > threshold_value(static_cast<std::size_t>(k + 1))) ++k;
    while (k >= 0 && !(v > threshold_value(static_cast<std::size_t>(k)))) --k;
    return k;
}
}  // namespace detail

inline ThresholdCounts threshold_counts(const FramePair& p) {
    ThresholdCounts out;
    std::array<double, kThresholdCount + 1> hist_fg{}, hist_bg{};
    const auto& pred = p.prediction.values();
    const auto& gt = p.groundtruth.values();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const long k = detail::last_threshold_passed(pred[i]);
        if (k < 0) continue;
        (gt[i] > 0.5 ? hist_fg : hist_bg)[static_cast<std::size_t>(k)] += 1.0;
    }
    double tp = 0, fp = 0;
    for (long k = 255; k >= 0; --k) {
        tp += hist_fg[static_cast<std::size_t>(k)];
        fp += hist_bg[static_cast<std::size_t>(k)];
        out.tp[static_cast<std::size_t>(k)] = tp;
        out.fp[static_cast<std::size_t>(k)] = fp;
    }
    out.positives = sum(gt);
    out.pixels = static_cast<double>(gt.size());
    return out;
}

// Dice = 2|P∩G| / (|P|+|G|), 1 when both are empty.
inline double dice_from_counts(double tp, double fp, double positives) {
    const double denom = tp + fp + positives;
    return denom == 0.0 ? 1.0 : 2.0 * tp / denom;
}
// IoU = |P∩G| / |P∪G|, 1 when both are empty.
inline double iou_from_counts(double tp, double fp, double positives) {
    const double uni = positives + fp;
    return uni == 0.0 ? 1.0 : tp / uni;
}

inline double mean_dice(const FramePair& p) {
    const auto c = threshold_counts(p);
    double acc = 0;
    for (std::size_t k = 0; k < kThresholdCount; ++k) acc += dice_from_counts(c.tp[k], c.fp[k], c.positives);
    return acc / kThresholdCount;
}

inline double mean_iou(const FramePair& p) {
    const auto c = threshold_counts(p);
    double acc = 0;
    for (std::size_t k = 0; k < kThresholdCount; ++k) acc += iou_from_counts(c.tp[k], c.fp[k], c.positives);
    return acc / kThresholdCount;
}

// ---------------------------------------------------------------------------
// Enhanced alignment

inline double enhanced_alignment(double f_centered, double g_centered) {
    const double align = 2.0 * f_centered * g_centered / (f_centered * f_centered + g_centered * g_centered + kMetricEps);
    return (align + 1.0) * (align + 1.0) / 4.0;
}

// E-measure of a foreground map in [0,1] (binary or continuous) against a
// binary gt. The score is the mean of the enhanced alignment matrix.
inline double e_measure(const DenseArray& fm, const DenseArray& gt) {
    if (fm.shape() != gt.shape()) throw DimensionError("e_measure: extent mismatch");
    const double n = static_cast<double>(gt.size());
    const double g_sum = sum(gt);
    if (g_sum == 0.0) return 1.0 - mean(fm);
    if (g_sum == n) return mean(fm);
    const double mu_f = mean(fm), mu_g = g_sum / n;
    double acc = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) acc += enhanced_alignment(fm[i] - mu_f, gt[i] - mu_g);
    return acc / n;
}

// Per-threshold E values from confusion counts. A binary map and a binary gt
// leave only four distinct alignment values, weighted by their counts.
inline double e_measure_from_counts(double tp, double fp, double positives, double pixels) {
    const double fg = tp + fp;
    if (positives == 0.0) return 1.0 - fg / pixels;
    if (positives == pixels) return fg / pixels;
    const double mu_f = fg / pixels, mu_g = positives / pixels;
    const double fn = positives - tp, tn = pixels - positives - fp;
    return (tp * enhanced_alignment(1 - mu_f, 1 - mu_g) + fp * enhanced_alignment(1 - mu_f, -mu_g) +
            fn * enhanced_alignment(-mu_f, 1 - mu_g) + tn * enhanced_alignment(-mu_f, -mu_g)) /
           pixels;
}

inline double e_measure_mean(const FramePair& p) {
    const auto c = threshold_counts(p);
    double acc = 0;
    for (std::size_t k = 0; k < kThresholdCount; ++k) acc += e_measure_from_counts(c.tp[k], c.fp[k], c.positives, c.pixels);
    return acc / kThresholdCount;
}

// ---------------------------------------------------------------------------
// Structure measure

namespace detail {

// Plain rectangular view into an H x W array.
struct Region {
    const DenseArray* a;
    std::size_t r0, r1, c0, c1;  // half-open
    std::size_t count() const { return (r1 - r0) * (c1 - c0); }
    template <typename F>
    void each(F&& f) const {
        for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = c0; c < c1; ++c) f((*a)(r, c), r, c);
    }
};

inline double object_score(const DenseArray& pred, const DenseArray& gt, bool foreground) {
    double n = 0, s = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if ((gt[i] > 0.5) != foreground) continue;
        s += foreground ? pred[i] : 1.0 - pred[i];
        n += 1;
    }
    if (n == 0) return 0.0;
    const double x = s / n;
    double ss = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if ((gt[i] > 0.5) != foreground) continue;
        const double v = (foreground ? pred[i] : 1.0 - pred[i]) - x;
        ss += v * v;
    }
    const double sigma = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    return 2.0 * x / (x * x + 1.0 + sigma + kMetricEps);
}

inline double s_object(const DenseArray& pred, const DenseArray& gt) {
    const double u = mean(gt);
    return u * object_score(pred, gt, true) + (1 - u) * object_score(pred, gt, false);
}

inline double region_ssim(const Region& p, const Region& g) {
    const double n = static_cast<double>(p.count());
    if (n == 0) return 0.0;
    double sx = 0, sy = 0;
    p.each([&](double v, auto, auto) { sx += v; });
    g.each([&](double v, auto, auto) { sy += v; });
    const double x = sx / n, y = sy / n;
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t r = p.r0; r < p.r1; ++r) {
        for (std::size_t c = p.c0; c < p.c1; ++c) {
            const double dx = (*p.a)(r, c) - x, dy = (*g.a)(r, c) - y;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    }
    const double denom = n - 1 + kMetricEps;
    const double alpha = 4 * x * y * (cxy / denom);
    const double beta = (x * x + y * y) * (vx / denom + vy / denom);
    if (alpha != 0) return alpha / (beta + kMetricEps);
    return beta == 0 ? 1.0 : 0.0;
}

inline double s_region(const DenseArray& pred, const DenseArray& gt) {
    const auto H = gt.extent(0), W = gt.extent(1);
    const double total = sum(gt);
    // 1-based centroid rounded half away from zero
    std::size_t X = 0, Y = 0;
    if (total == 0) {
        X = static_cast<std::size_t>(std::round(W / 2.0));
        Y = static_cast<std::size_t>(std::round(H / 2.0));
    } else {
        double sx = 0, sy = 0;
        for (std::size_t r = 0; r < H; ++r) {
            for (std::size_t c = 0; c < W; ++c) {
                sx += gt(r, c) * static_cast<double>(c + 1);
                sy += gt(r, c) * static_cast<double>(r + 1);
            }
        }
        X = static_cast<std::size_t>(std::round(sx / total));
        Y = static_cast<std::size_t>(std::round(sy / total));
    }
    const double area = static_cast<double>(H * W);
    const double w1 = double(X * Y) / area, w2 = double((W - X) * Y) / area, w3 = double(X * (H - Y)) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    const std::array<std::array<std::size_t, 4>, 4> quads{{{0, Y, 0, X}, {0, Y, X, W}, {Y, H, 0, X}, {Y, H, X, W}}};
    const std::array<double, 4> w{w1, w2, w3, w4};
    double q = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& b = quads[i];
        q += w[i] * region_ssim({&pred, b[0], b[1], b[2], b[3]}, {&gt, b[0], b[1], b[2], b[3]});
    }
    return q;
}

}  // namespace detail

inline constexpr double kStructureAlpha = 0.5;

inline double s_measure(const FramePair& p) {
    const auto& pred = p.prediction.values();
    const auto& gt = p.groundtruth.values();
    const double y = mean(gt);
    if (y == 0.0) return 1.0 - mean(pred);
    if (y == 1.0) return mean(pred);
    const double q = kStructureAlpha * detail::s_object(pred, gt) + (1 - kStructureAlpha) * detail::s_region(pred, gt);
    return std::max(q, 0.0);
}

// ---------------------------------------------------------------------------
// Weighted F-measure

// Exact squared Euclidean distance to the nearest foreground pixel (separable
// lower-envelope transform). Pixels with no foreground get +inf.
inline DenseArray squared_distance_to_foreground(const DenseArray& gt) {
    const auto H = gt.extent(0), W = gt.extent(1);
    constexpr double inf = std::numeric_limits<double>::infinity();
    auto transform_1d = [inf](std::span<const double> f, std::span<double> d) {
        const std::size_t n = f.size();
        std::vector<std::size_t> v(n);
        std::vector<double> z(n + 1);
        std::size_t k = 0;
        bool any = false;
        for (std::size_t q = 0; q < n; ++q) {
            if (!std::isfinite(f[q])) continue;
            if (!any) {
                v[0] = q;
                z[0] = -inf;
                z[1] = inf;
                any = true;
                continue;
            }
            double s = 0;
            while (true) {
                const auto p = v[k];
                s = ((f[q] + double(q) * double(q)) - (f[p] + double(p) * double(p))) / (2.0 * (double(q) - double(p)));
                if (s <= z[k] && k > 0) {
                    --k;
                    continue;
                }
                break;
            }
            if (s <= z[k]) {  // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                z[0] = -inf;
                z[1] = inf;
                continue;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = inf;
        }
        if (!any) {
            std::fill(d.begin(), d.end(), inf);
            return;
        }
        k = 0;
        for (std::size_t q = 0; q < n; ++q) {
            while (z[k + 1] < double(q)) ++k;
            const double dq = double(q) - double(v[k]);
            d[q] = dq * dq + f[v[k]];
        }
    };
    DenseArray cols({H, W});
    std::vector<double> f(H), d(H);
    for (std::size_t c = 0; c < W; ++c) {
        for (std::size_t r = 0; r < H; ++r) f[r] = gt(r, c) > 0.5 ? 0.0 : inf;
        transform_1d(f, d);
        for (std::size_t r = 0; r < H; ++r) cols(r, c) = d[r];
    }
    DenseArray out({H, W});
    std::vector<double> g(W), e(W);
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) g[c] = cols(r, c);
        transform_1d(g, e);
        for (std::size_t c = 0; c < W; ++c) out(r, c) = e[c];
    }
    return out;
}

inline DenseArray gaussian_kernel(std::size_t size, double sigma) {
    DenseArray k({1, 1, size, size});
    const double half = (static_cast<double>(size) - 1) / 2;
    double total = 0;
    for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t c = 0; c < size; ++c) {
            const double y = double(r) - half, x = double(c) - half;
            k(0, 0, r, c) = std::exp(-(x * x + y * y) / (2 * sigma * sigma));
            total += k(0, 0, r, c);
        }
    }
    for (auto& v : k.values()) v /= total;
    return k;
}

inline constexpr std::size_t kWeightedFKernel = 7;
inline constexpr double kWeightedFSigma = 5.0;
inline constexpr double kWeightedFBeta2 = 1.0;

inline double weighted_f(const FramePair& p) {
    const auto& pred = p.prediction.values();
    const auto& gt = p.groundtruth.values();
    const auto H = gt.extent(0), W = gt.extent(1);
    if (sum(gt) == 0.0) return 0.0;

    DenseArray err = map(zip(pred, gt, std::minus<double>{}), [](double v) { return std::abs(v); });
    const auto dist2 = squared_distance_to_foreground(gt);

    // Background pixels take the error of their nearest foreground pixel;
    // equidistant candidates are averaged so the result has no scan-order bias.
    DenseArray et = err;
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) {
            if (gt(r, c) > 0.5) continue;
            const auto d2 = static_cast<long>(std::llround(dist2(r, c)));
            const auto radius = static_cast<long>(std::floor(std::sqrt(double(d2))));
            double acc = 0;
            int n = 0;
            for (long dy = -radius; dy <= radius; ++dy) {
                const long rem = d2 - dy * dy;
                const auto dx0 = static_cast<long>(std::llround(std::sqrt(double(rem))));
                if (dx0 * dx0 != rem) continue;
                const long rr = static_cast<long>(r) + dy;
                if (rr < 0 || rr >= static_cast<long>(H)) continue;
                for (long dx : {-dx0, dx0}) {
                    const long cc = static_cast<long>(c) + dx;
                    if (cc < 0 || cc >= static_cast<long>(W)) continue;
                    if (gt(std::size_t(rr), std::size_t(cc)) > 0.5) {
                        acc += err(std::size_t(rr), std::size_t(cc));
                        ++n;
                    }
                    if (dx0 == 0) break;
                }
            }
            et(r, c) = acc / n;
        }
    }

    const auto ea = conv2d(et.reshaped({1, H, W}), gaussian_kernel(kWeightedFKernel, kWeightedFSigma), 1,
                           kWeightedFKernel / 2)
                        .reshaped({H, W});
    const double decay = std::log(0.5) / 5.0;
    double tpw = 0, fpw = 0, ew_fg = 0, n_fg = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] > 0.5) {
            const double ew = std::min(err[i], ea[i]);
            ew_fg += ew;
            n_fg += 1;
        } else {
            fpw += err[i] * (2.0 - std::exp(decay * std::sqrt(dist2[i])));
        }
    }
    tpw = n_fg - ew_fg;
    const double recall = 1.0 - ew_fg / n_fg;
    const double precision = tpw / (kMetricEps + tpw + fpw);
    return (1 + kWeightedFBeta2) * recall * precision / (kMetricEps + recall + kWeightedFBeta2 * precision);
}

// ---------------------------------------------------------------------------

inline FrameMetrics evaluate_frame(const FramePair& p) {
    const auto c = threshold_counts(p);
    double dice = 0, iou = 0, em = 0;
    for (std::size_t k = 0; k < kThresholdCount; ++k) {
        dice += dice_from_counts(c.tp[k], c.fp[k], c.positives);
        iou += iou_from_counts(c.tp[k], c.fp[k], c.positives);
        em += e_measure_from_counts(c.tp[k], c.fp[k], c.positives, c.pixels);
    }
    FrameMetrics m;
    m.s_alpha = s_measure(p);
    m.f_beta_w = weighted_f(p);
    m.e_phi_mean = em / kThresholdCount;
    m.mae = mae(p);
    m.m_dice = dice / kThresholdCount;
    m.m_iou = iou / kThresholdCount;
    return m;
}

// Unweighted mean over frames.
inline MetricReport aggregate(std::span<const FrameMetrics> frames) {
    if (frames.empty()) throw InputError("aggregate: no frames to average");
    MetricReport r;
    for (const auto& f : frames) {
        r.s_alpha += f.s_alpha;
        r.f_beta_w += f.f_beta_w;
        r.e_phi_mean += f.e_phi_mean;
        r.mae += f.mae;
        r.m_dice += f.m_dice;
        r.m_iou += f.m_iou;
    }
    const double n = static_cast<double>(frames.size());
    r.s_alpha /= n;
    r.f_beta_w /= n;
    r.e_phi_mean /= n;
    r.mae /= n;
    r.m_dice /= n;
    r.m_iou /= n;
    r.frame_count = frames.size();
    return r;
}

struct GroupedReport {
    std::map<std::string, MetricReport> per_group;
    MetricReport overall;
};

// Frames tagged by group name (a sequence). The overall row averages frames,
// not groups.
inline GroupedReport aggregate_by_group(std::span<const std::pair<std::string, FrameMetrics>> tagged) {
    if (tagged.empty()) throw InputError("aggregate_by_group: no frames");
    std::map<std::string, std::vector<FrameMetrics>> groups;
    std::vector<FrameMetrics> all;
    all.reserve(tagged.size());
    for (const auto& [name, m] : tagged) {
        groups[name].push_back(m);
        all.push_back(m);
    }
    GroupedReport out;
    for (const auto& [name, ms] : groups) out.per_group[name] = aggregate(ms);
    out.overall = aggregate(all);
    return out;
}

}  // namespace vcod
