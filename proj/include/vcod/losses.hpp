#pragma once

// Training objectives on a probability map against a binary mask: boundary-
// weighted cross-entropy, weighted IoU, and the continuous enhanced-alignment
// loss. wce and wiou carry analytic gradients with respect to the prediction.

#include <cmath>
#include <map>
#include <string>

#include "vcod/errors.hpp"
#include "vcod/metrics.hpp"
#include "vcod/numerics.hpp"
#include "vcod/pseudolabel.hpp"

namespace vcod {

struct LossParams {
    double lambda = 5.0;
    std::size_t window = 31;
    double clamp_eps = 1e-7;
    double smooth = 1.0;
};

struct LossValue {
    double total = 0;
    std::map<std::string, double> components;
};

namespace detail {
inline void require_loss_inputs(const MaskImage& pred, const MaskImage& gt, const char* op) {
    if (gt.kind() != MaskKind::binary) throw InputError(std::string(op) + ": gt must be binary");
    if (pred.height() != gt.height() || pred.width() != gt.width()) {
        throw DimensionError(std::string(op) + ": prediction " + shape_string(pred.values().shape()) + " vs gt " +
                             shape_string(gt.values().shape()));
    }
}
inline void require_weights(const DenseArray& w, const MaskImage& gt, const char* op) {
    if (w.shape() != gt.values().shape()) throw DimensionError(std::string(op) + ": weight map extent mismatch");
}
}  // namespace detail

// w = 1 + lambda * |avgpool(gt) - gt|. Padding taps are excluded from the
// average so a constant mask gets w = 1 right up to the border.
inline DenseArray pixel_weights(const MaskImage& gt, const LossParams& params = {}) {
    if (gt.kind() != MaskKind::binary) throw InputError("pixel_weights: gt must be binary");
    if (params.window == 0 || params.window % 2 == 0) throw InputError("pixel_weights: window must be odd");
    const auto H = gt.height(), W = gt.width();
    const auto pooled =
        avg_pool2d(gt.values().reshaped({1, H, W}), params.window, 1, params.window / 2, false).reshaped({H, W});
    DenseArray w({H, W});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 + params.lambda * std::abs(pooled[i] - gt.values()[i]);
    return w;
}

// Sum w * CE / Sum w with the prediction clamped to [eps, 1 - eps].
inline double weighted_ce(const MaskImage& pred, const MaskImage& gt, const DenseArray& w, const LossParams& params = {}) {
    detail::require_loss_inputs(pred, gt, "weighted_ce");
    detail::require_weights(w, gt, "weighted_ce");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double p = std::clamp(pred.values()[i], params.clamp_eps, 1.0 - params.clamp_eps);
        const double g = gt.values()[i];
        num += w[i] * (-g * std::log(p) - (1 - g) * std::log(1 - p));
        den += w[i];
    }
    return num / den;
}

// dL/dp; zero where the clamp is active.
inline DenseArray weighted_ce_grad(const MaskImage& pred, const MaskImage& gt, const DenseArray& w,
                                   const LossParams& params = {}) {
    detail::require_loss_inputs(pred, gt, "weighted_ce_grad");
    detail::require_weights(w, gt, "weighted_ce_grad");
    const double den = sum(w);
    DenseArray d(w.shape(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double p = pred.values()[i];
        if (p < params.clamp_eps || p > 1.0 - params.clamp_eps) continue;
        const double g = gt.values()[i];
        d[i] = w[i] * (-g / p + (1 - g) / (1 - p)) / den;
    }
    return d;
}

// 1 - (I + s) / (U + s), I = Sum w p g, U = Sum w (p + g - p g). No clamp:
// a prediction equal to the mask scores exactly zero.
inline double weighted_iou(const MaskImage& pred, const MaskImage& gt, const DenseArray& w, const LossParams& params = {}) {
    detail::require_loss_inputs(pred, gt, "weighted_iou");
    detail::require_weights(w, gt, "weighted_iou");
    double inter = 0, uni = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double p = pred.values()[i], g = gt.values()[i];
        inter += w[i] * p * g;
        uni += w[i] * (p + g - p * g);
    }
    return 1.0 - (inter + params.smooth) / (uni + params.smooth);
}

inline DenseArray weighted_iou_grad(const MaskImage& pred, const MaskImage& gt, const DenseArray& w,
                                    const LossParams& params = {}) {
    detail::require_loss_inputs(pred, gt, "weighted_iou_grad");
    detail::require_weights(w, gt, "weighted_iou_grad");
    double inter = 0, uni = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double p = pred.values()[i], g = gt.values()[i];
        inter += w[i] * p * g;
        uni += w[i] * (p + g - p * g);
    }
    const double I = inter + params.smooth, U = uni + params.smooth;
    DenseArray d(w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = gt.values()[i];
        d[i] = -(w[i] * g * U - I * w[i] * (1 - g)) / (U * U);
    }
    return d;
}

// 1 - E of the continuous map (no thresholding).
inline double e_loss(const MaskImage& pred, const MaskImage& gt) {
    detail::require_loss_inputs(pred, gt, "e_loss");
    return 1.0 - e_measure(pred.values(), gt.values());
}

inline LossValue short_loss(const MaskImage& pred, const MaskImage& gt, const LossParams& params = {}) {
    const auto w = pixel_weights(gt, params);
    LossValue v;
    v.components["wce"] = weighted_ce(pred, gt, w, params);
    v.components["wiou"] = weighted_iou(pred, gt, w, params);
    v.total = v.components["wce"] + v.components["wiou"];
    return v;
}

inline DenseArray short_loss_grad(const MaskImage& pred, const MaskImage& gt, const LossParams& params = {}) {
    const auto w = pixel_weights(gt, params);
    return weighted_ce_grad(pred, gt, w, params) + weighted_iou_grad(pred, gt, w, params);
}

inline LossValue hybrid_loss(const MaskImage& pred, const MaskImage& gt, const LossParams& params = {}) {
    auto v = short_loss(pred, gt, params);
    v.components["e"] = e_loss(pred, gt);
    v.total = v.components["wce"] + v.components["wiou"] + v.components["e"];
    return v;
}

}  // namespace vcod
