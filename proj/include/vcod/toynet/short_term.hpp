#pragma once

// Short-term detector at toy scale.
//
// Stand-ins for the cited components:
//   backbone      4 strided conv stages, C x H/2^(i+1) x W/2^(i+1), i = 1..4
//   texture block x + conv3x3(relu(conv1x1(x))) on stages 2..4 (side branch)
//   decoder       per-scale conv3x3 -> relu -> conv1x1 -> 1 logit, bilinear
//                 upsample, summed
// The correlation pyramid runs between the texture-block outputs of the
// reference frame and of frames t+1 (and t+2, fused by a 1x1 conv).

#include <array>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "vcod/corrpyr.hpp"
#include "vcod/losses.hpp"
#include "vcod/pseudolabel.hpp"
#include "vcod/toynet/layers.hpp"

namespace vcod::toynet {

inline constexpr std::size_t kChannels = 32;
inline constexpr std::size_t kStages = 4;
inline constexpr std::size_t kScales = 3;  // pyramid scales = stages 2..4

struct ShortTermModel {
    std::size_t channels = kChannels;
    std::array<ConvParams, kStages> encoder;
    std::array<ConvParams, kScales> tem_reduce;  // 1x1
    std::array<ConvParams, kScales> tem_expand;  // 3x3
    std::array<ConvParams, kScales> phi;         // 1x1, shared by both neighbours
    std::array<ConvParams, kScales> fuse;        // 1x1, 2C -> C
    std::array<ConvParams, kScales> head;        // 3x3, C -> C, relu
    std::array<ConvParams, kScales> decoder;     // 1x1, C -> 1
    PoolSchedule schedule{};

    static ShortTermModel random(std::uint64_t seed, std::size_t channels = kChannels) {
        std::mt19937_64 rng(seed);
        ShortTermModel m;
        m.channels = channels;
        const double relu_gain = std::sqrt(2.0);
        m.encoder[0] = make_conv(rng, channels, 3, 4, 4, 0, relu_gain);
        for (std::size_t s = 1; s < kStages; ++s) m.encoder[s] = make_conv(rng, channels, channels, 3, 2, 1, relu_gain);
        for (std::size_t s = 0; s < kScales; ++s) {
            m.tem_reduce[s] = make_conv(rng, channels, channels, 1, 1, 0, relu_gain);
            m.tem_expand[s] = make_conv(rng, channels, channels, 3, 1, 1, 0.5);
            m.phi[s] = make_conv(rng, channels, channels, 1, 1, 0, 1.0);
            m.fuse[s] = make_conv(rng, channels, 2 * channels, 1, 1, 0, 1.0);
            m.head[s] = make_conv(rng, channels, channels, 3, 1, 1, relu_gain);
            m.decoder[s] = make_conv(rng, 1, channels, 1, 1, 0, 0.5);
        }
        return m;
    }

    // Same shapes, all zeros: the layout used for gradients and optimiser state.
    ShortTermModel zeros_like() const {
        ShortTermModel z = *this;
        z.for_each_parameter([](const std::string&, DenseArray& a) { std::fill(a.values().begin(), a.values().end(), 0.0); });
        return z;
    }

    // Visits every trainable array in a fixed order with a stable name.
    template <typename F>
    void for_each_parameter(F&& f) {
        visit(*this, f);
    }
    template <typename F>
    void for_each_parameter(F&& f) const {
        visit(*this, f);
    }

private:
    template <typename Self, typename F>
    static void visit(Self& self, F& f) {
        auto conv = [&](const std::string& name, auto& p) {
            f(name + ".weight", p.weight);
            f(name + ".bias", p.bias);
        };
        for (std::size_t s = 0; s < kStages; ++s) conv("encoder." + std::to_string(s + 1), self.encoder[s]);
        for (std::size_t s = 0; s < kScales; ++s) {
            const auto lvl = std::to_string(s + 2);
            conv("tem." + lvl + ".reduce", self.tem_reduce[s]);
            conv("tem." + lvl + ".expand", self.tem_expand[s]);
            conv("phi." + lvl, self.phi[s]);
            conv("fuse." + lvl, self.fuse[s]);
            conv("head." + lvl, self.head[s]);
            conv("decoder." + lvl, self.decoder[s]);
        }
    }
};

inline std::size_t parameter_count(const ShortTermModel& m) {
    std::size_t n = 0;
    m.for_each_parameter([&](const std::string&, const DenseArray& a) { n += a.size(); });
    return n;
}

// ---------------------------------------------------------------------------
// Encoder

struct EncoderCache {
    DenseArray input;                              // 3 x H x W
    std::array<DenseArray, kStages> pre;           // conv outputs before relu
    std::array<DenseArray, kStages> act;           // relu outputs
    std::array<DenseArray, kScales> tem_pre;       // reduce conv outputs
    std::array<DenseArray, kScales> tem_hidden;    // relu(tem_pre)
    std::array<FeatureMap, kScales> features;      // texture-block outputs
};

inline void check_frame(const DenseArray& frame) {
    if (frame.rank() != 3 || frame.extent(0) != 3) {
        throw DimensionError("frame must be 3 x H x W, got " + shape_string(frame.shape()));
    }
    check_pyramid_extents(frame.extent(1), frame.extent(2));
}

inline EncoderCache encode(const ShortTermModel& m, const DenseArray& frame) {
    check_frame(frame);
    EncoderCache c;
    c.input = frame;
    const DenseArray* x = &c.input;
    for (std::size_t s = 0; s < kStages; ++s) {
        c.pre[s] = conv_forward(m.encoder[s], *x);
        c.act[s] = relu(c.pre[s]);
        x = &c.act[s];
    }
    for (std::size_t s = 0; s < kScales; ++s) {
        const auto& a = c.act[s + 1];
        c.tem_pre[s] = conv_forward(m.tem_reduce[s], a);
        c.tem_hidden[s] = relu(c.tem_pre[s]);
        c.features[s] = FeatureMap(a + conv_forward(m.tem_expand[s], c.tem_hidden[s]));
    }
    return c;
}

// Accumulates parameter gradients into `g` and returns d(frame).
inline DenseArray encode_backward(const ShortTermModel& m, const EncoderCache& c,
                                  const std::array<DenseArray, kScales>& d_features, ShortTermModel& g) {
    std::array<DenseArray, kStages> d_act;
    for (std::size_t s = 0; s < kStages; ++s) d_act[s] = DenseArray(c.act[s].shape(), 0.0);
    auto accumulate = [](ConvParams& dst, const ConvGrads& src) {
        dst.weight = dst.weight + src.d_weight;
        dst.bias = dst.bias + src.d_bias;
    };
    for (std::size_t s = 0; s < kScales; ++s) {
        const auto& d = d_features[s];
        d_act[s + 1] = d_act[s + 1] + d;
        const auto ge = conv_backward(m.tem_expand[s], c.tem_hidden[s], d);
        accumulate(g.tem_expand[s], ge);
        const auto gr = conv_backward(m.tem_reduce[s], c.act[s + 1], relu_backward(c.tem_pre[s], ge.d_input));
        accumulate(g.tem_reduce[s], gr);
        d_act[s + 1] = d_act[s + 1] + gr.d_input;
    }
    DenseArray d_input;
    for (std::size_t s = kStages; s-- > 0;) {
        const auto& x = s == 0 ? c.input : c.act[s - 1];
        const auto gs = conv_backward(m.encoder[s], x, relu_backward(c.pre[s], d_act[s]));
        accumulate(g.encoder[s], gs);
        if (s == 0) d_input = gs.d_input;
        else d_act[s - 1] = d_act[s - 1] + gs.d_input;
    }
    return d_input;
}

// ---------------------------------------------------------------------------
// Full short-term pass

struct ScaleCache {
    std::size_t pool_k = 0;
    CabResult next;
    std::optional<CabResult> second;
    DenseArray fused_input;  // concat(next, second) when fused
    DenseArray head_input;   // decoder input
    DenseArray head_pre;     // hidden conv output before relu
    DenseArray head_hidden;
    DenseArray head_logit;   // 1 x h x w
};

struct ShortTermCache {
    std::size_t height = 0, width = 0;
    EncoderCache reference, neighbor;
    std::optional<EncoderCache> second;
    std::array<ScaleCache, kScales> scales;
    DenseArray logit;  // 1 x H x W
};

struct ShortTermOutput {
    MaskImage prediction;
    ShortTermCache cache;
};

inline Projection1x1 as_projection(const ConvParams& p) {
    return {p.weight, std::vector<double>(p.bias.values().begin(), p.bias.values().end())};
}

inline ShortTermOutput short_forward_cached(const ShortTermModel& m, const DenseArray& frame_t,
                                            const DenseArray& frame_t1,
                                            const std::optional<DenseArray>& frame_t2 = std::nullopt) {
    check_frame(frame_t);
    if (frame_t1.shape() != frame_t.shape() || (frame_t2 && frame_t2->shape() != frame_t.shape())) {
        throw DimensionError("short_forward: frames must share extents");
    }
    ShortTermCache c;
    c.height = frame_t.extent(1);
    c.width = frame_t.extent(2);
    c.reference = encode(m, frame_t);
    c.neighbor = encode(m, frame_t1);
    if (frame_t2) c.second = encode(m, *frame_t2);

    c.logit = DenseArray({1, c.height, c.width}, 0.0);
    for (std::size_t s = 0; s < kScales; ++s) {
        auto& sc = c.scales[s];
        const auto& ref = c.reference.features[s];
        sc.pool_k = PoolSchedule::effective(m.schedule.factors[s], ref.height(), ref.width());
        const auto phi = as_projection(m.phi[s]);
        sc.next = cab_forward(ref, c.neighbor.features[s], phi, sc.pool_k);
        if (c.second) {
            sc.second = cab_forward(ref, c.second->features[s], phi, sc.pool_k);
            sc.fused_input = concat_channels(sc.next.aggregated.values(), sc.second->aggregated.values());
            sc.head_input = conv_forward(m.fuse[s], sc.fused_input);
        } else {
            sc.head_input = sc.next.aggregated.values();
        }
        sc.head_pre = conv_forward(m.head[s], sc.head_input);
        sc.head_hidden = relu(sc.head_pre);
        sc.head_logit = conv_forward(m.decoder[s], sc.head_hidden);
        c.logit = c.logit + resize_bilinear(sc.head_logit, c.height, c.width);
    }
    auto prob = sigmoid(c.logit).reshaped({c.height, c.width});
    return {MaskImage(std::move(prob), MaskKind::probability), std::move(c)};
}

inline MaskImage short_forward(const ShortTermModel& m, const DenseArray& frame_t, const DenseArray& frame_t1,
                               const std::optional<DenseArray>& frame_t2 = std::nullopt) {
    return short_forward_cached(m, frame_t, frame_t1, frame_t2).prediction;
}

struct ShortTermGradients {
    ShortTermModel params;  // same layout as the model
    DenseArray d_frame_t, d_frame_t1;
    std::optional<DenseArray> d_frame_t2;
};

struct BackwardOptions {
    // Zero the gradients through the correlation logits and phi.
    bool freeze_correlation = false;
};

// Backpropagates dL/dp (H x W) through the cached pass.
inline ShortTermGradients short_backward(const ShortTermModel& m, const ShortTermCache& c, const MaskImage& prediction,
                                         const DenseArray& d_prediction, BackwardOptions options = {}) {
    if (d_prediction.shape() != Shape{c.height, c.width}) throw ContractError("short_backward: cotangent extent mismatch");
    ShortTermGradients out{m.zeros_like(), {}, {}, std::nullopt};
    auto& g = out.params;
    DenseArray d_logit({1, c.height, c.width});
    for (std::size_t i = 0; i < d_logit.size(); ++i) {
        const double p = prediction.values()[i];
        d_logit[i] = d_prediction[i] * p * (1 - p);
    }
    std::array<DenseArray, kScales> d_ref, d_nbr, d_second;
    const CabBackwardOptions cab_opts{options.freeze_correlation};
    for (std::size_t s = 0; s < kScales; ++s) {
        const auto& sc = c.scales[s];
        const auto d_head_logit = resize_bilinear_backward(d_logit, sc.head_logit.extent(1), sc.head_logit.extent(2));
        const auto gd = conv_backward(m.decoder[s], sc.head_hidden, d_head_logit);
        g.decoder[s].weight = gd.d_weight;
        g.decoder[s].bias = gd.d_bias;
        const auto gh = conv_backward(m.head[s], sc.head_input, relu_backward(sc.head_pre, gd.d_input));
        g.head[s].weight = gh.d_weight;
        g.head[s].bias = gh.d_bias;
        DenseArray d_next = gh.d_input;
        if (sc.second) {
            const auto gf = conv_backward(m.fuse[s], sc.fused_input, gh.d_input);
            g.fuse[s].weight = gf.d_weight;
            g.fuse[s].bias = gf.d_bias;
            auto [dn, ds] = split_channels(gf.d_input, sc.next.aggregated.channels());
            d_next = std::move(dn);
            const auto g2 = cab_backward(sc.second->cache, ds, cab_opts);
            d_second[s] = g2.d_neighbor;
            d_ref[s] = g2.d_reference;
            g.phi[s].weight = g.phi[s].weight + g2.d_phi_weight;
            g.phi[s].bias = g.phi[s].bias + DenseArray({g2.d_phi_bias.size()}, g2.d_phi_bias);
        }
        const auto g1 = cab_backward(sc.next.cache, d_next, cab_opts);
        d_nbr[s] = g1.d_neighbor;
        d_ref[s] = sc.second ? d_ref[s] + g1.d_reference : g1.d_reference;
        g.phi[s].weight = g.phi[s].weight + g1.d_phi_weight;
        g.phi[s].bias = g.phi[s].bias + DenseArray({g1.d_phi_bias.size()}, g1.d_phi_bias);
    }
    out.d_frame_t = encode_backward(m, c.reference, d_ref, g);
    out.d_frame_t1 = encode_backward(m, c.neighbor, d_nbr, g);
    if (c.second) out.d_frame_t2 = encode_backward(m, *c.second, d_second, g);
    return out;
}

// short loss (weighted CE + weighted IoU) and its full gradient for one sample.
struct SampleResult {
    LossValue loss;
    ShortTermGradients grads;
    MaskImage prediction;
};

inline SampleResult short_loss_and_grad(const ShortTermModel& m, const DenseArray& frame_t, const DenseArray& frame_t1,
                                        const std::optional<DenseArray>& frame_t2, const MaskImage& gt,
                                        BackwardOptions options = {}) {
    auto fwd = short_forward_cached(m, frame_t, frame_t1, frame_t2);
    auto loss = short_loss(fwd.prediction, gt);
    auto grads = short_backward(m, fwd.cache, fwd.prediction, short_loss_grad(fwd.prediction, gt), options);
    return {std::move(loss), std::move(grads), std::move(fwd.prediction)};
}

}  // namespace vcod::toynet
