#pragma once

// Sequence refinement by sparse spatio-temporal attention.
//
// Every pixel of every frame queries the pixels inside a window of
// +-temporal_radius frames and +-spatial_radius pixels, keeps the top_k keys
// by projected dot product and averages their value projections with softmax
// weights. The result is added to the logit of the input prediction.
// Works at input resolution; there is no encoder in front of it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "vcod/errors.hpp"
#include "vcod/numerics.hpp"
#include "vcod/pseudolabel.hpp"
#include "vcod/toynet/short_term.hpp"

namespace vcod::toynet {

inline constexpr std::size_t kSequenceChannels = 4;  // r, g, b, prediction
inline constexpr std::size_t kFullClip = std::numeric_limits<std::size_t>::max();

struct LongTermConfig {
    std::size_t temporal_radius = kFullClip;
    std::size_t spatial_radius = 4;
    std::size_t top_k = 8;
    std::size_t key_dim = kSequenceChannels;
};

struct LongTermModel {
    LongTermConfig config{};
    DenseArray w_query, w_key;  // key_dim x 4
    DenseArray b_query, b_key;  // key_dim
    DenseArray w_value;         // 1 x 4
    double b_value = 0.0;

    // Query/key projections are the identity (key_dim must be 4) and the value
    // picks the prediction channel.
    static LongTermModel identity(LongTermConfig cfg = {}) {
        if (cfg.key_dim != kSequenceChannels) throw ContractError("LongTermModel::identity: key_dim must be 4");
        LongTermModel m = zeros(cfg);
        for (std::size_t i = 0; i < kSequenceChannels; ++i) {
            m.w_query(i, i) = 1.0;
            m.w_key(i, i) = 1.0;
        }
        m.w_value(0, kSequenceChannels - 1) = 1.0;
        return m;
    }

    static LongTermModel random(std::uint64_t seed, LongTermConfig cfg = {}) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, 1.0);
        LongTermModel m = zeros(cfg);
        for (auto* a : {&m.w_query, &m.w_key, &m.b_query, &m.b_key, &m.w_value})
            for (auto& v : a->values()) v = n(rng);
        m.b_value = n(rng);
        return m;
    }

private:
    static LongTermModel zeros(LongTermConfig cfg) {
        if (cfg.top_k == 0) throw ContractError("LongTermModel: top_k must be at least 1");
        if (cfg.key_dim == 0) throw ContractError("LongTermModel: key_dim must be at least 1");
        LongTermModel m;
        m.config = cfg;
        m.w_query = DenseArray({cfg.key_dim, kSequenceChannels}, 0.0);
        m.w_key = DenseArray({cfg.key_dim, kSequenceChannels}, 0.0);
        m.b_query = DenseArray({cfg.key_dim}, 0.0);
        m.b_key = DenseArray({cfg.key_dim}, 0.0);
        m.w_value = DenseArray({1, kSequenceChannels}, 0.0);
        return m;
    }
};

// T x 4 x H x W: frame channels followed by the prediction channel.
class SequenceBatch {
public:
    SequenceBatch(const std::vector<DenseArray>& frames, const std::vector<MaskImage>& predictions) {
        if (frames.size() < 2) throw InputError("SequenceBatch: need at least two frames");
        if (frames.size() != predictions.size()) {
            throw InputError("SequenceBatch: " + std::to_string(frames.size()) + " frames but " +
                             std::to_string(predictions.size()) + " predictions");
        }
        const auto H = predictions[0].height(), W = predictions[0].width();
        data_ = DenseArray({frames.size(), kSequenceChannels, H, W});
        for (std::size_t t = 0; t < frames.size(); ++t) {
            if (frames[t].shape() != Shape{3, H, W} || predictions[t].height() != H || predictions[t].width() != W) {
                throw DimensionError("SequenceBatch: frame " + std::to_string(t) + " is " +
                                     shape_string(frames[t].shape()) + ", expected 3 x " + std::to_string(H) + " x " +
                                     std::to_string(W));
            }
            double* dst = data_.data() + t * kSequenceChannels * H * W;
            std::copy(frames[t].values().begin(), frames[t].values().end(), dst);
            std::copy(predictions[t].values().values().begin(), predictions[t].values().values().end(), dst + 3 * H * W);
        }
    }

    const DenseArray& data() const { return data_; }
    std::size_t frames() const { return data_.extent(0); }
    std::size_t height() const { return data_.extent(2); }
    std::size_t width() const { return data_.extent(3); }
    double prediction(std::size_t t, std::size_t y, std::size_t x) const { return data_(t, kSequenceChannels - 1, y, x); }

private:
    DenseArray data_;
};

struct Position {
    std::size_t t = 0, y = 0, x = 0;
    bool operator==(const Position&) const = default;
};

struct AttentionEntry {
    Position key;
    double weight = 0;
};

struct LongTermOutput {
    std::vector<MaskImage> maps;
    // Set when some query had fewer than top_k keys in its neighbourhood and
    // used all of them instead.
    bool k_clipped = false;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> window(std::size_t c, std::size_t r, std::size_t n) {
    const std::size_t lo = c >= r ? c - r : 0;
    const std::size_t hi = r >= n - 1 - c ? n - 1 : c + r;
    return {lo, hi};
}

// Projected channels of every position: dim x (T*H*W).
inline std::vector<double> project(const SequenceBatch& b, const DenseArray& w, const DenseArray& bias) {
    const auto dim = w.extent(0), T = b.frames(), HW = b.height() * b.width();
    std::vector<double> out(dim * T * HW);
    for (std::size_t t = 0; t < T; ++t) {
        const double* src = b.data().data() + t * kSequenceChannels * HW;
        for (std::size_t d = 0; d < dim; ++d) {
            double* dst = out.data() + d * T * HW + t * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                double acc = bias[d];
                for (std::size_t c = 0; c < kSequenceChannels; ++c) acc += w(d, c) * src[c * HW + i];
                dst[i] = acc;
            }
        }
    }
    return out;
}

struct Projected {
    std::vector<double> q, k, v;
    std::size_t dim = 0, count = 0;
};

inline Projected project_all(const LongTermModel& m, const SequenceBatch& b) {
    if (m.w_query.shape() != Shape{m.config.key_dim, kSequenceChannels} || m.w_key.shape() != m.w_query.shape()) {
        throw DimensionError("long_forward: projection weights do not match key_dim");
    }
    Projected p;
    p.dim = m.config.key_dim;
    p.count = b.frames() * b.height() * b.width();
    p.q = project(b, m.w_query, m.b_query);
    p.k = project(b, m.w_key, m.b_key);
    p.v = project(b, m.w_value, DenseArray({1}, m.b_value));
    return p;
}

// Top-k keys of one query with softmax weights; ties keep neighbourhood scan
// order (t, y, x ascending).
inline std::vector<AttentionEntry> attend(const LongTermConfig& cfg, const SequenceBatch& b, const Projected& p,
                                          const Position& q, bool& clipped) {
    const auto T = b.frames(), H = b.height(), W = b.width();
    const auto [t0, t1] = window(q.t, cfg.temporal_radius == kFullClip ? T : cfg.temporal_radius, T);
    const auto [y0, y1] = window(q.y, cfg.spatial_radius, H);
    const auto [x0, x1] = window(q.x, cfg.spatial_radius, W);
    const auto qi = (q.t * H + q.y) * W + q.x;
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.dim));

    struct Candidate {
        double score;
        std::size_t order;
        Position pos;
    };
    std::vector<Candidate> cand;
    cand.reserve((t1 - t0 + 1) * (y1 - y0 + 1) * (x1 - x0 + 1));
    for (std::size_t t = t0; t <= t1; ++t)
        for (std::size_t y = y0; y <= y1; ++y)
            for (std::size_t x = x0; x <= x1; ++x) {
                const auto ki = (t * H + y) * W + x;
                double s = 0;
                for (std::size_t d = 0; d < p.dim; ++d) s += p.q[d * p.count + qi] * p.k[d * p.count + ki];
                cand.push_back({s * scale, cand.size(), {t, y, x}});
            }
    const std::size_t k = std::min(cfg.top_k, cand.size());
    if (k < cfg.top_k) clipped = true;
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                      [](const Candidate& a, const Candidate& c) {
                          return a.score > c.score || (a.score == c.score && a.order < c.order);
                      });
    const double top = cand[0].score;
    double z = 0;
    std::vector<AttentionEntry> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = {cand[i].pos, std::exp(cand[i].score - top)};
        z += out[i].weight;
    }
    for (auto& e : out) e.weight /= z;
    return out;
}

inline constexpr double kLogitEps = 1e-6;

inline double logit(double p) {
    p = std::clamp(p, kLogitEps, 1.0 - kLogitEps);
    return std::log(p / (1.0 - p));
}

}  // namespace detail

// Attention row of one query, for inspection.
inline std::vector<AttentionEntry> attention_row(const LongTermModel& m, const SequenceBatch& b, const Position& q) {
    if (q.t >= b.frames() || q.y >= b.height() || q.x >= b.width()) throw ContractError("attention_row: query out of range");
    bool clipped = false;
    return detail::attend(m.config, b, detail::project_all(m, b), q, clipped);
}

inline LongTermOutput long_forward(const LongTermModel& m, const SequenceBatch& b) {
    const auto T = b.frames(), H = b.height(), W = b.width();
    const auto p = detail::project_all(m, b);
    LongTermOutput out;
    for (std::size_t t = 0; t < T; ++t) {
        DenseArray map({H, W});
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double agg = 0;
                for (const auto& e : detail::attend(m.config, b, p, {t, y, x}, out.k_clipped)) {
                    agg += e.weight * p.v[(e.key.t * H + e.key.y) * W + e.key.x];
                }
                map(y, x) = sigmoid(detail::logit(b.prediction(t, y, x)) + agg);
            }
        out.maps.emplace_back(std::move(map), MaskKind::probability);
    }
    return out;
}

// Short-term predictions for every frame, then long-term refinement. Frame t
// uses t+1 and t+2 as neighbours where they exist and looks backwards at the
// clip end. The short-term model is only read.
inline LongTermOutput refine_sequence(const ShortTermModel& short_model, const LongTermModel& long_model,
                                      const std::vector<DenseArray>& frames) {
    if (frames.size() < 2) throw InputError("refine_sequence: need at least two frames");
    const auto T = frames.size();
    std::vector<MaskImage> preds;
    for (std::size_t t = 0; t < T; ++t) {
        const auto& n1 = t + 1 < T ? frames[t + 1] : frames[t - 1];
        std::optional<DenseArray> n2;
        if (t + 2 < T) n2 = frames[t + 2];
        else if (t + 1 >= T && t >= 2) n2 = frames[t - 2];
        preds.push_back(short_forward(short_model, frames[t], n1, n2));
    }
    return long_forward(long_model, SequenceBatch(frames, preds));
}

}  // namespace vcod::toynet
