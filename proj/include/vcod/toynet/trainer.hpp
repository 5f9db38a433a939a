#pragma once

// Full-batch overfitting of the short-term model on synthetic clips, plus
// the parameter container and loss-trace CSV.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <vector>

#include "vcod/errors.hpp"
#include "vcod/toynet/short_term.hpp"
#include "vcod/toynet/synthetic.hpp"

namespace vcod::toynet {

struct TrainSample {
    DenseArray frame_t, frame_t1;
    std::optional<DenseArray> frame_t2;
    MaskImage gt;
};

// Triplets (t, t+1, t+2) of every clip; the last two frames of a clip serve
// only as neighbours.
inline std::vector<TrainSample> triplet_samples(const std::vector<SyntheticSequence>& clips) {
    std::vector<TrainSample> out;
    for (const auto& clip : clips) {
        for (std::size_t t = 0; t + 2 < clip.frames.size(); ++t) {
            out.push_back({clip.frames[t], clip.frames[t + 1], clip.frames[t + 2], clip.masks[t]});
        }
    }
    if (out.empty()) throw InputError("triplet_samples: clips need at least three frames");
    return out;
}

struct AdamConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(const ShortTermModel& model, AdamConfig cfg) : cfg_(cfg), m_(model.zeros_like()), v_(model.zeros_like()) {}

    void step(ShortTermModel& model, const ShortTermModel& grad, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        std::vector<DenseArray*> params, ms, vs;
        std::vector<const DenseArray*> gs;
        model.for_each_parameter([&](const std::string&, DenseArray& a) { params.push_back(&a); });
        m_.for_each_parameter([&](const std::string&, DenseArray& a) { ms.push_back(&a); });
        v_.for_each_parameter([&](const std::string&, DenseArray& a) { vs.push_back(&a); });
        grad.for_each_parameter([&](const std::string&, const DenseArray& a) { gs.push_back(&a); });
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& p = *params[k];
            auto& m = *ms[k];
            auto& v = *vs[k];
            const auto& g = *gs[k];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
            }
        }
    }

private:
    AdamConfig cfg_;
    ShortTermModel m_, v_;
    std::size_t t_ = 0;
};

struct LossRecord {
    std::size_t step = 0;
    double loss = 0, wce = 0, wiou = 0;
};

struct TrainConfig {
    std::size_t steps = 200;
    AdamConfig adam{};
    // Linear warmup over the first `warmup` updates, then cosine decay from
    // adam.lr to zero; with cosine_decay off the lr stays at adam.lr after warmup.
    std::size_t warmup = 20;
    bool cosine_decay = true;
    BackwardOptions backward{};
    double divergence_factor = 10.0;
};

struct TrainResult {
    std::vector<LossRecord> trace;
    ShortTermModel model;
};

struct BatchEvaluation {
    LossRecord record;
    ShortTermModel grad;
};

// Mean loss and mean gradient over all samples.
inline BatchEvaluation evaluate_batch(const ShortTermModel& model, const std::vector<TrainSample>& samples,
                                      BackwardOptions options) {
    BatchEvaluation out{{}, model.zeros_like()};
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (const auto& s : samples) {
        auto r = short_loss_and_grad(model, s.frame_t, s.frame_t1, s.frame_t2, s.gt, options);
        out.record.loss += inv * r.loss.total;
        out.record.wce += inv * r.loss.components.at("wce");
        out.record.wiou += inv * r.loss.components.at("wiou");
        std::vector<DenseArray*> dst;
        out.grad.for_each_parameter([&](const std::string&, DenseArray& a) { dst.push_back(&a); });
        std::size_t k = 0;
        r.grads.params.for_each_parameter([&](const std::string&, const DenseArray& a) {
            auto& d = *dst[k++];
            for (std::size_t i = 0; i < a.size(); ++i) d[i] += inv * a[i];
        });
    }
    return out;
}

inline double learning_rate(const TrainConfig& cfg, std::size_t step) {
    if (step < cfg.warmup) return cfg.adam.lr * double(step + 1) / double(cfg.warmup + 1);
    if (!cfg.cosine_decay || cfg.steps <= cfg.warmup) return cfg.adam.lr;
    const double progress = double(step - cfg.warmup) / double(cfg.steps - cfg.warmup);
    return 0.5 * cfg.adam.lr * (1 + std::cos(M_PI * progress));
}

// trace[0] is the loss before any update; trace[k] the loss after k updates.
inline TrainResult overfit_demo(ShortTermModel model, const std::vector<SyntheticSequence>& clips,
                                const TrainConfig& cfg) {
    const auto samples = triplet_samples(clips);
    Adam opt(model, cfg.adam);
    TrainResult result;
    double initial = 0;
    for (std::size_t step = 0;; ++step) {
        bool finite = true;
        model.for_each_parameter([&](const std::string&, const DenseArray& a) {
            for (double v : a.values()) finite = finite && std::isfinite(v);
        });
        if (!finite) throw TrainingError("training diverged at step " + std::to_string(step) + ": non-finite parameters");
        auto eval = evaluate_batch(model, samples, cfg.backward);
        eval.record.step = step;
        if (step == 0) initial = eval.record.loss;
        if (!std::isfinite(eval.record.loss) || eval.record.loss > cfg.divergence_factor * initial) {
            throw TrainingError("training diverged at step " + std::to_string(step) + ": loss " +
                                std::to_string(eval.record.loss) + " vs initial " + std::to_string(initial));
        }
        result.trace.push_back(eval.record);
        if (step == cfg.steps) break;
        opt.step(model, eval.grad, learning_rate(cfg, step));
    }
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// Loss trace CSV

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10f", v);
    return buf;
}

inline void write_loss_trace_csv(std::ostream& out, const std::vector<LossRecord>& trace) {
    out << "step,loss,wce,wiou\n";
    for (const auto& r : trace) {
        out << r.step << ',' << format_real(r.loss) << ',' << format_real(r.wce) << ',' << format_real(r.wiou) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Parameter container: "SLTP", u32 version, u32 tensor count, then per tensor
// u32 name length, name bytes, u32 rank, u32 extents, float64 values. All
// integers and floats little-endian.

inline constexpr std::uint32_t kParamFormatVersion = 1;

namespace detail {
inline void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>(v >> (8 * i)));
}
inline void put_f64(std::string& s, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>(bits >> (8 * i)));
}

class Reader {
public:
    Reader(std::string bytes, std::string origin) : b_(std::move(bytes)), origin_(std::move(origin)) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }
    std::string bytes(std::size_t n) {
        need(n);
        auto s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw FormatError(origin_ + ": truncated parameter file");
    }
    std::string b_, origin_;
    std::size_t pos_ = 0;
};
}  // namespace detail

inline std::string serialize_parameters(const ShortTermModel& model) {
    std::string out = "SLTP";
    std::uint32_t count = 0;
    model.for_each_parameter([&](const std::string&, const DenseArray&) { ++count; });
    detail::put_u32(out, kParamFormatVersion);
    detail::put_u32(out, count);
    model.for_each_parameter([&](const std::string& name, const DenseArray& a) {
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        detail::put_u32(out, static_cast<std::uint32_t>(a.rank()));
        for (auto e : a.shape()) detail::put_u32(out, static_cast<std::uint32_t>(e));
        for (double v : a.values()) detail::put_f64(out, v);
    });
    return out;
}

// Fills `model` in place; names, order and shapes must match exactly.
inline void deserialize_parameters(const std::string& bytes, ShortTermModel& model, const std::string& origin = "parameters") {
    detail::Reader r(bytes, origin);
    if (r.bytes(4) != "SLTP") throw FormatError(origin + ": bad parameter file magic");
    if (const auto v = r.u32(); v != kParamFormatVersion) {
        throw FormatError(origin + ": unsupported parameter format version " + std::to_string(v));
    }
    std::uint32_t expected = 0;
    model.for_each_parameter([&](const std::string&, const DenseArray&) { ++expected; });
    if (const auto n = r.u32(); n != expected) {
        throw FormatError(origin + ": holds " + std::to_string(n) + " tensors, model has " + std::to_string(expected));
    }
    model.for_each_parameter([&](const std::string& name, DenseArray& a) {
        const auto got = r.bytes(r.u32());
        if (got != name) throw FormatError(origin + ": expected tensor '" + name + "', found '" + got + "'");
        Shape shape(r.u32());
        for (auto& e : shape) e = r.u32();
        if (shape != a.shape()) {
            throw FormatError(origin + ": tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                              shape_string(a.shape()));
        }
        for (auto& v : a.values()) v = r.f64();
    });
    if (!r.done()) throw FormatError(origin + ": trailing bytes after last tensor");
}

inline void save_parameters(const std::filesystem::path& path, const ShortTermModel& model) {
    const auto bytes = serialize_parameters(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot create " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void load_parameters(const std::filesystem::path& path, ShortTermModel& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    deserialize_parameters(ss.str(), model, path.string());
}

}  // namespace vcod::toynet
