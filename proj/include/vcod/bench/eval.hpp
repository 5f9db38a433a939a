#pragma once

// Metric evaluation over a manifest. Predictions live at
// <predictions>/<sequence>/<frame stem>.png (8-bit grey); each map is min-max
// normalised before scoring, as the usual toolboxes do.
//
// annotated_only evaluates the frames with GT. with_pseudo adds frames that
// only have a pseudo mask, taking the one from the nearest annotated source.

#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "vcod/bench/config.hpp"
#include "vcod/bench/manifest.hpp"
#include "vcod/bench/pseudo.hpp"
#include "vcod/metrics.hpp"

namespace vcod::bench {

struct EvaluatedFrame {
    std::string sequence;
    std::string stem;
    bool pseudo = false;
    FrameMetrics metrics;
};

struct EvalResult {
    GroupedReport report;
    std::vector<EvaluatedFrame> frames;
    std::vector<fs::path> access_log;  // every mask file read, in sequence order
};

namespace detail {

struct Target {
    std::string stem;
    fs::path gt;
    bool pseudo = false;
};

inline std::vector<Target> eval_targets(const SequenceEntry& s, EvalMode mode) {
    std::vector<Target> out;
    for (const auto& g : s.gt) out.push_back({g.stem, g.path, false});
    if (mode == EvalMode::annotated_only) return out;
    for (std::size_t pos = 0; pos < s.frames.size(); ++pos) {
        const auto& f = s.frames[pos];
        if (std::any_of(s.gt.begin(), s.gt.end(), [&](const FrameFile& g) { return g.index == f.index; })) continue;
        // nearest earlier annotated frame within reach
        for (std::size_t n = 1; n <= kPseudoOffsets && n <= pos; ++n) {
            const auto p = s.dir / kPseudoDir / pseudo_name(f.stem, s.frames[pos - n].stem);
            if (fs::is_regular_file(p)) {
                out.push_back({f.stem, p, true});
                break;
            }
        }
    }
    return out;
}

// Prediction for `stem`; a stem matched by several files is an error.
inline std::optional<fs::path> find_prediction(const fs::path& dir, const std::string& stem) {
    std::optional<fs::path> hit;
    if (!fs::is_directory(dir)) return hit;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().stem().string() != stem) continue;
        if (hit) {
            throw EvaluationError("ambiguous prediction for frame " + stem + ": " + hit->filename().string() + " and " +
                                  e.path().filename().string());
        }
        hit = e.path();
    }
    if (hit && lower(hit->extension().string()) != ".png") {
        throw EvaluationError("prediction " + hit->string() + " is not a PNG");
    }
    return hit;
}

inline MaskImage normalized_prediction(const fs::path& path) {
    const auto img = read_png_gray(path);
    DenseArray v({img.height, img.width});
    double lo = 255, hi = 0;
    for (auto p : img.pixels) {
        lo = std::min<double>(lo, p);
        hi = std::max<double>(hi, p);
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = hi > lo ? (img.pixels[i] - lo) / (hi - lo) : img.pixels[i] / 255.0;
    }
    return {std::move(v), MaskKind::probability};
}

struct SequenceEval {
    std::vector<EvaluatedFrame> frames;
    std::vector<fs::path> log;
};

}  // namespace detail

inline EvalResult run_eval(const DatasetManifest& manifest, const fs::path& predictions, const RunConfig& cfg) {
    cfg.validate();
    const auto& seqs = manifest.sequences;

    // Resolve every file before reading any, so all missing frames are reported at once.
    std::vector<std::vector<std::pair<detail::Target, fs::path>>> plan(seqs.size());
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        for (auto& t : detail::eval_targets(seqs[i], cfg.mode)) {
            auto pred = detail::find_prediction(predictions / seqs[i].name, t.stem);
            if (!pred) missing.push_back(seqs[i].name + "/" + t.stem);
            else plan[i].emplace_back(std::move(t), std::move(*pred));
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw EvaluationError("missing predictions for " + std::to_string(missing.size()) + " frame(s): " + list);
    }

    std::vector<detail::SequenceEval> results(seqs.size());
    parallel_for(seqs.size(), cfg.threads, [&](std::size_t i) {
        auto& r = results[i];
        for (const auto& [t, pred_path] : plan[i]) {
            r.log.push_back(t.gt);
            r.log.push_back(pred_path);
            const FramePair pair(detail::normalized_prediction(pred_path), read_mask_png(t.gt));
            r.frames.push_back({seqs[i].name, t.stem, t.pseudo, evaluate_frame(pair)});
        }
    });

    EvalResult out;
    std::vector<std::pair<std::string, FrameMetrics>> tagged;
    for (auto& r : results) {
        for (auto& f : r.frames) tagged.emplace_back(f.sequence, f.metrics);
        out.frames.insert(out.frames.end(), r.frames.begin(), r.frames.end());
        out.access_log.insert(out.access_log.end(), r.log.begin(), r.log.end());
    }
    if (tagged.empty()) throw EvaluationError("no frames to evaluate");
    out.report = aggregate_by_group(tagged);
    return out;
}

}  // namespace vcod::bench
