#pragma once

// Toy overfit run: synthetic moving-square clips, short-term model trained
// for `steps` full-batch updates, loss trace plus metrics of the final model
// on the training triplets. Everything is seeded; the run is single-threaded.

#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vcod/bench/report.hpp"
#include "vcod/metrics.hpp"
#include "vcod/toynet/trainer.hpp"

namespace vcod::bench {

struct ToyDemoConfig {
    std::uint64_t seed = 0;
    std::size_t steps = 200;
    std::size_t clips = 2;
    toynet::SyntheticConfig synthetic{};
    toynet::TrainConfig train{};
};

struct ToyDemoResult {
    std::vector<toynet::LossRecord> trace;
    MetricReport final_metrics;
    toynet::ShortTermModel model;

    double initial_loss() const { return trace.front().loss; }
    double final_loss() const { return trace.back().loss; }
    double ratio() const { return final_loss() / initial_loss(); }
};

// Clip i of seed s uses generator seed 1000 s + i; the model uses seed s.
inline std::vector<toynet::SyntheticSequence> toy_clips(const ToyDemoConfig& cfg) {
    std::vector<toynet::SyntheticSequence> clips;
    for (std::size_t i = 0; i < cfg.clips; ++i) clips.push_back(toynet::make_moving_square(cfg.synthetic, 1000 * cfg.seed + i));
    return clips;
}

inline ToyDemoResult run_toydemo(const ToyDemoConfig& cfg) {
    if (cfg.clips == 0) throw InputError("toydemo: need at least one clip");
    const auto clips = toy_clips(cfg);
    auto train = cfg.train;
    train.steps = cfg.steps;
    auto r = toynet::overfit_demo(toynet::ShortTermModel::random(cfg.seed), clips, train);
    std::vector<FrameMetrics> frames;
    for (const auto& s : toynet::triplet_samples(clips)) {
        frames.push_back(evaluate_frame(FramePair(toynet::short_forward(r.model, s.frame_t, s.frame_t1, s.frame_t2), s.gt)));
    }
    return {std::move(r.trace), aggregate(frames), std::move(r.model)};
}

inline std::string toydemo_trace_csv(const ToyDemoResult& r) {
    std::ostringstream out;
    toynet::write_loss_trace_csv(out, r.trace);
    return out.str();
}

inline nlohmann::json toydemo_summary(const ToyDemoConfig& cfg, const ToyDemoResult& r) {
    nlohmann::json metrics = nlohmann::json::object();
    const auto v = report_values(r.final_metrics);
    for (std::size_t i = 0; i < v.size(); ++i) metrics[kCsvColumns[i]] = fixed(v[i], 4);
    return {{"seed", cfg.seed},
            {"steps", cfg.steps},
            {"clips", cfg.clips},
            {"freeze_correlation", cfg.train.backward.freeze_correlation},
            {"initial_loss", toynet::format_real(r.initial_loss())},
            {"final_loss", toynet::format_real(r.final_loss())},
            {"ratio", toynet::format_real(r.ratio())},
            {"metrics", metrics}};
}

}  // namespace vcod::bench
