#pragma once

// Pseudo-label driver. For every annotated frame s and offsets n = 1..4, the
// frame t that sits n positions later in the sequence gets
//
//   GT_pseudo/<t stem>_from_<s stem>.png
//
// built from Flow/<s>_<t>.flo (on t's grid, pointing into s) and the reverse
// Flow/<t>_<s>.flo. Offsets past the last frame are not attempted; missing
// flows are skipped and recorded.

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "vcod/bench/config.hpp"
#include "vcod/bench/manifest.hpp"
#include "vcod/pseudolabel.hpp"

namespace vcod::bench {

inline constexpr const char* kPseudoDir = "GT_pseudo";

inline std::string pseudo_name(const std::string& target_stem, const std::string& source_stem) {
    return target_stem + "_from_" + source_stem + ".png";
}

inline fs::path flow_path(const SequenceEntry& s, const std::string& from, const std::string& to) {
    return (s.flow_dir ? *s.flow_dir : s.dir / "Flow") / (from + "_" + to + ".flo");
}

struct PseudoSkip {
    std::string sequence, source, target, reason;
};

struct SequencePseudoStats {
    std::size_t written = 0;
    std::size_t skipped = 0;
    double valid_ratio = 0;  // mean fraction of flow-consistent pixels over written masks
};

struct PseudoSummary {
    std::map<std::string, SequencePseudoStats> per_sequence;
    std::vector<PseudoSkip> skips;
    std::vector<fs::path> written;

    std::size_t written_count() const { return written.size(); }
};

namespace detail {

struct SequencePseudoResult {
    SequencePseudoStats stats;
    std::vector<PseudoSkip> skips;
    std::vector<fs::path> written;
};

inline SequencePseudoResult pseudo_for_sequence(const SequenceEntry& s, const RunConfig& cfg) {
    SequencePseudoResult out;
    const PseudoLabelParams params{cfg.threshold, cfg.consistency};
    const auto dst = s.dir / kPseudoDir;
    double ratio_sum = 0;
    for (const auto& g : s.gt) {
        const auto pos = *s.frame_position(g.index);
        std::optional<MaskImage> gt;
        for (std::size_t n = 1; n <= kPseudoOffsets; ++n) {
            if (pos + n >= s.frames.size()) break;  // sequence ends
            const auto& target = s.frames[pos + n];
            const auto fwd = flow_path(s, g.stem, target.stem), bwd = flow_path(s, target.stem, g.stem);
            if (!fs::is_regular_file(fwd) || !fs::is_regular_file(bwd)) {
                out.skips.push_back({s.name, g.stem, target.stem,
                                     "missing flow " + (fs::is_regular_file(fwd) ? bwd : fwd).filename().string()});
                continue;
            }
            if (!gt) gt = read_mask_png(g.path);
            const auto to_target = read_flow_file(fwd), to_source = read_flow_file(bwd);
            const auto mask = pseudo_mask(*gt, to_target, to_source, params);
            const auto valid = fb_consistency(to_target, to_source, params.consistency);
            double v = 0;
            for (double x : valid.values().values()) v += x;
            ratio_sum += v / static_cast<double>(valid.values().size());
            fs::create_directories(dst);
            const auto path = dst / pseudo_name(target.stem, g.stem);
            write_mask_png(path, mask);
            out.written.push_back(path);
        }
    }
    out.stats.written = out.written.size();
    out.stats.skipped = out.skips.size();
    out.stats.valid_ratio = out.written.empty() ? 0.0 : ratio_sum / static_cast<double>(out.written.size());
    return out;
}

}  // namespace detail

inline PseudoSummary run_pseudo(const DatasetManifest& manifest, const RunConfig& cfg) {
    cfg.validate();
    std::vector<detail::SequencePseudoResult> results(manifest.sequences.size());
    parallel_for(manifest.sequences.size(), cfg.threads,
                 [&](std::size_t i) { results[i] = detail::pseudo_for_sequence(manifest.sequences[i], cfg); });
    PseudoSummary summary;
    for (std::size_t i = 0; i < results.size(); ++i) {
        auto& r = results[i];
        summary.per_sequence[manifest.sequences[i].name] = r.stats;
        summary.skips.insert(summary.skips.end(), r.skips.begin(), r.skips.end());
        summary.written.insert(summary.written.end(), r.written.begin(), r.written.end());
    }
    return summary;
}

inline nlohmann::json pseudo_summary_json(const PseudoSummary& s) {
    nlohmann::json seqs = nlohmann::json::object();
    for (const auto& [name, st] : s.per_sequence) {
        seqs[name] = {{"written", st.written}, {"skipped", st.skipped}, {"valid_ratio", st.valid_ratio}};
    }
    nlohmann::json skips = nlohmann::json::array();
    for (const auto& k : s.skips) {
        skips.push_back({{"sequence", k.sequence}, {"source", k.source}, {"target", k.target}, {"reason", k.reason}});
    }
    return {{"written", s.written_count()}, {"skipped", s.skips.size()}, {"sequences", seqs}, {"skips", skips}};
}

}  // namespace vcod::bench
