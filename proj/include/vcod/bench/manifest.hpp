#pragma once

// Dataset layout:
//
//   <root>/[<split parent>/]<sequence>/Frame/*.jpg|*.png   (or Imgs/)
//   <root>/[<split parent>/]<sequence>/GT/*.png
//   <root>/[<split parent>/]<sequence>/Flow/<A>_<B>.flo      optional
//   <root>/[<split parent>/]<sequence>/GT_pseudo/*.png       written by run_pseudo
//
// A split parent is a directory whose name contains "train" or "test"
// (case-insensitive), e.g. TrainDataset_per_sq. Sequences directly under the
// root get split "unspecified". File stems are frame numbers.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "vcod/errors.hpp"

namespace vcod::bench {

namespace fs = std::filesystem;

enum class Split { train, test, unspecified };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        default: return "unspecified";
    }
}

struct FrameFile {
    long index = 0;
    std::string stem;
    fs::path path;
};

struct SequenceEntry {
    std::string name;
    fs::path dir;
    Split split = Split::unspecified;
    std::vector<FrameFile> frames;  // ascending index
    std::vector<FrameFile> gt;      // ascending index, subset of frames
    std::optional<fs::path> flow_dir;
    std::optional<long> gt_stride;  // set when annotations are evenly spaced

    // Position of a frame index in `frames`.
    std::optional<std::size_t> frame_position(long index) const {
        const auto it = std::lower_bound(frames.begin(), frames.end(), index,
                                         [](const FrameFile& f, long i) { return f.index < i; });
        if (it == frames.end() || it->index != index) return std::nullopt;
        return static_cast<std::size_t>(it - frames.begin());
    }
};

struct ManifestIssue {
    std::string sequence;
    std::string reason;
};

struct DatasetManifest {
    fs::path root;
    std::vector<SequenceEntry> sequences;  // sorted by (split, name)
    std::vector<ManifestIssue> issues;     // non-fatal irregularities

    std::size_t frame_count() const {
        std::size_t n = 0;
        for (const auto& s : sequences) n += s.frames.size();
        return n;
    }
    std::size_t gt_count() const {
        std::size_t n = 0;
        for (const auto& s : sequences) n += s.gt.size();
        return n;
    }
    const SequenceEntry& sequence(const std::string& name) const {
        for (const auto& s : sequences)
            if (s.name == name) return s;
        throw InputError("no sequence named " + name);
    }
};

namespace detail {

inline std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline std::optional<long> parse_index(const std::string& stem) {
    if (stem.empty() || stem.size() > 12) return std::nullopt;
    for (char c : stem)
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    return std::stol(stem);
}

inline std::vector<fs::path> sorted_entries(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// Files with one of `exts`, sorted by name; indices must increase in that
// order, which rejects duplicates and mixed zero padding.
inline std::vector<FrameFile> numbered_files(const fs::path& dir, std::initializer_list<const char*> exts,
                                             const std::string& what) {
    std::vector<FrameFile> out;
    for (const auto& p : sorted_entries(dir)) {
        if (!fs::is_regular_file(p)) continue;
        const auto ext = lower(p.extension().string());
        if (std::none_of(exts.begin(), exts.end(), [&](const char* e) { return ext == e; })) continue;
        const auto stem = p.stem().string();
        const auto idx = parse_index(stem);
        if (!idx) throw ManifestError(what + " file " + p.string() + " is not named by a frame number");
        if (!out.empty() && *idx <= out.back().index) {
            throw ManifestError("non-monotonic " + what + " numbering at " + p.string() + " (index " +
                                std::to_string(*idx) + " after " + std::to_string(out.back().index) + ")");
        }
        out.push_back({*idx, stem, p});
    }
    return out;
}

inline std::optional<fs::path> frame_dir(const fs::path& seq) {
    for (const char* name : {"Frame", "Imgs"})
        if (fs::is_directory(seq / name)) return seq / name;
    return std::nullopt;
}

inline Split split_of(const std::string& dir_name) {
    const auto l = lower(dir_name);
    if (l.find("train") != std::string::npos) return Split::train;
    if (l.find("test") != std::string::npos) return Split::test;
    return Split::unspecified;
}

inline SequenceEntry scan_sequence(const fs::path& dir, Split split, std::vector<ManifestIssue>& issues) {
    SequenceEntry s;
    s.name = dir.filename().string();
    s.dir = dir;
    s.split = split;
    const auto fdir = frame_dir(dir);
    if (!fdir) throw ManifestError("sequence " + dir.string() + " has no Frame or Imgs directory");
    if (!fs::is_directory(dir / "GT")) throw ManifestError("sequence " + dir.string() + " has no GT directory");
    s.frames = numbered_files(*fdir, {".jpg", ".jpeg", ".png"}, "frame");
    if (s.frames.empty()) throw ManifestError("sequence " + dir.string() + " has no frames");
    s.gt = numbered_files(dir / "GT", {".png"}, "GT");
    for (const auto& g : s.gt) {
        if (!s.frame_position(g.index)) throw ManifestError("GT file " + g.path.string() + " has no matching frame");
    }
    if (s.gt.empty()) issues.push_back({s.name, "no annotated frames"});
    if (s.gt.size() >= 2) {
        const long stride = s.gt[1].index - s.gt[0].index;
        bool even = true;
        for (std::size_t i = 2; i < s.gt.size(); ++i) even = even && s.gt[i].index - s.gt[i - 1].index == stride;
        if (even) s.gt_stride = stride;
        else issues.push_back({s.name, "annotated frames are not evenly spaced"});
    }
    if (fs::is_directory(dir / "Flow")) s.flow_dir = dir / "Flow";
    return s;
}

inline bool looks_like_sequence(const fs::path& dir) { return fs::is_directory(dir / "GT") || frame_dir(dir); }

}  // namespace detail

inline DatasetManifest scan_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) throw ManifestError("dataset root " + root.string() + " is not a directory");
    DatasetManifest m;
    m.root = root;
    for (const auto& p : detail::sorted_entries(root)) {
        if (!fs::is_directory(p)) continue;
        if (detail::looks_like_sequence(p)) {
            m.sequences.push_back(detail::scan_sequence(p, Split::unspecified, m.issues));
            continue;
        }
        const auto split = detail::split_of(p.filename().string());
        if (split == Split::unspecified) continue;
        for (const auto& q : detail::sorted_entries(p)) {
            if (fs::is_directory(q)) m.sequences.push_back(detail::scan_sequence(q, split, m.issues));
        }
    }
    if (m.sequences.empty()) throw ManifestError("no sequences found under " + root.string());
    std::stable_sort(m.sequences.begin(), m.sequences.end(), [](const SequenceEntry& a, const SequenceEntry& b) {
        return std::pair(static_cast<int>(a.split), a.name) < std::pair(static_cast<int>(b.split), b.name);
    });
    for (std::size_t i = 1; i < m.sequences.size(); ++i) {
        if (m.sequences[i].name == m.sequences[i - 1].name && m.sequences[i].split == m.sequences[i - 1].split) {
            throw ManifestError("duplicate sequence name " + m.sequences[i].name);
        }
    }
    return m;
}

inline nlohmann::json manifest_summary(const DatasetManifest& m) {
    nlohmann::json seqs = nlohmann::json::array();
    std::map<std::string, std::size_t> per_split;
    for (const auto& s : m.sequences) {
        nlohmann::json j{{"name", s.name},
                         {"split", to_string(s.split)},
                         {"frames", s.frames.size()},
                         {"annotated", s.gt.size()},
                         {"flow", s.flow_dir.has_value()}};
        j["gt_stride"] = s.gt_stride ? nlohmann::json(*s.gt_stride) : nlohmann::json(nullptr);
        seqs.push_back(std::move(j));
        ++per_split[to_string(s.split)];
    }
    nlohmann::json issues = nlohmann::json::array();
    for (const auto& i : m.issues) issues.push_back({{"sequence", i.sequence}, {"reason", i.reason}});
    return {{"root", m.root.string()},     {"sequences", m.sequences.size()},
            {"frames", m.frame_count()},   {"annotated", m.gt_count()},
            {"per_split", per_split},      {"issues", issues},
            {"sequence_list", seqs}};
}

}  // namespace vcod::bench
