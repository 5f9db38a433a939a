#pragma once

// Report emission. Columns follow the benchmark table order
// S_alpha, F_beta^w, E_phi, M, mDic, mIoU. CSV carries 4 decimals, markdown 3.
// Output depends only on the reports passed in.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "vcod/errors.hpp"
#include "vcod/metrics.hpp"

namespace vcod::bench {

inline constexpr std::array<const char*, 6> kCsvColumns = {"s_alpha", "f_beta_w", "e_phi", "mae", "m_dice", "m_iou"};
inline constexpr std::array<const char*, 6> kMarkdownColumns = {"S_α ↑", "F_β^w ↑", "E_φ ↑", "M ↓", "mDic", "mIoU"};

inline std::array<double, 6> report_values(const MetricReport& r) {
    return {r.s_alpha, r.f_beta_w, r.e_phi_mean, r.mae, r.m_dice, r.m_iou};
}

inline MetricReport report_from_values(const std::array<double, 6>& v, std::size_t frames = 0) {
    MetricReport r;
    r.s_alpha = v[0];
    r.f_beta_w = v[1];
    r.e_phi_mean = v[2];
    r.mae = v[3];
    r.m_dice = v[4];
    r.m_iou = v[5];
    r.frame_count = frames;
    return r;
}

// Fixed-point with '.' regardless of locale.
inline std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    for (auto& c : s)
        if (c == ',') c = '.';
    if (s == "-0.000" || s == "-0.0000") s.erase(0, 1);
    return s;
}

inline std::string markdown_row(const std::string& label, const MetricReport& r) {
    std::string row = "| " + label + " |";
    for (double v : report_values(r)) row += " " + fixed(v, 3) + " |";
    return row;
}

inline std::string markdown_header(const std::string& first = "Sequence") {
    std::string h = "| " + first + " |", rule = "|---|";
    for (const char* c : kMarkdownColumns) {
        h += std::string(" ") + c + " |";
        rule += "---|";
    }
    return h + "\n" + rule + "\n";
}

inline constexpr const char* kOverallLabel = "Overall";

inline std::string markdown_table(const GroupedReport& g) {
    std::string out = markdown_header();
    for (const auto& [name, r] : g.per_group) out += markdown_row(name, r) + "\n";
    out += markdown_row(kOverallLabel, g.overall) + "\n";
    return out;
}

inline std::string csv_table(const GroupedReport& g) {
    std::string out = "sequence,frames";
    for (const char* c : kCsvColumns) out += std::string(",") + c;
    out += "\n";
    auto line = [&](const std::string& name, const MetricReport& r) {
        out += name + "," + std::to_string(r.frame_count);
        for (double v : report_values(r)) out += "," + fixed(v, 4);
        out += "\n";
    };
    for (const auto& [name, r] : g.per_group) line(name, r);
    line(kOverallLabel, g.overall);
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot create " + path.string());
    out << text;
}

}  // namespace vcod::bench
