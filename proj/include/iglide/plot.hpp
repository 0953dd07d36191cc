#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "iglide/pipeline.hpp"

namespace iglide {

namespace detail {

inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

inline const std::vector<std::string>& plot_palette() {
    static const std::vector<std::string> colors = {
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
        "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#ad494a"};
    return colors;
}

}  // namespace detail

/// One unit's HI trajectories as an SVG: each feature is min-max scaled to
/// the panel and drawn as a polyline. NAP columns are clipped at their 99th
/// percentile (over the whole table) before scaling — display only, the
/// exported CSV values stay raw.
inline std::string render_hi_svg(const HiTable& t, int unit_id) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
        if (t.keys[static_cast<std::size_t>(r)].unit_id == unit_id) rows.push_back(r);
    }
    if (rows.empty()) throw UsageError("plot: unit " + std::to_string(unit_id) + " not in table");

    const int W = 960, H = 420, ML = 50, MR = 230, MT = 20, MB = 40;
    const double px = W - ML - MR, py = H - MT - MB;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<rect x=\"" << ML << "\" y=\"" << MT << "\" width=\"" << px << "\" height=\"" << py
       << "\" fill=\"none\" stroke=\"#aaa\"/>\n";

    const double c_lo = t.keys[static_cast<std::size_t>(rows.front())].cycle;
    const double c_hi = t.keys[static_cast<std::size_t>(rows.back())].cycle;
    const double c_span = std::max(1.0, c_hi - c_lo);

    for (std::size_t f = 0; f < t.names.size(); ++f) {
        const auto col = static_cast<Eigen::Index>(f);
        double clip = std::numeric_limits<double>::infinity();
        if (t.names[f].rfind("nap", 0) == 0) {
            std::vector<double> all(static_cast<std::size_t>(t.rows()));
            for (Eigen::Index r = 0; r < t.rows(); ++r) all[static_cast<std::size_t>(r)] = t.x(r, col);
            clip = detail::percentile(all, 0.99);
        }
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        std::vector<double> vals;
        vals.reserve(rows.size());
        for (Eigen::Index r : rows) {
            const double v = std::min(t.x(r, col), clip);
            vals.push_back(v);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double span = (hi > lo) ? hi - lo : 1.0;
        const std::string& color =
            detail::plot_palette()[f % detail::plot_palette().size()];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double cx =
                ML + (t.keys[static_cast<std::size_t>(rows[i])].cycle - c_lo) / c_span * px;
            const double cy = MT + py - (vals[i] - lo) / span * py;
            os << format_double(cx) << "," << format_double(cy) << " ";
        }
        os << "\"/>\n";
        const double ly = MT + 14.0 + 16.0 * static_cast<double>(f);
        os << "<rect x=\"" << (W - MR + 10) << "\" y=\"" << (ly - 9) << "\" width=\"10\" height=\"10\" fill=\""
           << color << "\"/>\n";
        os << "<text x=\"" << (W - MR + 26) << "\" y=\"" << ly
           << "\" font-family=\"monospace\" font-size=\"12\">" << t.names[f] << "</text>\n";
    }
    os << "<text x=\"" << (ML + px / 2) << "\" y=\"" << (H - 10)
       << "\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\">cycle (unit "
       << unit_id << ", per-feature scaled)</text>\n";
    os << "</svg>\n";
    return os.str();
}

/// Render every unit in the table (or one unit if `only_unit` >= 0) to
/// unit-<id>.svg files under out_dir.
inline std::vector<fs::path> plot_hi_table(const HiTable& t, const fs::path& out_dir,
                                           int only_unit = -1) {
    std::vector<int> units;
    for (const auto& k : t.keys) {
        if (std::find(units.begin(), units.end(), k.unit_id) == units.end()) {
            units.push_back(k.unit_id);
        }
    }
    std::vector<fs::path> written;
    for (int u : units) {
        if (only_unit >= 0 && u != only_unit) continue;
        const fs::path p = out_dir / ("unit-" + std::to_string(u) + ".svg");
        atomic_write(p, render_hi_svg(t, u));
        written.push_back(p);
    }
    if (written.empty()) {
        throw UsageError("plot: unit " + std::to_string(only_unit) + " not in table");
    }
    return written;
}

}  // namespace iglide
