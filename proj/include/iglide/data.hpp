#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "iglide/csv.hpp"
#include "iglide/errors.hpp"

namespace iglide {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class DatasetKind { cmapss, mill, synthetic };
enum class Split { train, test };

inline std::string to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::cmapss: return "cmapss";
        case DatasetKind::mill: return "mill";
        case DatasetKind::synthetic: return "synthetic";
    }
    return "?";
}

inline DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "cmapss") return DatasetKind::cmapss;
    if (s == "mill") return DatasetKind::mill;
    if (s == "synthetic") return DatasetKind::synthetic;
    throw ConfigError("unknown dataset kind: " + s);
}

/// One run-to-failure unit. `sensors` is T x C in schema channel order.
/// For test units the RUL sequence is offset so its last entry equals the
/// ground-truth value at the last available cycle.
struct Trajectory {
    int unit_id = 0;
    std::vector<int> cycles;   // strictly increasing, starting at 1
    Mat op_settings;           // T x n_ops
    Mat sensors;               // T x C
    Vec rul;                   // length T; empty until labeled (MILL)
    Vec degradation;           // MILL wear channel; empty otherwise
    bool severe_only = false;      // MILL: wear already past 0.70 at first record
    bool rul_extrapolated = false; // MILL: never reached 0.70, slope-extrapolated

    int length() const { return static_cast<int>(cycles.size()); }
};

struct TrajectorySet {
    std::vector<Trajectory> units;
    std::vector<std::string> channel_names;
    std::vector<std::string> op_names;
    DatasetKind kind = DatasetKind::synthetic;

    int n_channels() const { return static_cast<int>(channel_names.size()); }
    std::size_t total_rows() const {
        std::size_t n = 0;
        for (const auto& u : units) n += u.cycles.size();
        return n;
    }
};

// ---------------------------------------------------------------------------
// Group specification
// ---------------------------------------------------------------------------

/// Ordered partition of sensor channels into subsystem groups. The order is
/// fixed and determines both the model head order and the HI feature order.
struct GroupSpec {
    std::vector<std::pair<std::string, std::vector<int>>> groups;

    int n_groups() const { return static_cast<int>(groups.size()); }

    int total_width() const {
        int w = 0;
        for (const auto& g : groups) w += static_cast<int>(g.second.size());
        return w;
    }

    const std::string& name(int g) const { return groups[g].first; }
    const std::vector<int>& channels(int g) const { return groups[g].second; }
    int width(int g) const { return static_cast<int>(groups[g].second.size()); }

    void validate(int n_channels) const {
        if (groups.empty()) throw SpecError("group spec has no groups");
        std::vector<char> seen(static_cast<std::size_t>(n_channels), 0);
        for (const auto& [name, chans] : groups) {
            if (chans.empty()) throw SpecError("group '" + name + "' is empty");
            for (int c : chans) {
                if (c < 0 || c >= n_channels) {
                    throw SpecError("group '" + name + "' references channel index " +
                                    std::to_string(c) + " outside schema of width " +
                                    std::to_string(n_channels));
                }
                if (seen[static_cast<std::size_t>(c)]) {
                    throw SpecError("channel index " + std::to_string(c) +
                                    " appears in more than one group");
                }
                seen[static_cast<std::size_t>(c)] = 1;
            }
        }
    }

    /// Resolve channel names against a schema; unknown names are an error.
    static GroupSpec from_names(const std::vector<std::string>& schema,
                                const std::vector<std::pair<std::string, std::vector<std::string>>>& named) {
        GroupSpec spec;
        for (const auto& [gname, chans] : named) {
            std::vector<int> idx;
            for (const auto& cname : chans) {
                auto it = std::find(schema.begin(), schema.end(), cname);
                if (it == schema.end()) {
                    throw SpecError("group '" + gname + "' names unknown channel '" + cname + "'");
                }
                idx.push_back(static_cast<int>(it - schema.begin()));
            }
            spec.groups.emplace_back(gname, std::move(idx));
        }
        spec.validate(static_cast<int>(schema.size()));
        return spec;
    }

    /// Single group covering every channel (monolithic models).
    static GroupSpec single(int n_channels, const std::string& name = "all") {
        GroupSpec spec;
        std::vector<int> all(static_cast<std::size_t>(n_channels));
        for (int i = 0; i < n_channels; ++i) all[static_cast<std::size_t>(i)] = i;
        spec.groups.emplace_back(name, std::move(all));
        return spec;
    }

    /// The C-MAPSS subsystem grouping (fan / LPC / HPC / core / pressure
    /// turbine / other) over sensor channels s_1..s_21.
    static GroupSpec cmapss_default() {
        auto s = [](std::initializer_list<int> ids) {
            std::vector<int> idx;
            for (int id : ids) idx.push_back(id - 1);  // s_k lives at column k-1
            return idx;
        };
        GroupSpec spec;
        spec.groups.emplace_back("fan", s({1, 5, 8, 13, 18, 19}));
        spec.groups.emplace_back("lpc", s({2}));
        spec.groups.emplace_back("hpc", s({3, 7, 11}));
        spec.groups.emplace_back("core", s({9, 14}));
        spec.groups.emplace_back("pressure_turbine", s({4, 20, 21}));
        spec.groups.emplace_back("other", s({6, 10, 12, 15, 16, 17}));
        return spec;
    }

    /// MILL channels grouped by sensor modality.
    static GroupSpec mill_default(const std::vector<std::string>& schema) {
        std::vector<std::pair<std::string, std::vector<std::string>>> named = {
            {"acoustic", {"ae_table", "ae_spindle"}},
            {"vibration", {"vib_table", "vib_spindle"}},
            {"current", {"smcac", "smcdc"}},
        };
        return from_names(schema, named);
    }
};

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Per-channel min-max statistics fit on the healthy training population.
/// apply() deliberately does not clip: degradation-phase values must stay
/// visible outside [0, 1].
struct NormStats {
    Vec min;
    Vec max;
    bool fitted = false;

    int n_channels() const { return static_cast<int>(min.size()); }
};

inline NormStats fit_norm(const Mat& samples) {
    if (samples.rows() < 1) throw FitError("fit_norm: no samples");
    NormStats st;
    st.min = samples.colwise().minCoeff();
    st.max = samples.colwise().maxCoeff();
    st.fitted = true;
    return st;
}

inline Mat apply_norm(const NormStats& st, const Mat& samples) {
    if (!st.fitted) throw UsageError("apply_norm called before fit_norm");
    if (samples.cols() != st.min.size()) {
        throw ShapeError("apply_norm: sample width " + std::to_string(samples.cols()) +
                         " != stats width " + std::to_string(st.min.size()));
    }
    Mat out(samples.rows(), samples.cols());
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
        const double range = st.max[c] - st.min[c];
        if (range == 0.0) {
            out.col(c).setZero();  // constant channel maps to 0
        } else {
            out.col(c) = (samples.col(c).array() - st.min[c]) / range;
        }
    }
    return out;
}

inline Vec apply_norm(const NormStats& st, const Vec& sample) {
    Mat m = apply_norm(st, Mat(sample.transpose()));
    return m.row(0).transpose();
}

// ---------------------------------------------------------------------------
// RUL labeling
// ---------------------------------------------------------------------------

struct RulLabelCfg {
    int r_early_train = 80;
    int r_early_test = 125;
    double mill_failure_wear = 0.70;

    void validate() const {
        if (r_early_train <= 0 || r_early_test <= 0) {
            throw ConfigError("RUL caps must be positive");
        }
    }
};

enum class HealthyKind { life_fraction, wear_threshold };

struct HealthyPolicy {
    HealthyKind kind = HealthyKind::life_fraction;
    double threshold = 0.20;
};

namespace detail {

/// First cycle position at which wear reaches `fail`, linearly interpolated
/// between observations. Falls back to extrapolating the last rising wear
/// segment for cases that never cross.
inline double mill_crossing_cycle(const Trajectory& t, double fail, bool& extrapolated) {
    const auto& w = t.degradation;
    extrapolated = false;
    if (w(0) >= fail) return static_cast<double>(t.cycles[0]);
    for (int i = 1; i < t.length(); ++i) {
        if (w(i) >= fail) {
            const double w0 = w(i - 1), w1 = w(i);
            const double c0 = t.cycles[static_cast<std::size_t>(i - 1)];
            const double c1 = t.cycles[static_cast<std::size_t>(i)];
            if (w1 == w0) return c1;
            return c0 + (fail - w0) / (w1 - w0) * (c1 - c0);
        }
    }
    // Never crossed: extrapolate from the last strictly rising segment.
    for (int i = t.length() - 1; i >= 1; --i) {
        const double dw = w(i) - w(i - 1);
        if (dw > 0.0) {
            const double dc = t.cycles[static_cast<std::size_t>(i)] -
                              t.cycles[static_cast<std::size_t>(i - 1)];
            extrapolated = true;
            return t.cycles.back() + (fail - w(t.length() - 1)) / (dw / dc);
        }
    }
    throw ValidationError("case " + std::to_string(t.unit_id) +
                          ": wear never rises, RUL proxy undefined");
}

}  // namespace detail

/// Replace every RUL value with min(raw, cap). MILL trajectories that carry
/// only a wear channel get their RUL proxy computed first: cycles remaining
/// until wear first reaches the failure level, interpolated at the crossing
/// and clamped at zero past it.
inline TrajectorySet label_rul(TrajectorySet ts, const RulLabelCfg& cfg, Split split) {
    cfg.validate();
    const double cap = (split == Split::train) ? cfg.r_early_train : cfg.r_early_test;
    for (auto& t : ts.units) {
        if (t.rul.size() == 0) {
            if (ts.kind != DatasetKind::mill || t.degradation.size() == 0) {
                throw UsageError("label_rul: trajectory " + std::to_string(t.unit_id) +
                                 " has no raw RUL labels");
            }
            bool extrap = false;
            const double cross = detail::mill_crossing_cycle(t, cfg.mill_failure_wear, extrap);
            t.rul_extrapolated = extrap;
            t.rul.resize(t.length());
            for (int i = 0; i < t.length(); ++i) {
                t.rul(i) = std::max(0.0, cross - t.cycles[static_cast<std::size_t>(i)]);
            }
        }
        t.rul = t.rul.cwiseMin(cap);
    }
    return ts;
}

// ---------------------------------------------------------------------------
// Sample extraction
// ---------------------------------------------------------------------------

struct SampleKey {
    int unit_id = 0;
    int cycle = 0;
};

/// Row-aligned flat view over trajectories: one row per (unit, cycle).
struct SampleSet {
    Mat x;                       // rows x channels
    std::vector<SampleKey> keys;
    Vec rul;                     // aligned targets (may be empty pre-labeling)
    Vec wear;                    // aligned MILL wear (empty otherwise)

    Eigen::Index rows() const { return x.rows(); }
};

inline SampleSet flatten(const TrajectorySet& ts) {
    SampleSet out;
    const std::size_t n = ts.total_rows();
    out.x.resize(static_cast<Eigen::Index>(n), ts.n_channels());
    out.keys.resize(n);
    const bool labeled = !ts.units.empty() && ts.units.front().rul.size() > 0;
    const bool has_wear = !ts.units.empty() && ts.units.front().degradation.size() > 0;
    if (labeled) out.rul.resize(static_cast<Eigen::Index>(n));
    if (has_wear) out.wear.resize(static_cast<Eigen::Index>(n));
    Eigen::Index r = 0;
    for (const auto& u : ts.units) {
        for (int i = 0; i < u.length(); ++i, ++r) {
            out.x.row(r) = u.sensors.row(i);
            out.keys[static_cast<std::size_t>(r)] = {u.unit_id, u.cycles[static_cast<std::size_t>(i)]};
            if (labeled) out.rul(r) = u.rul(i);
            if (has_wear) out.wear(r) = u.degradation(i);
        }
    }
    return out;
}

/// Samples the policy calls healthy, in trajectory order with row order
/// preserved. C-MAPSS-style data uses a life-fraction rule; MILL uses the
/// wear threshold.
inline SampleSet select_healthy(const TrajectorySet& ts, const HealthyPolicy& policy) {
    std::vector<std::pair<int, int>> picks;  // (unit index, row index)
    for (std::size_t ui = 0; ui < ts.units.size(); ++ui) {
        const auto& u = ts.units[ui];
        for (int i = 0; i < u.length(); ++i) {
            bool ok = false;
            if (policy.kind == HealthyKind::life_fraction) {
                const double frac = static_cast<double>(u.cycles[static_cast<std::size_t>(i)]) /
                                    static_cast<double>(u.cycles.back());
                ok = frac <= policy.threshold + 1e-12;
            } else {
                if (u.degradation.size() == 0) {
                    throw UsageError("wear_threshold policy on data without a wear channel");
                }
                ok = u.degradation(i) <= policy.threshold;
            }
            if (ok) picks.emplace_back(static_cast<int>(ui), i);
        }
    }
    if (picks.empty()) {
        throw ValidationError("healthy policy selected zero samples");
    }
    SampleSet out;
    out.x.resize(static_cast<Eigen::Index>(picks.size()), ts.n_channels());
    out.keys.resize(picks.size());
    const bool labeled = ts.units.front().rul.size() > 0;
    if (labeled) out.rul.resize(static_cast<Eigen::Index>(picks.size()));
    for (std::size_t r = 0; r < picks.size(); ++r) {
        const auto& u = ts.units[static_cast<std::size_t>(picks[r].first)];
        const int i = picks[r].second;
        out.x.row(static_cast<Eigen::Index>(r)) = u.sensors.row(i);
        out.keys[r] = {u.unit_id, u.cycles[static_cast<std::size_t>(i)]};
        if (labeled) out.rul(static_cast<Eigen::Index>(r)) = u.rul(i);
    }
    return out;
}

/// Column slices per group, rows aligned with the input.
inline std::vector<Mat> partition_groups(const Mat& samples, const GroupSpec& spec) {
    spec.validate(static_cast<int>(samples.cols()));
    std::vector<Mat> out;
    out.reserve(spec.groups.size());
    for (const auto& [name, chans] : spec.groups) {
        Mat m(samples.rows(), static_cast<Eigen::Index>(chans.size()));
        for (std::size_t j = 0; j < chans.size(); ++j) {
            m.col(static_cast<Eigen::Index>(j)) = samples.col(chans[j]);
        }
        out.push_back(std::move(m));
    }
    return out;
}

// ---------------------------------------------------------------------------
// C-MAPSS parsing
// ---------------------------------------------------------------------------

namespace detail {

inline void validate_cycles(const Trajectory& t, const std::string& what) {
    if (t.cycles.empty() || t.cycles.front() != 1) {
        throw ParseError(what + ": unit " + std::to_string(t.unit_id) +
                         " cycles must start at 1");
    }
    for (std::size_t i = 1; i < t.cycles.size(); ++i) {
        if (t.cycles[i] <= t.cycles[i - 1]) {
            throw ParseError(what + ": unit " + std::to_string(t.unit_id) +
                             " cycles not strictly increasing");
        }
    }
}

}  // namespace detail

/// Parse a C-MAPSS text file: whitespace-separated, 26 columns per row
/// (unit, cycle, 3 op settings, 21 sensors). Train RULs count down to zero
/// at the final cycle; test RULs are offset by the per-unit ground truth
/// from `rul_path`.
inline TrajectorySet parse_cmapss(const std::filesystem::path& path, Split split,
                                  const std::optional<std::filesystem::path>& rul_path = {}) {
    constexpr int kCols = 26;
    constexpr int kOps = 3;
    constexpr int kSensors = 21;

    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());

    struct RawUnit {
        std::vector<int> cycles;
        std::vector<std::array<double, kCols>> rows;
    };
    std::map<int, std::size_t> order;
    std::vector<int> unit_ids;
    std::vector<std::vector<std::array<double, kCols>>> raw;

    std::string line;
    std::size_t lineno = 0;
    std::size_t n_rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ss(line);
        std::array<double, kCols> vals{};
        int got = 0;
        double v;
        while (ss >> v) {
            if (got < kCols) vals[static_cast<std::size_t>(got)] = v;
            ++got;
        }
        if (got != kCols) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected 26 columns, got " + std::to_string(got));
        }
        const int unit = static_cast<int>(vals[0]);
        auto it = order.find(unit);
        if (it == order.end()) {
            order.emplace(unit, raw.size());
            unit_ids.push_back(unit);
            raw.emplace_back();
            it = order.find(unit);
        }
        raw[it->second].push_back(vals);
        ++n_rows;
    }
    if (n_rows == 0) {
        throw ParseError(path.string() + ": no data rows");
    }

    std::vector<double> test_ruls;
    if (split == Split::test) {
        if (!rul_path) {
            throw ConfigError("test split requires a RUL ground-truth file");
        }
        std::ifstream rin(*rul_path);
        if (!rin) throw IoError("cannot open: " + rul_path->string());
        double v;
        while (rin >> v) test_ruls.push_back(v);
        if (test_ruls.size() < raw.size()) {
            throw ParseError(rul_path->string() + ": has " + std::to_string(test_ruls.size()) +
                             " entries for " + std::to_string(raw.size()) + " units");
        }
    }

    TrajectorySet ts;
    ts.kind = DatasetKind::cmapss;
    for (int i = 0; i < kOps; ++i) ts.op_names.push_back("op_" + std::to_string(i + 1));
    for (int i = 0; i < kSensors; ++i) ts.channel_names.push_back("s_" + std::to_string(i + 1));

    for (std::size_t ui = 0; ui < raw.size(); ++ui) {
        const auto& rows = raw[ui];
        if (rows.size() < 2) {
            throw ValidationError(path.string() + ": unit " + std::to_string(unit_ids[ui]) +
                                  " rejected: fewer than 2 cycles");
        }
        Trajectory t;
        t.unit_id = unit_ids[ui];
        const int T = static_cast<int>(rows.size());
        t.cycles.resize(static_cast<std::size_t>(T));
        t.op_settings.resize(T, kOps);
        t.sensors.resize(T, kSensors);
        for (int r = 0; r < T; ++r) {
            const auto& row = rows[static_cast<std::size_t>(r)];
            t.cycles[static_cast<std::size_t>(r)] = static_cast<int>(row[1]);
            for (int c = 0; c < kOps; ++c) t.op_settings(r, c) = row[static_cast<std::size_t>(2 + c)];
            for (int c = 0; c < kSensors; ++c) t.sensors(r, c) = row[static_cast<std::size_t>(5 + c)];
        }
        detail::validate_cycles(t, path.string());
        t.rul.resize(T);
        const int last = t.cycles.back();
        const double offset = (split == Split::test) ? test_ruls[ui] : 0.0;
        for (int r = 0; r < T; ++r) {
            t.rul(r) = offset + (last - t.cycles[static_cast<std::size_t>(r)]);
        }
        ts.units.push_back(std::move(t));
    }
    return ts;
}

// ---------------------------------------------------------------------------
// MILL parsing
// ---------------------------------------------------------------------------

/// Column map for the MILL-style CSV layout; names refer to header cells.
struct MillColumnMap {
    std::string case_col = "case";
    std::string run_col = "run";
    std::vector<std::string> condition_cols = {"doc", "feed", "material"};
    std::string wear_col = "vb";
    std::vector<std::string> sensor_cols = {"smcac", "smcdc", "vib_table",
                                            "vib_spindle", "ae_table", "ae_spindle"};
};

namespace detail {

/// Fill NaN gaps linearly between the nearest valid neighbors; boundary
/// gaps take the nearest valid value.
inline void interpolate_gaps(Vec& v, const std::string& what) {
    const int n = static_cast<int>(v.size());
    int first_valid = -1;
    for (int i = 0; i < n; ++i) {
        if (std::isfinite(v(i))) { first_valid = i; break; }
    }
    if (first_valid < 0) {
        throw ValidationError(what + ": entire column missing");
    }
    for (int i = 0; i < first_valid; ++i) v(i) = v(first_valid);
    int prev = first_valid;
    for (int i = first_valid + 1; i < n; ++i) {
        if (!std::isfinite(v(i))) continue;
        if (i > prev + 1) {
            const double lo = v(prev), hi = v(i);
            for (int j = prev + 1; j < i; ++j) {
                v(j) = lo + (hi - lo) * static_cast<double>(j - prev) / static_cast<double>(i - prev);
            }
        }
        prev = i;
    }
    for (int i = prev + 1; i < n; ++i) v(i) = v(prev);
}

}  // namespace detail

/// Parse a MILL-style delimited file: one row per run with case id, run
/// conditions, wear value, and per-run sensor summaries. Missing cells
/// (empty or "nan") are filled by interpolation within each case.
inline TrajectorySet parse_mill(const std::filesystem::path& path,
                                const MillColumnMap& cols = {}) {
    CsvTable table = read_csv(path);
    auto col_of = [&](const std::string& name) {
        const int c = table.column(name);
        if (c < 0) throw ParseError(path.string() + ": missing column '" + name + "'");
        return c;
    };
    const int c_case = col_of(cols.case_col);
    const int c_run = col_of(cols.run_col);
    std::vector<int> c_cond, c_sens;
    for (const auto& n : cols.condition_cols) c_cond.push_back(col_of(n));
    const int c_wear = col_of(cols.wear_col);
    for (const auto& n : cols.sensor_cols) c_sens.push_back(col_of(n));

    auto cell_value = [](const std::string& s) -> double {
        if (s.empty() || s == "nan" || s == "NaN" || s == "NA") {
            return std::numeric_limits<double>::quiet_NaN();
        }
        return parse_double(s);
    };

    if (table.rows.empty()) {
        throw ParseError(path.string() + ": no data rows");
    }

    std::map<int, std::size_t> order;
    std::vector<int> case_ids;
    std::vector<std::vector<std::vector<double>>> raw;  // case -> rows -> cells
    for (const auto& row : table.rows) {
        const int cid = static_cast<int>(parse_double(row[static_cast<std::size_t>(c_case)]));
        auto it = order.find(cid);
        if (it == order.end()) {
            order.emplace(cid, raw.size());
            case_ids.push_back(cid);
            raw.emplace_back();
            it = order.find(cid);
        }
        std::vector<double> cells;
        cells.push_back(parse_double(row[static_cast<std::size_t>(c_run)]));
        for (int c : c_cond) cells.push_back(cell_value(row[static_cast<std::size_t>(c)]));
        cells.push_back(cell_value(row[static_cast<std::size_t>(c_wear)]));
        for (int c : c_sens) cells.push_back(cell_value(row[static_cast<std::size_t>(c)]));
        raw[it->second].push_back(std::move(cells));
    }

    TrajectorySet ts;
    ts.kind = DatasetKind::mill;
    ts.op_names = cols.condition_cols;
    ts.channel_names = cols.sensor_cols;
    const int n_cond = static_cast<int>(cols.condition_cols.size());
    const int n_sens = static_cast<int>(cols.sensor_cols.size());

    for (std::size_t ci = 0; ci < raw.size(); ++ci) {
        auto rows = raw[ci];
        if (rows.size() < 2) {
            throw ValidationError(path.string() + ": case " + std::to_string(case_ids[ci]) +
                                  " rejected: fewer than 2 runs");
        }
        std::sort(rows.begin(), rows.end(),
                  [](const auto& a, const auto& b) { return a[0] < b[0]; });
        Trajectory t;
        t.unit_id = case_ids[ci];
        const int T = static_cast<int>(rows.size());
        t.cycles.resize(static_cast<std::size_t>(T));
        t.op_settings.resize(T, n_cond);
        t.sensors.resize(T, n_sens);
        t.degradation.resize(T);
        for (int r = 0; r < T; ++r) {
            t.cycles[static_cast<std::size_t>(r)] = r + 1;  // renumber runs consecutively
            const auto& cells = rows[static_cast<std::size_t>(r)];
            for (int c = 0; c < n_cond; ++c) t.op_settings(r, c) = cells[static_cast<std::size_t>(1 + c)];
            t.degradation(r) = cells[static_cast<std::size_t>(1 + n_cond)];
            for (int c = 0; c < n_sens; ++c) {
                t.sensors(r, c) = cells[static_cast<std::size_t>(2 + n_cond + c)];
            }
        }
        const std::string what = "case " + std::to_string(t.unit_id);
        for (int c = 0; c < n_sens; ++c) {
            Vec col = t.sensors.col(c);
            detail::interpolate_gaps(col, what + " sensor " + cols.sensor_cols[static_cast<std::size_t>(c)]);
            t.sensors.col(c) = col;
        }
        detail::interpolate_gaps(t.degradation, what + " wear");
        for (int r = 0; r < T; ++r) {
            const double w = t.degradation(r);
            if (w < 0.0 || w > 1.0) {
                throw ValidationError(what + ": wear " + std::to_string(w) + " outside [0, 1]");
            }
        }
        t.severe_only = t.degradation(0) > 0.70;
        ts.units.push_back(std::move(t));
    }
    return ts;
}

}  // namespace iglide
