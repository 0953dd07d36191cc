#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "iglide/data.hpp"
#include "iglide/rng.hpp"

namespace iglide {

/// Synthetic run-to-failure generator. Channels carry a per-schema baseline
/// plus, inside one degrading group per unit, a signed drift that follows an
/// exponential saturation curve after a random onset point.
struct SynthCfg {
    int n_train_units = 20;
    int n_test_units = 10;
    int n_channels = 12;
    int n_groups = 3;
    double noise_sd = 0.02;
    int min_len = 120;
    int max_len = 220;
    double onset_lo = 0.3;
    double onset_hi = 0.6;
    double test_keep_lo = 0.4;   // test units keep this fraction of their life
    double test_keep_hi = 0.9;
    int degrade_group = -1;      // -1: drawn per unit
    double curve_rate = 3.0;     // exponential sharpness; 0 = linear
    std::uint64_t seed = 0;

    void validate() const {
        if (n_train_units < 1 || n_test_units < 0) throw ConfigError("synth: unit counts invalid");
        if (n_groups < 1 || n_channels < n_groups) {
            throw ConfigError("synth: need at least one channel per group");
        }
        if (min_len < 5 || max_len < min_len) throw ConfigError("synth: bad length range");
        if (!(onset_lo >= 0.0 && onset_hi < 1.0 && onset_lo <= onset_hi)) {
            throw ConfigError("synth: onset range must sit inside [0, 1)");
        }
        if (!(test_keep_lo > 0.0 && test_keep_hi <= 1.0 && test_keep_lo <= test_keep_hi)) {
            throw ConfigError("synth: keep range must sit inside (0, 1]");
        }
        if (degrade_group >= n_groups) throw ConfigError("synth: degrade_group out of range");
        if (noise_sd < 0.0) throw ConfigError("synth: negative noise");
    }
};

struct SynthUnitParams {
    int degrade_group = 0;
    double onset_frac = 0.0;
    int total_len = 0;  // full life in cycles
    int kept_len = 0;   // rows emitted (test units are truncated)
};

/// Everything the generator drew, exposed so tests can check outputs against
/// the parameters that produced them.
struct SynthParams {
    Vec baseline;     // per channel, shared by train and test
    Vec sensitivity;  // per channel, signed drift magnitude at end of life
    GroupSpec groups;
    std::vector<SynthUnitParams> train_units;
    std::vector<SynthUnitParams> test_units;
};

struct SynthResult {
    TrajectorySet train;
    TrajectorySet test;
    SynthParams params;
};

namespace detail {

inline double degradation_curve(double s, double k) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    if (k == 0.0) return s;
    return std::expm1(k * s) / std::expm1(k);
}

}  // namespace detail

inline SynthResult make_synthetic(const SynthCfg& cfg) {
    cfg.validate();
    RngStream root(cfg.seed);
    RngStream schema_rng = root.fork(0);
    RngStream train_rng = root.fork(1);
    RngStream test_rng = root.fork(2);

    SynthResult out;
    auto& p = out.params;
    p.baseline.resize(cfg.n_channels);
    p.sensitivity.resize(cfg.n_channels);
    for (int c = 0; c < cfg.n_channels; ++c) {
        p.baseline(c) = schema_rng.uniform_in(0.2, 0.8);
        const double mag = schema_rng.uniform_in(0.5, 1.0);
        p.sensitivity(c) = (schema_rng.uniform() < 0.5) ? -mag : mag;
    }

    // Contiguous near-equal channel blocks.
    const int base = cfg.n_channels / cfg.n_groups;
    const int rem = cfg.n_channels % cfg.n_groups;
    int next = 0;
    for (int g = 0; g < cfg.n_groups; ++g) {
        const int w = base + (g < rem ? 1 : 0);
        std::vector<int> chans;
        for (int j = 0; j < w; ++j) chans.push_back(next++);
        p.groups.groups.emplace_back("g" + std::to_string(g), std::move(chans));
    }

    auto channel_names = [&] {
        std::vector<std::string> names;
        for (int c = 0; c < cfg.n_channels; ++c) names.push_back("c" + std::to_string(c));
        return names;
    };

    auto gen_split = [&](RngStream& rng, int n_units, bool truncate,
                         std::vector<SynthUnitParams>& params_out) {
        TrajectorySet ts;
        ts.kind = DatasetKind::synthetic;
        ts.channel_names = channel_names();
        for (int u = 0; u < n_units; ++u) {
            SynthUnitParams up;
            up.total_len = cfg.min_len +
                           static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.max_len - cfg.min_len + 1)));
            up.onset_frac = rng.uniform_in(cfg.onset_lo, cfg.onset_hi);
            up.degrade_group = (cfg.degrade_group >= 0)
                                   ? cfg.degrade_group
                                   : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg.n_groups)));
            up.kept_len = up.total_len;
            if (truncate) {
                const double keep = rng.uniform_in(cfg.test_keep_lo, cfg.test_keep_hi);
                up.kept_len = std::max(2, std::min(up.total_len - 1,
                                                   static_cast<int>(std::lround(keep * up.total_len))));
            }

            const auto& gchans = p.groups.channels(up.degrade_group);
            Trajectory t;
            t.unit_id = u + 1;
            t.cycles.resize(static_cast<std::size_t>(up.kept_len));
            t.op_settings.resize(up.kept_len, 0);
            t.sensors.resize(up.kept_len, cfg.n_channels);
            t.rul.resize(up.kept_len);
            for (int i = 0; i < up.kept_len; ++i) {
                const int cyc = i + 1;
                t.cycles[static_cast<std::size_t>(i)] = cyc;
                const double frac = static_cast<double>(cyc) / up.total_len;
                const double s = (frac - up.onset_frac) / (1.0 - up.onset_frac);
                const double d = detail::degradation_curve(s, cfg.curve_rate);
                for (int c = 0; c < cfg.n_channels; ++c) {
                    const bool hit = std::find(gchans.begin(), gchans.end(), c) != gchans.end();
                    t.sensors(i, c) = p.baseline(c) + (hit ? p.sensitivity(c) * d : 0.0) +
                                      cfg.noise_sd * rng.normal();
                }
                t.rul(i) = up.total_len - cyc;
            }
            params_out.push_back(up);
            ts.units.push_back(std::move(t));
        }
        return ts;
    };

    out.train = gen_split(train_rng, cfg.n_train_units, false, p.train_units);
    out.test = gen_split(test_rng, cfg.n_test_units, true, p.test_units);
    return out;
}

}  // namespace iglide
