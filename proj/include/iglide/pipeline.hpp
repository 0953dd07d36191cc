#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iglide/csv.hpp"
#include "iglide/data.hpp"
#include "iglide/forest.hpp"
#include "iglide/model.hpp"
#include "iglide/rapp.hpp"
#include "iglide/serialize.hpp"
#include "iglide/synthetic.hpp"
#include "iglide/uq.hpp"

namespace iglide {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct DatasetCfg {
    DatasetKind kind = DatasetKind::synthetic;
    std::string name;  // display label; defaults to the kind
    std::string train_path, test_path, rul_path;  // cmapss
    std::string mill_path;                        // mill
    MillColumnMap mill_columns;
    SynthCfg synth;

    std::string label() const { return name.empty() ? to_string(kind) : name; }
};

struct ExperimentConfig {
    DatasetCfg dataset;
    // Named group spec; empty selects the dataset default grouping.
    std::vector<std::pair<std::string, std::vector<std::string>>> group_names;
    ModelConfig model;
    UqConfig uq;
    ForestConfig forest;
    RulLabelCfg rul;
    std::string healthy_kind = "auto";  // auto | life_fraction | wear_threshold
    double healthy_threshold = 0.20;
    HiSetKind hi_set = HiSetKind::groups;
    Variant variant = Variant::ae;
    bool include_op_settings = false;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::string out_dir = "out";

    void validate() const {
        model.validate();
        uq.validate();
        forest.validate();
        rul.validate();
        if (seeds.empty()) throw ConfigError("seeds must be non-empty");
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            for (std::size_t k = i + 1; k < seeds.size(); ++k) {
                if (seeds[i] == seeds[k]) throw ConfigError("seeds must be distinct");
            }
        }
        if (healthy_kind != "auto" && healthy_kind != "life_fraction" &&
            healthy_kind != "wear_threshold") {
            throw ConfigError("healthy_kind must be auto|life_fraction|wear_threshold");
        }
        if (healthy_threshold <= 0.0 || healthy_threshold >= 1.0) {
            throw ConfigError("healthy_threshold must lie in (0, 1)");
        }
        if (dataset.kind == DatasetKind::cmapss &&
            (dataset.train_path.empty() || dataset.test_path.empty() || dataset.rul_path.empty())) {
            throw ConfigError("cmapss dataset needs train_path, test_path and rul_path");
        }
        if (dataset.kind == DatasetKind::mill && dataset.mill_path.empty()) {
            throw ConfigError("mill dataset needs mill_path");
        }
    }
};

namespace detail {

inline void check_keys(const Json& j, const std::vector<std::string>& allowed,
                       const std::string& ctx) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
            throw ConfigError("unknown key '" + it.key() + "' in " + ctx);
        }
    }
}

template <typename T>
void get_if(const Json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace detail

/// Canonical JSON form of a config: every field materialized, keys sorted by
/// the serializer. This is both the documented schema and the hash input.
inline Json config_to_json(const ExperimentConfig& c) {
    Json groups = Json::array();
    for (const auto& [n, chans] : c.group_names) {
        groups.push_back(Json{{"name", n}, {"channels", chans}});
    }
    return Json{
        {"dataset",
         {{"kind", to_string(c.dataset.kind)},
          {"name", c.dataset.label()},
          {"train_path", c.dataset.train_path},
          {"test_path", c.dataset.test_path},
          {"rul_path", c.dataset.rul_path},
          {"mill_path", c.dataset.mill_path},
          {"synth",
           {{"n_train_units", c.dataset.synth.n_train_units},
            {"n_test_units", c.dataset.synth.n_test_units},
            {"n_channels", c.dataset.synth.n_channels},
            {"n_groups", c.dataset.synth.n_groups},
            {"noise_sd", c.dataset.synth.noise_sd},
            {"min_len", c.dataset.synth.min_len},
            {"max_len", c.dataset.synth.max_len},
            {"onset_lo", c.dataset.synth.onset_lo},
            {"onset_hi", c.dataset.synth.onset_hi},
            {"test_keep_lo", c.dataset.synth.test_keep_lo},
            {"test_keep_hi", c.dataset.synth.test_keep_hi},
            {"degrade_group", c.dataset.synth.degrade_group},
            {"curve_rate", c.dataset.synth.curve_rate},
            {"seed", c.dataset.synth.seed}}}}},
        {"groups", std::move(groups)},
        {"model",
         {{"latent_dim", c.model.latent_dim},
          {"dropout", c.model.dropout},
          {"beta", c.model.beta},
          {"batch_size", c.model.batch_size},
          {"epochs", c.model.epochs},
          {"window_size", c.model.window_size},
          {"test_size", c.model.test_size},
          {"lr", c.model.adam.lr}}},
        {"uq", {{"n_samples", c.uq.n_samples}}},
        {"forest", to_json(c.forest)},
        {"rul",
         {{"r_early_train", c.rul.r_early_train},
          {"r_early_test", c.rul.r_early_test},
          {"mill_failure_wear", c.rul.mill_failure_wear}}},
        {"healthy", {{"kind", c.healthy_kind}, {"threshold", c.healthy_threshold}}},
        {"hi_set", to_string(c.hi_set)},
        {"variant", to_string(c.variant)},
        {"include_op_settings", c.include_op_settings},
        {"seeds", c.seeds},
        {"out_dir", c.out_dir}};
}

/// Parse a config file; unknown keys are rejected so typos cannot silently
/// fall back to defaults. Every field is optional and defaults as documented.
inline ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig c;
    detail::check_keys(j,
                       {"dataset", "groups", "model", "uq", "forest", "rul", "healthy", "hi_set",
                        "variant", "include_op_settings", "seeds", "out_dir"},
                       "config root");
    if (j.contains("dataset")) {
        const Json& d = j.at("dataset");
        detail::check_keys(
            d, {"kind", "name", "train_path", "test_path", "rul_path", "mill_path", "synth"},
            "dataset");
        if (d.contains("kind")) c.dataset.kind = dataset_kind_from_string(d.at("kind"));
        detail::get_if(d, "name", c.dataset.name);
        detail::get_if(d, "train_path", c.dataset.train_path);
        detail::get_if(d, "test_path", c.dataset.test_path);
        detail::get_if(d, "rul_path", c.dataset.rul_path);
        detail::get_if(d, "mill_path", c.dataset.mill_path);
        if (d.contains("synth")) {
            const Json& s = d.at("synth");
            detail::check_keys(s,
                               {"n_train_units", "n_test_units", "n_channels", "n_groups",
                                "noise_sd", "min_len", "max_len", "onset_lo", "onset_hi",
                                "test_keep_lo", "test_keep_hi", "degrade_group", "curve_rate",
                                "seed"},
                               "dataset.synth");
            auto& sc = c.dataset.synth;
            detail::get_if(s, "n_train_units", sc.n_train_units);
            detail::get_if(s, "n_test_units", sc.n_test_units);
            detail::get_if(s, "n_channels", sc.n_channels);
            detail::get_if(s, "n_groups", sc.n_groups);
            detail::get_if(s, "noise_sd", sc.noise_sd);
            detail::get_if(s, "min_len", sc.min_len);
            detail::get_if(s, "max_len", sc.max_len);
            detail::get_if(s, "onset_lo", sc.onset_lo);
            detail::get_if(s, "onset_hi", sc.onset_hi);
            detail::get_if(s, "test_keep_lo", sc.test_keep_lo);
            detail::get_if(s, "test_keep_hi", sc.test_keep_hi);
            detail::get_if(s, "degrade_group", sc.degrade_group);
            detail::get_if(s, "curve_rate", sc.curve_rate);
            detail::get_if(s, "seed", sc.seed);
        }
    }
    if (j.contains("groups")) {
        for (const auto& g : j.at("groups")) {
            detail::check_keys(g, {"name", "channels"}, "groups[]");
            c.group_names.emplace_back(g.at("name").get<std::string>(),
                                       g.at("channels").get<std::vector<std::string>>());
        }
    }
    if (j.contains("model")) {
        const Json& m = j.at("model");
        detail::check_keys(
            m, {"latent_dim", "dropout", "beta", "batch_size", "epochs", "window_size",
                "test_size", "lr"},
            "model");
        detail::get_if(m, "latent_dim", c.model.latent_dim);
        detail::get_if(m, "dropout", c.model.dropout);
        detail::get_if(m, "beta", c.model.beta);
        detail::get_if(m, "batch_size", c.model.batch_size);
        detail::get_if(m, "epochs", c.model.epochs);
        detail::get_if(m, "window_size", c.model.window_size);
        detail::get_if(m, "test_size", c.model.test_size);
        detail::get_if(m, "lr", c.model.adam.lr);
    }
    if (j.contains("uq")) {
        detail::check_keys(j.at("uq"), {"n_samples"}, "uq");
        detail::get_if(j.at("uq"), "n_samples", c.uq.n_samples);
    }
    if (j.contains("forest")) {
        const Json& f = j.at("forest");
        detail::check_keys(f,
                           {"n_estimators", "max_depth", "min_samples_split", "random_state",
                            "bootstrap", "max_features"},
                           "forest");
        detail::get_if(f, "n_estimators", c.forest.n_estimators);
        detail::get_if(f, "max_depth", c.forest.max_depth);
        detail::get_if(f, "min_samples_split", c.forest.min_samples_split);
        detail::get_if(f, "random_state", c.forest.random_state);
        detail::get_if(f, "bootstrap", c.forest.bootstrap);
        detail::get_if(f, "max_features", c.forest.max_features);
    }
    if (j.contains("rul")) {
        const Json& r = j.at("rul");
        detail::check_keys(r, {"r_early_train", "r_early_test", "mill_failure_wear"}, "rul");
        detail::get_if(r, "r_early_train", c.rul.r_early_train);
        detail::get_if(r, "r_early_test", c.rul.r_early_test);
        detail::get_if(r, "mill_failure_wear", c.rul.mill_failure_wear);
    }
    if (j.contains("healthy")) {
        const Json& h = j.at("healthy");
        detail::check_keys(h, {"kind", "threshold"}, "healthy");
        detail::get_if(h, "kind", c.healthy_kind);
        detail::get_if(h, "threshold", c.healthy_threshold);
    }
    if (j.contains("hi_set")) c.hi_set = hi_set_kind_from_string(j.at("hi_set"));
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant"));
    detail::get_if(j, "include_op_settings", c.include_op_settings);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    detail::get_if(j, "out_dir", c.out_dir);
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    return config_from_json(j);
}

/// Hash of the canonical config, excluding the output directory (moving the
/// artifacts does not change what they contain).
inline std::uint64_t config_hash(const ExperimentConfig& c) {
    Json j = config_to_json(c);
    j.erase("out_dir");
    return fnv1a64(j.dump());
}

/// Model shape implied by the HI set: `groups` uses the dataset grouping,
/// everything else collapses to a single all-channel group.
inline std::string shape_tag(HiSetKind hi_set) {
    return hi_set == HiSetKind::groups ? "groups" : "mono";
}

/// Hash over only the fields the prepared bundle depends on, so one bundle
/// serves every (variant, hi_set) cell and survives model/forest retuning.
inline std::uint64_t bundle_config_hash(const ExperimentConfig& c) {
    Json j = config_to_json(c);
    for (const char* k : {"model", "uq", "forest", "hi_set", "variant", "seeds", "out_dir"}) {
        j.erase(k);
    }
    return fnv1a64(j.dump());
}

/// Hash over the fields a trained extractor depends on. The HI set enters
/// only through the model shape, so the mono and gonzalez sets (both
/// single-group models) share checkpoints; the seed lives in the filename.
inline std::uint64_t model_config_hash(const ExperimentConfig& c) {
    Json j = config_to_json(c);
    for (const char* k : {"uq", "forest", "seeds", "out_dir"}) j.erase(k);
    j["hi_set"] = shape_tag(c.hi_set);
    return fnv1a64(j.dump());
}

// ---------------------------------------------------------------------------
// Prepare
// ---------------------------------------------------------------------------

namespace detail {

/// Append operational-setting columns as extra channels under an "ops" group.
inline void fold_op_settings(TrajectorySet& ts) {
    if (ts.op_names.empty()) return;
    const int extra = static_cast<int>(ts.op_names.size());
    for (auto& u : ts.units) {
        Mat merged(u.sensors.rows(), u.sensors.cols() + extra);
        merged << u.sensors, u.op_settings;
        u.sensors = std::move(merged);
    }
    for (const auto& n : ts.op_names) ts.channel_names.push_back(n);
}

inline HealthyPolicy resolve_healthy(const ExperimentConfig& cfg) {
    HealthyPolicy p;
    p.threshold = cfg.healthy_threshold;
    if (cfg.healthy_kind == "life_fraction") {
        p.kind = HealthyKind::life_fraction;
    } else if (cfg.healthy_kind == "wear_threshold") {
        p.kind = HealthyKind::wear_threshold;
    } else {
        p.kind = (cfg.dataset.kind == DatasetKind::mill) ? HealthyKind::wear_threshold
                                                         : HealthyKind::life_fraction;
    }
    return p;
}

inline GroupSpec resolve_groups(const ExperimentConfig& cfg, const TrajectorySet& train,
                                const GroupSpec* synth_groups) {
    GroupSpec spec;
    if (!cfg.group_names.empty()) {
        spec = GroupSpec::from_names(train.channel_names, cfg.group_names);
    } else if (cfg.dataset.kind == DatasetKind::cmapss) {
        spec = GroupSpec::cmapss_default();
    } else if (cfg.dataset.kind == DatasetKind::mill) {
        spec = GroupSpec::mill_default(train.channel_names);
    } else {
        spec = *synth_groups;
    }
    if (cfg.include_op_settings) {
        // ops channels were appended after the sensor channels
        std::vector<int> ops;
        for (int ci = train.n_channels() - static_cast<int>(train.op_names.size());
             ci < train.n_channels(); ++ci) {
            ops.push_back(ci);
        }
        if (!ops.empty()) spec.groups.emplace_back("ops", std::move(ops));
    }
    spec.validate(train.n_channels());
    return spec;
}

}  // namespace detail

inline fs::path bundle_path(const ExperimentConfig& cfg) {
    return fs::path(cfg.out_dir) / "bundle.json";
}

/// Parse, label, normalize and persist the dataset. Normalization is fit on
/// healthy training rows only; the bundle stores normalized sensors.
inline DataBundle cmd_prepare(const ExperimentConfig& cfg) {
    cfg.validate();
    DataBundle b;
    const GroupSpec* synth_groups = nullptr;
    SynthResult synth;
    switch (cfg.dataset.kind) {
        case DatasetKind::cmapss:
            b.train = parse_cmapss(cfg.dataset.train_path, Split::train);
            b.test = parse_cmapss(cfg.dataset.test_path, Split::test,
                                  fs::path(cfg.dataset.rul_path));
            break;
        case DatasetKind::mill: {
            TrajectorySet all = parse_mill(cfg.dataset.mill_path, cfg.dataset.mill_columns);
            b.train = all;
            b.test = std::move(all);
            break;
        }
        case DatasetKind::synthetic:
            synth = make_synthetic(cfg.dataset.synth);
            synth_groups = &synth.params.groups;
            b.train = std::move(synth.train);
            b.test = std::move(synth.test);
            break;
    }
    b.train = label_rul(std::move(b.train), cfg.rul, Split::train);
    b.test = label_rul(std::move(b.test), cfg.rul, Split::test);
    if (cfg.include_op_settings) {
        detail::fold_op_settings(b.train);
        detail::fold_op_settings(b.test);
    }
    b.groups = detail::resolve_groups(cfg, b.train, synth_groups);

    const HealthyPolicy policy = detail::resolve_healthy(cfg);
    SampleSet healthy = select_healthy(b.train, policy);
    b.norm = fit_norm(healthy.x);
    for (auto& u : b.train.units) u.sensors = apply_norm(b.norm, u.sensors);
    for (auto& u : b.test.units) u.sensors = apply_norm(b.norm, u.sensors);

    save_bundle(bundle_path(cfg), b, bundle_config_hash(cfg));
    std::cout << "[prepare] " << cfg.dataset.label() << ": " << b.train.units.size()
              << " train units, " << b.test.units.size() << " test units, "
              << healthy.rows() << " healthy rows, " << b.groups.n_groups() << " groups\n";
    return b;
}

inline DataBundle load_or_prepare(const ExperimentConfig& cfg) {
    const fs::path p = bundle_path(cfg);
    if (fs::exists(p)) {
        auto [b, hash] = load_bundle(p);
        if (hash == bundle_config_hash(cfg)) return std::move(b);
        std::cout << "[prepare] bundle config hash differs, regenerating\n";
    }
    return cmd_prepare(cfg);
}

// ---------------------------------------------------------------------------
// Train
// ---------------------------------------------------------------------------

/// The group spec the model is built over, per the HI set's shape.
inline GroupSpec model_groups(const DataBundle& b, HiSetKind hi_set) {
    if (hi_set == HiSetKind::groups) return b.groups;
    return GroupSpec::single(b.train.n_channels());
}

inline fs::path model_path(const ExperimentConfig& cfg, std::uint64_t seed) {
    return fs::path(cfg.out_dir) / "models" /
           ("model-" + to_string(cfg.variant) + "-" + shape_tag(cfg.hi_set) + "-seed" +
            std::to_string(seed) + ".json");
}

inline void write_loss_csv(const fs::path& path, const TrainHistory& hist) {
    CsvTable t;
    t.header = {"epoch", "train_loss", "val_loss", "kl_term"};
    for (std::size_t e = 0; e < hist.epochs.size(); ++e) {
        const auto& st = hist.epochs[e];
        t.rows.push_back({std::to_string(e + 1), format_double(st.train_loss),
                          format_double(st.val_loss), format_double(st.kl)});
    }
    write_csv(path, t);
}

/// Train one seed's HI extractor (or reuse a cached checkpoint whose config
/// hash matches). NAP statistics are fit on the same healthy rows and stored
/// alongside the weights.
inline ModelCheckpoint cmd_train(const ExperimentConfig& cfg, const DataBundle& b,
                                 std::uint64_t seed) {
    const fs::path path = model_path(cfg, seed);
    const std::uint64_t want_hash = model_config_hash(cfg);
    if (fs::exists(path)) {
        auto [ck, hash] = load_model_checkpoint(path);
        if (hash == want_hash) {
            std::cout << "[train] seed " << seed << ": cached checkpoint reused\n";
            return std::move(ck);
        }
    }
    const HealthyPolicy policy = detail::resolve_healthy(cfg);
    SampleSet healthy = select_healthy(b.train, policy);

    ModelConfig mc = cfg.model;
    mc.seed = seed;
    GroupSpec spec = model_groups(b, cfg.hi_set);
    AutoencoderModel model = build_model(spec, b.train.n_channels(), mc, cfg.variant);
    RngStream rng(derive_seed(seed, 0x747261696eULL));
    TrainHistory hist;
    try {
        hist = train_model(model, healthy.x, mc, rng);
    } catch (const FitError& e) {
        throw FitError("seed " + std::to_string(seed) + ": " + e.what());
    }

    ModelCheckpoint ck;
    ck.model = std::move(model);
    ck.rapp = fit_nap(ck.model, healthy.x);
    ck.norm = b.norm;
    save_model_checkpoint(path, ck, want_hash);
    write_loss_csv(fs::path(cfg.out_dir) / "models" /
                       ("loss-" + to_string(cfg.variant) + "-" + shape_tag(cfg.hi_set) + "-seed" +
                        std::to_string(seed) + ".csv"),
                   hist);
    std::cout << "[train] seed " << seed << ": " << to_string(cfg.variant) << "/"
              << shape_tag(cfg.hi_set) << " final loss "
              << format_double(hist.epochs.back().train_loss) << "\n";
    return ck;
}

// ---------------------------------------------------------------------------
// Extract
// ---------------------------------------------------------------------------

/// Flat HI feature table: one row per (unit, cycle) that was scored.
struct HiTable {
    std::vector<std::string> names;
    Mat x;
    std::vector<SampleKey> keys;
    Vec rul;
    Vec wear;  // present for mill data only

    Eigen::Index rows() const { return x.rows(); }
};

/// Score a trajectory set with a trained extractor. HIs are single-timestep
/// features; `last_cycle_only` restricts output to each unit's final row
/// (the test-time protocol for run-to-failure data).
inline HiTable extract_features(const ModelCheckpoint& ck, const TrajectorySet& ts,
                                HiSetKind hi_set, const UqConfig& uq_cfg, std::uint64_t uq_seed,
                                bool last_cycle_only) {
    const AutoencoderModel& m = ck.model;
    SampleSet flat = flatten(ts);
    if (last_cycle_only) {
        std::vector<Eigen::Index> keep;
        Eigen::Index r = 0;
        for (const auto& u : ts.units) {
            r += u.length();
            keep.push_back(r - 1);
        }
        SampleSet sel;
        sel.x.resize(static_cast<Eigen::Index>(keep.size()), flat.x.cols());
        sel.keys.resize(keep.size());
        if (flat.rul.size() > 0) sel.rul.resize(static_cast<Eigen::Index>(keep.size()));
        if (flat.wear.size() > 0) sel.wear.resize(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t i = 0; i < keep.size(); ++i) {
            sel.x.row(static_cast<Eigen::Index>(i)) = flat.x.row(keep[i]);
            sel.keys[i] = flat.keys[static_cast<std::size_t>(keep[i])];
            if (flat.rul.size() > 0) sel.rul(static_cast<Eigen::Index>(i)) = flat.rul(keep[i]);
            if (flat.wear.size() > 0) sel.wear(static_cast<Eigen::Index>(i)) = flat.wear(keep[i]);
        }
        flat = std::move(sel);
    }

    std::vector<std::string> group_names;
    for (const auto& [n, _] : m.spec.groups) group_names.push_back(n);
    const int G = m.n_groups();
    const Eigen::Index N = flat.x.rows();

    PathwayTrace trace = record_pathway(m, flat.x);
    Mat sap_g(N, G), nap_g(N, G);
    for (int g = 0; g < G; ++g) {
        sap_g.col(g) = sap(trace, g);
        nap_g.col(g) = nap(ck.rapp.per_group[static_cast<std::size_t>(g)], trace, g);
    }
    auto [sap_ls, nap_ls] = latent_metrics(trace, ck.rapp.latent);

    Mat sig_e, sig_a;
    if (hi_set != HiSetKind::gonzalez) {
        RngStream rng(uq_seed);
        sig_e = epistemic(m, flat.x, uq_cfg, rng).var;
        if (m.variant == Variant::vae) sig_a = aleatoric(m, flat.x, uq_cfg, rng).var;
    }

    HiTable out;
    out.names = hi_feature_names(hi_set, m.variant, group_names);
    out.x.resize(N, static_cast<Eigen::Index>(out.names.size()));
    out.keys = flat.keys;
    out.rul = flat.rul;
    out.wear = flat.wear;
    for (Eigen::Index r = 0; r < N; ++r) {
        Vec sa = (hi_set == HiSetKind::gonzalez) ? Vec() : Vec(sap_g.row(r).transpose());
        Vec na = (hi_set == HiSetKind::gonzalez) ? Vec() : Vec(nap_g.row(r).transpose());
        Vec se = (hi_set == HiSetKind::gonzalez) ? Vec() : Vec(sig_e.row(r).transpose());
        Vec aa;
        if (hi_set != HiSetKind::gonzalez && m.variant == Variant::vae) {
            aa = sig_a.row(r).transpose();
        }
        try {
            HiVector hv = assemble_hi(hi_set, m.variant, group_names, sa, na, sap_ls(r),
                                      nap_ls(r), se, aa);
            out.x.row(r) = hv.values.transpose();
        } catch (const AssemblyError& e) {
            throw AssemblyError("unit " + std::to_string(flat.keys[static_cast<std::size_t>(r)].unit_id) +
                                " cycle " + std::to_string(flat.keys[static_cast<std::size_t>(r)].cycle) +
                                ": " + e.what());
        }
    }
    return out;
}

inline void hi_table_to_csv(const fs::path& path, const HiTable& t) {
    CsvTable c;
    c.header = {"unit", "cycle"};
    for (const auto& n : t.names) c.header.push_back(n);
    c.header.push_back("rul_true");
    const bool has_wear = t.wear.size() > 0;
    if (has_wear) c.header.push_back("wear");
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
        std::vector<std::string> row{std::to_string(t.keys[static_cast<std::size_t>(r)].unit_id),
                                     std::to_string(t.keys[static_cast<std::size_t>(r)].cycle)};
        for (Eigen::Index c2 = 0; c2 < t.x.cols(); ++c2) row.push_back(format_double(t.x(r, c2)));
        row.push_back(format_double(t.rul(r)));
        if (has_wear) row.push_back(format_double(t.wear(r)));
        c.rows.push_back(std::move(row));
    }
    write_csv(path, c);
}

inline HiTable hi_table_from_csv(const fs::path& path) {
    CsvTable c = read_csv(path);
    if (c.header.size() < 3 || c.header[0] != "unit" || c.header[1] != "cycle") {
        throw ParseError(path.string() + ": not an HI table");
    }
    const int rul_col = c.column("rul_true");
    if (rul_col < 0) throw ParseError(path.string() + ": missing rul_true column");
    const int wear_col = c.column("wear");
    HiTable t;
    for (int i = 2; i < rul_col; ++i) t.names.push_back(c.header[static_cast<std::size_t>(i)]);
    const auto n = static_cast<Eigen::Index>(c.rows.size());
    t.x.resize(n, static_cast<Eigen::Index>(t.names.size()));
    t.keys.resize(static_cast<std::size_t>(n));
    t.rul.resize(n);
    if (wear_col >= 0) t.wear.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = c.rows[static_cast<std::size_t>(r)];
        t.keys[static_cast<std::size_t>(r)].unit_id = static_cast<int>(parse_double(row[0]));
        t.keys[static_cast<std::size_t>(r)].cycle = static_cast<int>(parse_double(row[1]));
        for (std::size_t f = 0; f < t.names.size(); ++f) {
            t.x(r, static_cast<Eigen::Index>(f)) = parse_double(row[2 + f]);
        }
        t.rul(r) = parse_double(row[static_cast<std::size_t>(rul_col)]);
        if (wear_col >= 0) t.wear(r) = parse_double(row[static_cast<std::size_t>(wear_col)]);
    }
    return t;
}

inline fs::path hi_path(const ExperimentConfig& cfg, const std::string& split,
                        std::uint64_t seed) {
    return fs::path(cfg.out_dir) / "hi" /
           ("hi-" + split + "-" + to_string(cfg.variant) + "-" + to_string(cfg.hi_set) + "-seed" +
            std::to_string(seed) + ".csv");
}

/// Write train (every cycle) and test (last cycle for run-to-failure data,
/// every cycle for wear data) HI tables.
inline std::pair<HiTable, HiTable> cmd_extract(const ExperimentConfig& cfg, const DataBundle& b,
                                               const ModelCheckpoint& ck, std::uint64_t seed) {
    const bool mill = b.train.kind == DatasetKind::mill;
    HiTable train = extract_features(ck, b.train, cfg.hi_set, cfg.uq,
                                     derive_seed(seed, 0x75712d7472ULL), false);
    HiTable test = extract_features(ck, b.test, cfg.hi_set, cfg.uq,
                                    derive_seed(seed, 0x75712d7465ULL), !mill);
    hi_table_to_csv(hi_path(cfg, "train", seed), train);
    hi_table_to_csv(hi_path(cfg, "test", seed), test);
    std::cout << "[extract] seed " << seed << ": " << train.rows() << " train rows, "
              << test.rows() << " test rows, " << train.names.size() << " features\n";
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Fit RUL + evaluate
// ---------------------------------------------------------------------------

inline fs::path forest_path(const ExperimentConfig& cfg, std::uint64_t seed) {
    return fs::path(cfg.out_dir) / "forests" /
           ("forest-" + to_string(cfg.variant) + "-" + to_string(cfg.hi_set) + "-seed" +
            std::to_string(seed) + ".json");
}

/// Fit the RUL meta-regressor on a seed's training HIs. The per-run forest
/// seed mixes the configured random_state with the run seed so different
/// runs bag differently.
inline Forest cmd_fit_rul(const ExperimentConfig& cfg, const HiTable& train, std::uint64_t seed,
                          int jobs = 1) {
    ForestConfig fc = cfg.forest;
    fc.random_state = derive_seed(cfg.forest.random_state, seed);
    Forest f = fit_forest(train.x, train.rul, fc, train.names, jobs);
    f.config_hash = config_hash(cfg);
    save_forest_checkpoint(forest_path(cfg, seed), f);
    std::cout << "[fit-rul] seed " << seed << ": " << f.trees.size() << " trees on "
              << train.rows() << " rows\n";
    return f;
}

struct SeedSeries {
    std::string name;
    std::vector<double> values;  // aligned with the seed list
    double mean = 0.0;
    double stddev = 0.0;  // n-1 divisor; 0 for a single seed
    double best = 0.0;    // lowest per-seed value (all series are RMSEs)
};

inline void finish_series(SeedSeries& s) {
    const auto n = static_cast<double>(s.values.size());
    double sum = 0.0;
    for (double v : s.values) sum += v;
    s.mean = sum / n;
    double ss = 0.0;
    for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = (s.values.size() > 1) ? std::sqrt(ss / (n - 1.0)) : 0.0;
    s.best = *std::min_element(s.values.begin(), s.values.end());
}

struct RunReport {
    std::string method;
    std::string dataset;
    std::string config_hash_hex;
    std::vector<std::uint64_t> seeds;
    std::vector<SeedSeries> series;
    std::vector<std::string> artifacts;  // relative to out_dir
};

inline std::string method_label(Variant v, HiSetKind k) {
    const std::string model =
        (k == HiSetKind::groups) ? (v == Variant::ae ? "iglide_ae" : "iglide_vae") : to_string(v);
    return model + "+" + to_string(k);
}

/// MILL wear phases: each evaluates rows whose wear lies in (lo, 0.70].
inline const std::vector<std::pair<double, std::string>>& mill_phases() {
    static const std::vector<std::pair<double, std::string>> phases = {
        {-1.0, "rmse[0.00-0.70]"}, {0.20, "rmse[0.20-0.70]"}, {0.50, "rmse[0.50-0.70]"}};
    return phases;
}

/// Per-seed RMSE values for one evaluation: a single series for
/// run-to-failure data, one per wear phase for mill data.
inline std::vector<std::pair<std::string, double>> cmd_evaluate(const ExperimentConfig& cfg,
                                                                const Forest& forest,
                                                                const HiTable& test) {
    if (test.rows() == 0) throw UsageError("evaluate: empty test set");
    check_manifest(forest, test.names);
    if (forest.config_hash != config_hash(cfg)) {
        throw UsageError("evaluate: forest checkpoint config hash does not match this config");
    }
    Vec pred = predict(forest, test.x);
    std::vector<std::pair<std::string, double>> out;
    if (test.wear.size() == 0) {
        out.emplace_back("rmse", rmse(pred, test.rul));
        return out;
    }
    for (const auto& [lo, name] : mill_phases()) {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index r = 0; r < test.rows(); ++r) {
            if (test.wear(r) > lo && test.wear(r) <= cfg.rul.mill_failure_wear) keep.push_back(r);
        }
        if (keep.empty()) throw UsageError("evaluate: no samples in wear phase " + name);
        Vec p(static_cast<Eigen::Index>(keep.size())), y(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t i = 0; i < keep.size(); ++i) {
            p(static_cast<Eigen::Index>(i)) = pred(keep[i]);
            y(static_cast<Eigen::Index>(i)) = test.rul(keep[i]);
        }
        out.emplace_back(name, rmse(p, y));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports and tables
// ---------------------------------------------------------------------------

inline Json to_json(const RunReport& r) {
    Json series = Json::array();
    for (const auto& s : r.series) {
        series.push_back(Json{{"name", s.name},
                              {"per_seed", s.values},
                              {"mean", s.mean},
                              {"stddev", s.stddev},
                              {"best", s.best}});
    }
    return Json{{"method", r.method},
                {"dataset", r.dataset},
                {"config_hash", r.config_hash_hex},
                {"seeds", r.seeds},
                {"series", std::move(series)},
                {"artifacts", r.artifacts}};
}

inline fs::path report_path(const ExperimentConfig& cfg) {
    return fs::path(cfg.out_dir) / "reports" /
           ("report-" + to_string(cfg.variant) + "-" + to_string(cfg.hi_set) + ".json");
}

/// Run the full protocol for the config's (variant, hi_set) cell across all
/// seeds. Wall-clock goes to the console only; persisted reports contain
/// nothing time- or machine-dependent.
inline RunReport run_method(const ExperimentConfig& cfg, const DataBundle& b, int jobs = 1) {
    RunReport rep;
    rep.method = method_label(cfg.variant, cfg.hi_set);
    rep.dataset = cfg.dataset.label();
    rep.config_hash_hex = hash_hex(config_hash(cfg));
    rep.seeds = cfg.seeds;
    std::map<std::string, SeedSeries> series;
    auto rel = [&](const fs::path& p) { return fs::relative(p, cfg.out_dir).string(); };
    for (std::uint64_t seed : cfg.seeds) {
        ModelCheckpoint ck = cmd_train(cfg, b, seed);
        auto [train_hi, test_hi] = cmd_extract(cfg, b, ck, seed);
        Forest forest = cmd_fit_rul(cfg, train_hi, seed, jobs);
        for (const auto& [name, value] : cmd_evaluate(cfg, forest, test_hi)) {
            auto& s = series[name];
            s.name = name;
            s.values.push_back(value);
        }
        rep.artifacts.push_back(rel(model_path(cfg, seed)));
        rep.artifacts.push_back(rel(hi_path(cfg, "train", seed)));
        rep.artifacts.push_back(rel(hi_path(cfg, "test", seed)));
        rep.artifacts.push_back(rel(forest_path(cfg, seed)));
    }
    for (auto& [name, s] : series) {
        finish_series(s);
        rep.series.push_back(s);
    }
    atomic_write(report_path(cfg), to_json(rep).dump(1) + "\n");
    for (const auto& s : rep.series) {
        std::cout << "[evaluate] " << rep.method << " " << s.name << " mean "
                  << format_double(s.mean) << " +- " << format_double(s.stddev) << "\n";
    }
    return rep;
}

namespace detail {

inline std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
}

}  // namespace detail

/// Aligned plain-text rendering of a rows-of-cells table.
inline std::string render_text_table(const std::vector<std::string>& header,
                                     const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> w(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) w[c] = header[c].size();
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) w[c] = std::max(w[c], r[c].size());
    }
    std::ostringstream os;
    auto emit = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            os << (c == 0 ? "" : "  ");
            os << r[c];
            for (std::size_t p = r[c].size(); p < w[c]; ++p) os << ' ';
        }
        os << "\n";
    };
    emit(header);
    std::vector<std::string> rule;
    for (std::size_t c = 0; c < header.size(); ++c) rule.push_back(std::string(w[c], '-'));
    emit(rule);
    for (const auto& r : rows) emit(r);
    return os.str();
}

/// Run every (variant x HI set) cell and emit the comparison table.
inline std::vector<RunReport> cmd_run_all(const ExperimentConfig& base, int jobs = 1) {
    DataBundle b = load_or_prepare(base);
    std::vector<RunReport> reports;
    const Variant variants[] = {Variant::ae, Variant::vae};
    const HiSetKind sets[] = {HiSetKind::gonzalez, HiSetKind::mono, HiSetKind::groups};
    for (Variant v : variants) {
        for (HiSetKind k : sets) {
            ExperimentConfig cfg = base;
            cfg.variant = v;
            cfg.hi_set = k;
            try {
                reports.push_back(run_method(cfg, b, jobs));
            } catch (const Error& e) {
                throw Error("[" + method_label(v, k) + "] " + e.what());
            }
        }
    }

    // Comparison table: one row per method, one column pair per series.
    std::vector<std::string> series_names;
    for (const auto& r : reports) {
        for (const auto& s : r.series) {
            if (std::find(series_names.begin(), series_names.end(), s.name) ==
                series_names.end()) {
                series_names.push_back(s.name);
            }
        }
    }
    CsvTable csv;
    csv.header = {"method"};
    std::vector<std::string> txt_header = {"method"};
    for (const auto& n : series_names) {
        csv.header.push_back(n + "_mean");
        csv.header.push_back(n + "_std");
        csv.header.push_back(n + "_best");
        txt_header.push_back(n + " (mean +- std)");
        txt_header.push_back(n + " (best)");
    }
    std::vector<std::vector<std::string>> txt_rows;
    for (const auto& r : reports) {
        std::vector<std::string> crow{r.method};
        std::vector<std::string> trow{r.method};
        for (const auto& n : series_names) {
            const SeedSeries* found = nullptr;
            for (const auto& s : r.series) {
                if (s.name == n) found = &s;
            }
            if (found) {
                crow.push_back(format_double(found->mean));
                crow.push_back(format_double(found->stddev));
                crow.push_back(format_double(found->best));
                trow.push_back(detail::fixed2(found->mean) + " +- " +
                               detail::fixed2(found->stddev));
                trow.push_back(detail::fixed2(found->best));
            } else {
                crow.push_back("");
                crow.push_back("");
                crow.push_back("");
                trow.push_back("-");
                trow.push_back("-");
            }
        }
        csv.rows.push_back(std::move(crow));
        txt_rows.push_back(std::move(trow));
    }
    const fs::path rep_dir = fs::path(base.out_dir) / "reports";
    write_csv(rep_dir / "table.csv", csv);
    const std::string txt = render_text_table(txt_header, txt_rows);
    atomic_write(rep_dir / "table.txt", txt);
    std::cout << txt;
    return reports;
}

}  // namespace iglide
