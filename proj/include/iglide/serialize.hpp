#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iglide/csv.hpp"
#include "iglide/data.hpp"
#include "iglide/forest.hpp"
#include "iglide/model.hpp"
#include "iglide/rapp.hpp"

namespace iglide {

using Json = nlohmann::json;

/// FNV-1a over a byte string; used for config hashes embedded in artifacts.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// Eigen <-> JSON
// ---------------------------------------------------------------------------

inline Json to_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Json to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Vec vec_from_json(const Json& a) {
    Vec v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    return v;
}

inline Mat mat_from_json(const Json& a, Eigen::Index cols_hint = 0) {
    const auto rows = static_cast<Eigen::Index>(a.size());
    if (rows == 0) return Mat(0, cols_hint);
    const auto cols = static_cast<Eigen::Index>(a[0].size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = a[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw ParseError("ragged matrix in checkpoint");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

// ---------------------------------------------------------------------------
// Core structures
// ---------------------------------------------------------------------------

inline Json to_json(const DenseLayer& l) {
    return Json{{"w", to_json(l.W)},
                {"b", to_json(l.b)},
                {"act", l.act == Activation::relu ? "relu" : "identity"},
                {"dropout", l.dropout_p}};
}

inline DenseLayer layer_from_json(const Json& j) {
    DenseLayer l;
    l.W = mat_from_json(j.at("w"));
    l.b = vec_from_json(j.at("b"));
    const std::string act = j.at("act").get<std::string>();
    if (act == "relu") {
        l.act = Activation::relu;
    } else if (act == "identity") {
        l.act = Activation::identity;
    } else {
        throw ParseError("unknown activation in checkpoint: " + act);
    }
    l.dropout_p = j.at("dropout").get<double>();
    return l;
}

inline Json to_json(const DenseNet& n) {
    Json layers = Json::array();
    for (const auto& l : n.layers) layers.push_back(to_json(l));
    return Json{{"layers", std::move(layers)}};
}

inline DenseNet net_from_json(const Json& j) {
    DenseNet n;
    for (const auto& l : j.at("layers")) n.layers.push_back(layer_from_json(l));
    return n;
}

inline Json to_json(const GroupSpec& s) {
    Json a = Json::array();
    for (const auto& [name, chans] : s.groups) {
        a.push_back(Json{{"name", name}, {"channels", chans}});
    }
    return a;
}

inline GroupSpec group_spec_from_json(const Json& j) {
    GroupSpec s;
    for (const auto& g : j) {
        s.groups.emplace_back(g.at("name").get<std::string>(),
                              g.at("channels").get<std::vector<int>>());
    }
    return s;
}

inline Json to_json(const NormStats& st) {
    return Json{{"min", to_json(st.min)}, {"max", to_json(st.max)}, {"fitted", st.fitted}};
}

inline NormStats norm_from_json(const Json& j) {
    NormStats st;
    st.min = vec_from_json(j.at("min"));
    st.max = vec_from_json(j.at("max"));
    st.fitted = j.at("fitted").get<bool>();
    return st;
}

inline Json to_json(const AutoencoderModel& m) {
    Json j{{"variant", to_string(m.variant)},
           {"input_dim", m.input_dim},
           {"latent_dim", m.latent_dim},
           {"groups", to_json(m.spec)}};
    Json enc = Json::array(), dec = Json::array();
    for (const auto& e : m.encoders) enc.push_back(to_json(e));
    for (const auto& d : m.decoders) dec.push_back(to_json(d));
    j["encoders"] = std::move(enc);
    j["decoders"] = std::move(dec);
    if (m.variant == Variant::ae) {
        j["fusion"] = to_json(m.fusion);
    } else {
        j["mu_head"] = to_json(m.mu_head);
        j["logvar_head"] = to_json(m.logvar_head);
    }
    return j;
}

inline AutoencoderModel model_from_json(const Json& j) {
    AutoencoderModel m;
    m.variant = variant_from_string(j.at("variant").get<std::string>());
    m.input_dim = j.at("input_dim").get<int>();
    m.latent_dim = j.at("latent_dim").get<int>();
    m.spec = group_spec_from_json(j.at("groups"));
    for (const auto& e : j.at("encoders")) m.encoders.push_back(net_from_json(e));
    for (const auto& d : j.at("decoders")) m.decoders.push_back(net_from_json(d));
    if (m.variant == Variant::ae) {
        m.fusion = net_from_json(j.at("fusion"));
    } else {
        m.mu_head = net_from_json(j.at("mu_head"));
        m.logvar_head = net_from_json(j.at("logvar_head"));
    }
    m.spec.validate(m.input_dim);
    return m;
}

inline Json to_json(const NapModel& n) {
    return Json{{"mu", to_json(n.mu)}, {"v", to_json(n.V)}, {"sigma", to_json(n.sigma)}, {"k", n.k}};
}

inline NapModel nap_from_json(const Json& j) {
    NapModel n;
    n.mu = vec_from_json(j.at("mu"));
    n.k = j.at("k").get<int>();
    n.V = mat_from_json(j.at("v"), 0);
    if (n.V.size() == 0) n.V.resize(n.mu.size(), 0);
    n.sigma = vec_from_json(j.at("sigma"));
    return n;
}

inline Json to_json(const RappModel& r) {
    Json pg = Json::array();
    for (const auto& n : r.per_group) pg.push_back(to_json(n));
    return Json{{"per_group", std::move(pg)}, {"latent", to_json(r.latent)}};
}

inline RappModel rapp_from_json(const Json& j) {
    RappModel r;
    for (const auto& n : j.at("per_group")) r.per_group.push_back(nap_from_json(n));
    r.latent = nap_from_json(j.at("latent"));
    return r;
}

inline Json to_json(const ForestConfig& c) {
    return Json{{"n_estimators", c.n_estimators},
                {"max_depth", c.max_depth},
                {"min_samples_split", c.min_samples_split},
                {"random_state", c.random_state},
                {"bootstrap", c.bootstrap},
                {"max_features", c.max_features}};
}

inline ForestConfig forest_config_from_json(const Json& j) {
    ForestConfig c;
    c.n_estimators = j.at("n_estimators").get<int>();
    c.max_depth = j.at("max_depth").get<int>();
    c.min_samples_split = j.at("min_samples_split").get<int>();
    c.random_state = j.at("random_state").get<std::uint64_t>();
    c.bootstrap = j.at("bootstrap").get<bool>();
    c.max_features = j.at("max_features").get<int>();
    return c;
}

inline Json to_json(const Forest& f) {
    Json trees = Json::array();
    for (const auto& t : f.trees) {
        Json nodes = Json::array();
        for (const auto& nd : t.nodes) {
            nodes.push_back(Json{{"f", nd.feature},
                                 {"t", nd.threshold},
                                 {"l", nd.left},
                                 {"r", nd.right},
                                 {"v", nd.value}});
        }
        trees.push_back(Json{{"nodes", std::move(nodes)}});
    }
    return Json{{"config", to_json(f.config)},
                {"feature_names", f.feature_names},
                {"config_hash", hash_hex(f.config_hash)},
                {"trees", std::move(trees)}};
}

inline Forest forest_from_json(const Json& j) {
    Forest f;
    f.config = forest_config_from_json(j.at("config"));
    f.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    f.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    for (const auto& tj : j.at("trees")) {
        RegressionTree t;
        for (const auto& nj : tj.at("nodes")) {
            TreeNode nd;
            nd.feature = nj.at("f").get<int>();
            nd.threshold = nj.at("t").get<double>();
            nd.left = nj.at("l").get<int>();
            nd.right = nj.at("r").get<int>();
            nd.value = nj.at("v").get<double>();
            t.nodes.push_back(nd);
        }
        f.trees.push_back(std::move(t));
    }
    return f;
}

// ---------------------------------------------------------------------------
// Trajectory sets (prepared-data bundles)
// ---------------------------------------------------------------------------

inline Json to_json(const Trajectory& t) {
    Json j{{"unit_id", t.unit_id},
           {"cycles", t.cycles},
           {"op_settings", to_json(t.op_settings)},
           {"sensors", to_json(t.sensors)},
           {"severe_only", t.severe_only},
           {"rul_extrapolated", t.rul_extrapolated}};
    if (t.rul.size() > 0) j["rul"] = to_json(t.rul);
    if (t.degradation.size() > 0) j["wear"] = to_json(t.degradation);
    return j;
}

inline Trajectory trajectory_from_json(const Json& j, int n_ops, int n_channels) {
    Trajectory t;
    t.unit_id = j.at("unit_id").get<int>();
    t.cycles = j.at("cycles").get<std::vector<int>>();
    t.op_settings = mat_from_json(j.at("op_settings"), n_ops);
    t.sensors = mat_from_json(j.at("sensors"), n_channels);
    t.severe_only = j.at("severe_only").get<bool>();
    t.rul_extrapolated = j.at("rul_extrapolated").get<bool>();
    if (j.contains("rul")) t.rul = vec_from_json(j.at("rul"));
    if (j.contains("wear")) t.degradation = vec_from_json(j.at("wear"));
    return t;
}

inline Json to_json(const TrajectorySet& ts) {
    Json units = Json::array();
    for (const auto& u : ts.units) units.push_back(to_json(u));
    return Json{{"kind", to_string(ts.kind)},
                {"channel_names", ts.channel_names},
                {"op_names", ts.op_names},
                {"units", std::move(units)}};
}

inline TrajectorySet trajectory_set_from_json(const Json& j) {
    TrajectorySet ts;
    ts.kind = dataset_kind_from_string(j.at("kind").get<std::string>());
    ts.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    ts.op_names = j.at("op_names").get<std::vector<std::string>>();
    for (const auto& u : j.at("units")) {
        ts.units.push_back(trajectory_from_json(u, static_cast<int>(ts.op_names.size()),
                                                static_cast<int>(ts.channel_names.size())));
    }
    return ts;
}

/// Prepared dataset: labeled + normalized trajectories plus the statistics
/// and grouping everything downstream reuses.
struct DataBundle {
    TrajectorySet train;
    TrajectorySet test;
    GroupSpec groups;
    NormStats norm;
};

inline Json to_json(const DataBundle& b) {
    return Json{{"train", to_json(b.train)},
                {"test", to_json(b.test)},
                {"groups", to_json(b.groups)},
                {"norm", to_json(b.norm)}};
}

inline DataBundle bundle_from_json(const Json& j) {
    DataBundle b;
    b.train = trajectory_set_from_json(j.at("train"));
    b.test = trajectory_set_from_json(j.at("test"));
    b.groups = group_spec_from_json(j.at("groups"));
    b.norm = norm_from_json(j.at("norm"));
    return b;
}

// ---------------------------------------------------------------------------
// Versioned envelopes
// ---------------------------------------------------------------------------

constexpr int kFormatVersion = 1;

/// Wrap a payload in the checkpoint envelope and write it atomically.
/// Object keys serialize sorted, so identical content gives identical bytes.
inline void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                            Json payload, std::uint64_t config_hash) {
    Json j{{"format_version", kFormatVersion},
           {"kind", kind},
           {"config_hash", hash_hex(config_hash)},
           {"payload", std::move(payload)}};
    atomic_write(path, j.dump(1) + "\n");
}

struct LoadedCheckpoint {
    Json payload;
    std::uint64_t config_hash = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                        const std::string& expect_kind) {
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const Json::exception& e) {
        throw ParseError(path.string() + ": not a valid checkpoint: " + e.what());
    }
    const int ver = j.at("format_version").get<int>();
    if (ver != kFormatVersion) {
        throw ParseError(path.string() + ": unsupported format_version " + std::to_string(ver));
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != expect_kind) {
        throw UsageError(path.string() + ": checkpoint kind '" + kind + "', expected '" +
                         expect_kind + "'");
    }
    LoadedCheckpoint lc;
    lc.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    lc.payload = std::move(j.at("payload"));
    return lc;
}

/// Trained HI extractor: the autoencoder, its NAP statistics, and the norm
/// stats its inputs assume.
struct ModelCheckpoint {
    AutoencoderModel model;
    RappModel rapp;
    NormStats norm;
};

inline void save_model_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ck,
                                  std::uint64_t config_hash) {
    Json payload{{"model", to_json(ck.model)}, {"rapp", to_json(ck.rapp)}, {"norm", to_json(ck.norm)}};
    save_checkpoint(path, "model", std::move(payload), config_hash);
}

inline std::pair<ModelCheckpoint, std::uint64_t> load_model_checkpoint(
    const std::filesystem::path& path) {
    auto lc = load_checkpoint(path, "model");
    ModelCheckpoint ck;
    ck.model = model_from_json(lc.payload.at("model"));
    ck.rapp = rapp_from_json(lc.payload.at("rapp"));
    ck.norm = norm_from_json(lc.payload.at("norm"));
    return {std::move(ck), lc.config_hash};
}

inline void save_forest_checkpoint(const std::filesystem::path& path, const Forest& f) {
    save_checkpoint(path, "forest", to_json(f), f.config_hash);
}

inline Forest load_forest_checkpoint(const std::filesystem::path& path) {
    auto lc = load_checkpoint(path, "forest");
    Forest f = forest_from_json(lc.payload);
    f.config_hash = lc.config_hash;
    return f;
}

inline void save_bundle(const std::filesystem::path& path, const DataBundle& b,
                        std::uint64_t config_hash) {
    save_checkpoint(path, "bundle", to_json(b), config_hash);
}

inline std::pair<DataBundle, std::uint64_t> load_bundle(const std::filesystem::path& path) {
    auto lc = load_checkpoint(path, "bundle");
    return {bundle_from_json(lc.payload), lc.config_hash};
}

}  // namespace iglide
