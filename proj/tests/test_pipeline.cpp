// Experiment config parsing, hash scoping, per-stage commands and the full
// run-all protocol, exercised on tiny synthetic and mill-style datasets.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "iglide/pipeline.hpp"
#include "iglide/plot.hpp"

using namespace iglide;
using Catch::Matchers::ContainsSubstring;

namespace {

// Small but non-degenerate synthetic experiment: 6 train / 4 test units,
// 6 channels in 3 groups, short lives, few epochs. Fast on one core.
ExperimentConfig small_cfg(const std::string& out_dir) {
    ExperimentConfig c;
    c.dataset.kind = DatasetKind::synthetic;
    auto& s = c.dataset.synth;
    s.n_train_units = 6;
    s.n_test_units = 4;
    s.n_channels = 6;
    s.n_groups = 3;
    s.noise_sd = 0.02;
    s.min_len = 30;
    s.max_len = 40;
    s.curve_rate = 3.0;
    s.seed = 5;
    c.model.epochs = 3;
    c.model.batch_size = 32;
    c.uq.n_samples = 4;
    c.forest.n_estimators = 10;
    c.forest.max_depth = 5;
    c.seeds = {0, 1};
    c.out_dir = out_dir;
    return c;
}

// Two milling cases, eight runs each, wear crossing the 0.70 failure level
// inside the data. Sensor summaries drift monotonically with run number so
// every column has a nonzero healthy range.
std::string mill_csv_text() {
    const double wear1[] = {0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75};
    const double wear2[] = {0.04, 0.12, 0.22, 0.32, 0.48, 0.58, 0.68, 0.78};
    std::ostringstream os;
    os << "case,run,doc,feed,material,vb,smcac,smcdc,vib_table,vib_spindle,ae_table,"
          "ae_spindle\n";
    for (int ci = 1; ci <= 2; ++ci) {
        for (int r = 1; r <= 8; ++r) {
            const double vb = (ci == 1 ? wear1 : wear2)[r - 1];
            os << ci << ',' << r << ",1.5,0.5,1," << vb << ',' << 1.0 + 0.10 * r + 0.05 * ci
               << ',' << 2.0 - 0.05 * r + 0.02 * ci << ',' << 0.5 + 0.20 * r << ','
               << 0.3 + 0.15 * r + 0.01 * ci << ',' << 4.0 - 0.10 * r << ','
               << 1.0 + 0.08 * r - 0.02 * ci << '\n';
        }
    }
    return os.str();
}

int tree_depth(const RegressionTree& t, int node, int depth) {
    const auto& nd = t.nodes[static_cast<std::size_t>(node)];
    if (nd.is_leaf()) return depth;
    return std::max(tree_depth(t, nd.left, depth + 1), tree_depth(t, nd.right, depth + 1));
}

Eigen::Index total_rows(const TrajectorySet& ts) {
    Eigen::Index n = 0;
    for (const auto& u : ts.units) n += u.length();
    return n;
}

}  // namespace

TEST_CASE("config JSON round-trip is lossless") {
    ExperimentConfig c = small_cfg("somewhere");
    c.dataset.name = "bench";
    c.group_names = {{"left", {"c0", "c1", "c2"}}, {"right", {"c3", "c4", "c5"}}};
    c.model.latent_dim = 3;
    c.model.beta = 0.5;
    c.model.adam.lr = 5e-4;
    c.uq.n_samples = 7;
    c.forest.bootstrap = false;
    c.forest.max_features = 2;
    c.rul.r_early_train = 70;
    c.healthy_kind = "life_fraction";
    c.healthy_threshold = 0.25;
    c.hi_set = HiSetKind::mono;
    c.variant = Variant::vae;
    c.include_op_settings = true;
    c.seeds = {3, 9};

    const Json j = config_to_json(c);
    const ExperimentConfig back = config_from_json(j);
    CHECK(config_to_json(back).dump() == j.dump());
}

TEST_CASE("config defaults from an empty object") {
    const ExperimentConfig c = config_from_json(Json::object());
    CHECK(c.out_dir == "out");
    CHECK(c.seeds.size() == 10);
    CHECK(c.hi_set == HiSetKind::groups);
    CHECK(c.variant == Variant::ae);
    CHECK(c.model.epochs == 200);
    CHECK(c.forest.n_estimators == 100);
    CHECK(c.healthy_kind == "auto");
    CHECK(c.dataset.kind == DatasetKind::synthetic);
}

TEST_CASE("unknown config keys are rejected") {
    CHECK_THROWS_MATCHES(config_from_json(Json{{"bogus", 1}}), ConfigError,
                         Catch::Matchers::MessageMatches(
                             ContainsSubstring("unknown key 'bogus' in config root")));
    CHECK_THROWS_MATCHES(
        config_from_json(Json{{"model", Json{{"depth", 3}}}}), ConfigError,
        Catch::Matchers::MessageMatches(ContainsSubstring("unknown key 'depth' in model")));
    CHECK_THROWS_MATCHES(
        config_from_json(Json{{"dataset", Json{{"synth", Json{{"units", 2}}}}}}), ConfigError,
        Catch::Matchers::MessageMatches(ContainsSubstring("in dataset.synth")));
    CHECK_THROWS_MATCHES(
        config_from_json(Json{{"forest", Json{{"trees", 5}}}}), ConfigError,
        Catch::Matchers::MessageMatches(ContainsSubstring("in forest")));
    CHECK_THROWS_MATCHES(
        config_from_json(Json{{"healthy", Json{{"mode", "x"}}}}), ConfigError,
        Catch::Matchers::MessageMatches(ContainsSubstring("in healthy")));
}

TEST_CASE("config validation rejects bad field combinations") {
    ExperimentConfig c = small_cfg("x");

    SECTION("duplicate seeds") {
        c.seeds = {1, 1};
        CHECK_THROWS_MATCHES(
            c.validate(), ConfigError,
            Catch::Matchers::MessageMatches(ContainsSubstring("seeds must be distinct")));
    }
    SECTION("empty seeds") {
        c.seeds.clear();
        CHECK_THROWS_MATCHES(
            c.validate(), ConfigError,
            Catch::Matchers::MessageMatches(ContainsSubstring("seeds must be non-empty")));
    }
    SECTION("cmapss without paths") {
        c.dataset.kind = DatasetKind::cmapss;
        CHECK_THROWS_MATCHES(c.validate(), ConfigError,
                             Catch::Matchers::MessageMatches(ContainsSubstring(
                                 "cmapss dataset needs train_path, test_path and rul_path")));
    }
    SECTION("mill without path") {
        c.dataset.kind = DatasetKind::mill;
        CHECK_THROWS_MATCHES(
            c.validate(), ConfigError,
            Catch::Matchers::MessageMatches(ContainsSubstring("mill dataset needs mill_path")));
    }
    SECTION("bad healthy kind") {
        c.healthy_kind = "bogus";
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    SECTION("healthy threshold bounds") {
        c.healthy_threshold = 0.0;
        CHECK_THROWS_MATCHES(
            c.validate(), ConfigError,
            Catch::Matchers::MessageMatches(ContainsSubstring("healthy_threshold")));
    }
}

TEST_CASE("hash scopes: full vs bundle vs model") {
    const ExperimentConfig base = small_cfg("dirA");

    SECTION("full hash ignores only the output directory") {
        ExperimentConfig moved = base;
        moved.out_dir = "dirB";
        CHECK(config_hash(moved) == config_hash(base));

        ExperimentConfig epochs = base;
        epochs.model.epochs = 4;
        CHECK(config_hash(epochs) != config_hash(base));

        ExperimentConfig rs = base;
        rs.forest.random_state = 7;
        CHECK(config_hash(rs) != config_hash(base));

        ExperimentConfig ds = base;
        ds.dataset.synth.seed = 6;
        CHECK(config_hash(ds) != config_hash(base));

        ExperimentConfig hs = base;
        hs.hi_set = HiSetKind::mono;
        CHECK(config_hash(hs) != config_hash(base));
    }

    SECTION("bundle hash depends only on data and labeling fields") {
        ExperimentConfig v = base;
        v.variant = Variant::vae;
        v.hi_set = HiSetKind::gonzalez;
        v.model.epochs = 99;
        v.uq.n_samples = 33;
        v.forest.n_estimators = 3;
        v.seeds = {42};
        v.out_dir = "elsewhere";
        CHECK(bundle_config_hash(v) == bundle_config_hash(base));

        ExperimentConfig ds = base;
        ds.dataset.synth.seed = 6;
        CHECK(bundle_config_hash(ds) != bundle_config_hash(base));

        ExperimentConfig rul = base;
        rul.rul.r_early_train = 60;
        CHECK(bundle_config_hash(rul) != bundle_config_hash(base));

        ExperimentConfig hp = base;
        hp.healthy_threshold = 0.3;
        CHECK(bundle_config_hash(hp) != bundle_config_hash(base));
    }

    SECTION("model hash keys on shape, not HI set") {
        ExperimentConfig mono = base;
        mono.hi_set = HiSetKind::mono;
        ExperimentConfig gonz = base;
        gonz.hi_set = HiSetKind::gonzalez;
        CHECK(model_config_hash(mono) == model_config_hash(gonz));
        CHECK(model_config_hash(base) != model_config_hash(mono));  // groups differs

        ExperimentConfig irrelevant = mono;
        irrelevant.uq.n_samples = 9;
        irrelevant.forest.n_estimators = 99;
        irrelevant.seeds = {5, 6, 7};
        irrelevant.out_dir = "other";
        CHECK(model_config_hash(irrelevant) == model_config_hash(mono));

        ExperimentConfig epochs = mono;
        epochs.model.epochs = 8;
        CHECK(model_config_hash(epochs) != model_config_hash(mono));

        ExperimentConfig variant = mono;
        variant.variant = Variant::vae;
        CHECK(model_config_hash(variant) != model_config_hash(mono));

        ExperimentConfig data = mono;
        data.dataset.synth.seed = 6;
        CHECK(model_config_hash(data) != model_config_hash(mono));
    }
}

TEST_CASE("prepare normalizes on healthy rows and is byte-deterministic") {
    testutil::TempDir td("prepare");
    const ExperimentConfig cfg = small_cfg(td.path().string());

    const DataBundle b = cmd_prepare(cfg);
    REQUIRE(fs::exists(bundle_path(cfg)));
    const std::string bytes1 = testutil::slurp(bundle_path(cfg));

    CHECK(b.train.units.size() == 6);
    CHECK(b.test.units.size() == 4);
    CHECK(b.groups.n_groups() == 3);

    // Min-max stats come from healthy rows only, so those rows land in the
    // unit box while end-of-life drift escapes it.
    HealthyPolicy policy;  // synthetic -> life fraction, threshold 0.20
    const SampleSet healthy = select_healthy(b.train, policy);
    CHECK(healthy.x.minCoeff() >= -1e-12);
    CHECK(healthy.x.maxCoeff() <= 1.0 + 1e-12);
    const SampleSet all = flatten(b.train);
    CHECK((all.x.maxCoeff() > 1.0 || all.x.minCoeff() < 0.0));

    cmd_prepare(cfg);
    CHECK(testutil::slurp(bundle_path(cfg)) == bytes1);
}

TEST_CASE("load_or_prepare reuses matching bundles and regenerates on data change") {
    testutil::TempDir td("reuse");
    ExperimentConfig cfg = small_cfg(td.path().string());

    const DataBundle b1 = cmd_prepare(cfg);
    const std::string bytes1 = testutil::slurp(bundle_path(cfg));

    // Model-side changes leave the bundle valid and untouched.
    cfg.model.epochs = 17;
    cfg.variant = Variant::vae;
    const DataBundle b2 = load_or_prepare(cfg);
    CHECK(testutil::slurp(bundle_path(cfg)) == bytes1);
    CHECK(to_json(b2).dump() == to_json(b1).dump());

    // A dataset change invalidates it.
    cfg.dataset.synth.seed = 123;
    load_or_prepare(cfg);
    CHECK(testutil::slurp(bundle_path(cfg)) != bytes1);
}

TEST_CASE("train caches checkpoints and shares them across mono-shaped HI sets") {
    testutil::TempDir td("train");
    ExperimentConfig cfg = small_cfg(td.path().string());
    cfg.hi_set = HiSetKind::mono;
    cfg.seeds = {0};

    const DataBundle b = load_or_prepare(cfg);
    const ModelCheckpoint ck1 = cmd_train(cfg, b, 0);
    const fs::path mp = model_path(cfg, 0);
    REQUIRE(fs::exists(mp));
    const std::string bytes1 = testutil::slurp(mp);

    // Loss curve has one row per epoch plus the header.
    const fs::path loss = fs::path(cfg.out_dir) / "models" / "loss-ae-mono-seed0.csv";
    REQUIRE(fs::exists(loss));
    CHECK(read_csv(loss).rows.size() == static_cast<std::size_t>(cfg.model.epochs));

    // Re-running is a cache hit: same bytes, same weights.
    const ModelCheckpoint ck2 = cmd_train(cfg, b, 0);
    CHECK(testutil::slurp(mp) == bytes1);
    CHECK(to_json(ck2.model).dump() == to_json(ck1.model).dump());

    // The gonzalez HI set trains the same single-group model, so it reuses
    // the mono checkpoint file verbatim.
    ExperimentConfig gonz = cfg;
    gonz.hi_set = HiSetKind::gonzalez;
    CHECK(model_path(gonz, 0) == mp);
    const ModelCheckpoint ck3 = cmd_train(gonz, b, 0);
    CHECK(testutil::slurp(mp) == bytes1);
    CHECK(to_json(ck3.model).dump() == to_json(ck1.model).dump());

    // A model-field change misses the cache and retrains.
    ExperimentConfig longer = cfg;
    longer.model.epochs = 4;
    cmd_train(longer, b, 0);
    CHECK(testutil::slurp(mp) != bytes1);
}

TEST_CASE("training failure is reported with its seed") {
    testutil::TempDir td("diverge");
    ExperimentConfig cfg = small_cfg(td.path().string());
    cfg.seeds = {0};
    cfg.model.adam.lr = 1e100;  // large enough to overflow past Adam's normalization

    const DataBundle b = load_or_prepare(cfg);
    CHECK_THROWS_MATCHES(cmd_train(cfg, b, 0), FitError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("seed 0: ") &&
                                                         ContainsSubstring("diverged")));
}

TEST_CASE("extract writes HI tables with the advertised layout") {
    testutil::TempDir td("extract");
    ExperimentConfig cfg = small_cfg(td.path().string());
    cfg.variant = Variant::vae;
    cfg.seeds = {0};

    const DataBundle b = load_or_prepare(cfg);
    const ModelCheckpoint ck = cmd_train(cfg, b, 0);
    const auto [train, test] = cmd_extract(cfg, b, ck, 0);

    // groups VAE: sap_g + nap_g + latent pair + sigma_e_g + sigma_a_g.
    CHECK(train.names.size() == 4 * 3 + 2);
    CHECK(train.rows() == total_rows(b.train));
    CHECK(test.rows() == static_cast<Eigen::Index>(b.test.units.size()));  // last cycle only
    CHECK(train.x.allFinite());
    CHECK(test.x.allFinite());
    CHECK(train.wear.size() == 0);

    // Round-trip through the CSV is value-exact.
    const HiTable back = hi_table_from_csv(hi_path(cfg, "train", 0));
    REQUIRE(back.names == train.names);
    REQUIRE(back.rows() == train.rows());
    CHECK(back.x.cwiseEqual(train.x).all());
    CHECK(back.rul.cwiseEqual(train.rul).all());
    CHECK(back.keys.front().unit_id == train.keys.front().unit_id);
    CHECK(back.keys.back().cycle == train.keys.back().cycle);

    // The latent-only set carries two features and skips the MC-dropout pass.
    ExperimentConfig gz = cfg;
    gz.hi_set = HiSetKind::gonzalez;
    const auto [gtrain, gtest] = cmd_extract(gz, b, ck, 0);
    CHECK(gtrain.names == std::vector<std::string>{"sap_ls", "nap_ls"});
    CHECK(gtest.rows() == test.rows());
}

TEST_CASE("fit-rul respects forest config and scoring guards") {
    testutil::TempDir td("fitrul");
    ExperimentConfig cfg = small_cfg(td.path().string());
    cfg.seeds = {0};

    const DataBundle b = load_or_prepare(cfg);
    const ModelCheckpoint ck = cmd_train(cfg, b, 0);
    const auto [train, test] = cmd_extract(cfg, b, ck, 0);
    const Forest f = cmd_fit_rul(cfg, train, 0);

    REQUIRE(f.trees.size() == 10);
    for (const auto& t : f.trees) CHECK(tree_depth(t, 0, 0) <= 5);
    REQUIRE(fs::exists(forest_path(cfg, 0)));

    const auto res = cmd_evaluate(cfg, f, test);
    REQUIRE(res.size() == 1);
    CHECK(res[0].first == "rmse");
    CHECK(res[0].second >= 0.0);
    CHECK(std::isfinite(res[0].second));

    // Scoring under a different config refuses even when the manifest fits.
    ExperimentConfig other = cfg;
    other.forest.random_state = 7;
    CHECK_THROWS_MATCHES(cmd_evaluate(other, f, test), UsageError,
                         Catch::Matchers::MessageMatches(ContainsSubstring(
                             "forest checkpoint config hash does not match this config")));

    // A table from a different HI set trips the manifest first.
    ExperimentConfig gz = cfg;
    gz.hi_set = HiSetKind::gonzalez;
    const auto [gtrain, gtest] = cmd_extract(gz, b, ck, 0);
    CHECK_THROWS_MATCHES(
        cmd_evaluate(cfg, f, gtest), UsageError,
        Catch::Matchers::MessageMatches(ContainsSubstring("trained on a different HI set")));
}

TEST_CASE("mill pipeline scores every cycle per wear phase") {
    testutil::TempDir td("mill");
    testutil::write_file(td.file("mill.csv"), mill_csv_text());

    ExperimentConfig cfg;
    cfg.dataset.kind = DatasetKind::mill;
    cfg.dataset.mill_path = td.file("mill.csv").string();
    cfg.model.epochs = 3;
    cfg.uq.n_samples = 4;
    cfg.forest.n_estimators = 10;
    cfg.forest.max_depth = 5;
    cfg.seeds = {0};
    cfg.out_dir = td.path().string();

    const DataBundle b = cmd_prepare(cfg);
    CHECK(b.train.units.size() == 2);
    CHECK(b.groups.n_groups() == 3);  // acoustic, vibration, current

    const ModelCheckpoint ck = cmd_train(cfg, b, 0);
    const auto [train, test] = cmd_extract(cfg, b, ck, 0);

    // Wear data keeps every cycle on both splits and carries the wear column.
    CHECK(train.rows() == 16);
    CHECK(test.rows() == 16);
    REQUIRE(test.wear.size() == 16);
    const CsvTable hi_csv = read_csv(hi_path(cfg, "test", 0));
    CHECK(hi_csv.column("wear") >= 0);

    const Forest f = cmd_fit_rul(cfg, train, 0);
    const auto res = cmd_evaluate(cfg, f, test);
    REQUIRE(res.size() == 3);
    CHECK(res[0].first == "rmse[0.00-0.70]");
    CHECK(res[1].first == "rmse[0.20-0.70]");
    CHECK(res[2].first == "rmse[0.50-0.70]");
    for (const auto& [name, v] : res) {
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
    }
}

TEST_CASE("run-all emits six method reports and is deterministic") {
    testutil::TempDir td("runall");
    const ExperimentConfig cfg = small_cfg(td.path().string());

    const std::vector<RunReport> reports = cmd_run_all(cfg);
    REQUIRE(reports.size() == 6);
    const std::vector<std::string> want = {"ae+gonzalez",        "ae+mono",   "iglide_ae+groups",
                                           "vae+gonzalez",       "vae+mono",  "iglide_vae+groups"};
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(reports[i].method == want[i]);
    for (const auto& r : reports) {
        REQUIRE(r.series.size() == 1);
        CHECK(r.series[0].name == "rmse");
        CHECK(r.series[0].values.size() == 2);
        CHECK(r.series[0].best <= r.series[0].mean + 1e-12);
    }

    const fs::path rep_dir = fs::path(cfg.out_dir) / "reports";
    for (const char* v : {"ae", "vae"}) {
        for (const char* k : {"gonzalez", "mono", "groups"}) {
            CHECK(fs::exists(rep_dir / ("report-" + std::string(v) + "-" + k + ".json")));
        }
    }
    REQUIRE(fs::exists(rep_dir / "table.csv"));
    REQUIRE(fs::exists(rep_dir / "table.txt"));
    const CsvTable table = read_csv(rep_dir / "table.csv");
    CHECK(table.header == std::vector<std::string>{"method", "rmse_mean", "rmse_std",
                                                   "rmse_best"});
    CHECK(table.rows.size() == 6);
    CHECK_THAT(testutil::slurp(rep_dir / "table.txt"), ContainsSubstring("rmse (mean +- std)"));

    // Collect the six report files for the determinism checks.
    std::vector<fs::path> rep_files;
    for (const auto& e : fs::directory_iterator(rep_dir)) {
        if (e.path().filename().string().rfind("report-", 0) == 0) rep_files.push_back(e.path());
    }
    std::sort(rep_files.begin(), rep_files.end());
    REQUIRE(rep_files.size() == 6);
    std::vector<std::string> first_bytes;
    for (const auto& p : rep_files) first_bytes.push_back(testutil::slurp(p));

    // Warm rerun (cached models, fresh extraction/forests) is byte-identical.
    cmd_run_all(cfg);
    for (std::size_t i = 0; i < rep_files.size(); ++i) {
        CHECK(testutil::slurp(rep_files[i]) == first_bytes[i]);
    }

    // Cold rerun in a fresh directory matches too.
    testutil::TempDir td2("runall-cold");
    ExperimentConfig cold = cfg;
    cold.out_dir = td2.path().string();
    cmd_run_all(cold);
    for (std::size_t i = 0; i < rep_files.size(); ++i) {
        const fs::path p = fs::path(cold.out_dir) / "reports" / rep_files[i].filename();
        CHECK(testutil::slurp(p) == first_bytes[i]);
    }
}

TEST_CASE("plot renders per-unit SVGs from an HI table") {
    testutil::TempDir td("plot");
    ExperimentConfig cfg = small_cfg(td.path().string());
    cfg.seeds = {0};
    cfg.hi_set = HiSetKind::gonzalez;  // cheapest extraction

    const DataBundle b = load_or_prepare(cfg);
    const ModelCheckpoint ck = cmd_train(cfg, b, 0);
    const auto [train, test] = cmd_extract(cfg, b, ck, 0);

    const auto files = plot_hi_table(train, td.file("svg").string(), -1);
    REQUIRE(files.size() == b.train.units.size());
    CHECK_THAT(testutil::slurp(files.front()), ContainsSubstring("<svg"));

    const auto one = plot_hi_table(train, td.file("svg1").string(), train.keys.front().unit_id);
    CHECK(one.size() == 1);

    CHECK_THROWS_MATCHES(
        plot_hi_table(train, td.file("svg2").string(), 9999), UsageError,
        Catch::Matchers::MessageMatches(ContainsSubstring("unit 9999 not in table")));
}
