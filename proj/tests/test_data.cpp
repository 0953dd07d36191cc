#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "helpers.hpp"
#include "iglide/data.hpp"

using namespace iglide;
using testutil::TempDir;
using testutil::write_file;

namespace {

// 26-column C-MAPSS-style line: unit, cycle, 3 ops, 21 sensors.
std::string cmapss_line(int unit, int cycle) {
    std::ostringstream os;
    os << unit << " " << cycle;
    for (int k = 0; k < 3; ++k) os << " " << 100 + k;
    for (int k = 0; k < 21; ++k) os << " " << unit * 1000 + cycle * 10 + k;
    os << "\n";
    return os.str();
}

std::string cmapss_file(const std::vector<std::pair<int, int>>& unit_lengths) {
    std::string s;
    for (const auto& [unit, len] : unit_lengths) {
        for (int c = 1; c <= len; ++c) s += cmapss_line(unit, c);
    }
    return s;
}

const char* kMillHeader =
    "case,run,doc,feed,material,vb,smcac,smcdc,vib_table,vib_spindle,ae_table,ae_spindle\n";

}  // namespace

TEST_CASE("cmapss: train parse assigns columns and counts correctly") {
    TempDir td("cmapss-train");
    write_file(td.file("train.txt"), cmapss_file({{1, 3}, {2, 2}}));
    TrajectorySet ts = parse_cmapss(td.file("train.txt"), Split::train);

    REQUIRE(ts.kind == DatasetKind::cmapss);
    REQUIRE(ts.units.size() == 2);
    REQUIRE(ts.channel_names.size() == 21);
    REQUIRE(ts.channel_names.front() == "s_1");
    REQUIRE(ts.channel_names.back() == "s_21");
    REQUIRE(ts.op_names == std::vector<std::string>{"op_1", "op_2", "op_3"});

    const Trajectory& u1 = ts.units[0];
    REQUIRE(u1.unit_id == 1);
    REQUIRE(u1.cycles == std::vector<int>{1, 2, 3});
    REQUIRE(u1.op_settings(0, 0) == 100.0);
    REQUIRE(u1.op_settings(2, 2) == 102.0);
    REQUIRE(u1.sensors(0, 0) == 1010.0);   // unit 1, cycle 1, sensor index 0
    REQUIRE(u1.sensors(2, 20) == 1050.0);  // unit 1, cycle 3, sensor index 20

    // Train RUL counts down to zero at the last cycle.
    REQUIRE(u1.rul(0) == 2.0);
    REQUIRE(u1.rul(1) == 1.0);
    REQUIRE(u1.rul(2) == 0.0);
    REQUIRE(ts.units[1].rul(1) == 0.0);
}

TEST_CASE("cmapss: test parse offsets RUL by the ground-truth file") {
    TempDir td("cmapss-test");
    write_file(td.file("test.txt"), cmapss_file({{1, 3}, {2, 2}}));
    write_file(td.file("rul.txt"), "7\n3\n");
    TrajectorySet ts = parse_cmapss(td.file("test.txt"), Split::test, td.file("rul.txt"));
    REQUIRE(ts.units[0].rul(0) == 9.0);
    REQUIRE(ts.units[0].rul(2) == 7.0);  // last cycle carries the file value
    REQUIRE(ts.units[1].rul(1) == 3.0);
}

TEST_CASE("cmapss: rejections") {
    TempDir td("cmapss-bad");

    SECTION("wrong column count names the line") {
        write_file(td.file("bad.txt"), cmapss_line(1, 1) + "1 2 3\n");
        try {
            parse_cmapss(td.file("bad.txt"), Split::train);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(std::string(e.what()).find(":2:") != std::string::npos);
        }
    }
    SECTION("unit with fewer than 2 cycles is rejected") {
        write_file(td.file("short.txt"), cmapss_file({{1, 3}, {2, 1}}));
        REQUIRE_THROWS_AS(parse_cmapss(td.file("short.txt"), Split::train), ValidationError);
    }
    SECTION("cycles must start at 1") {
        std::string s = cmapss_line(1, 2) + cmapss_line(1, 3);
        write_file(td.file("start.txt"), s);
        REQUIRE_THROWS_AS(parse_cmapss(td.file("start.txt"), Split::train), ParseError);
    }
    SECTION("cycles must strictly increase") {
        std::string s = cmapss_line(1, 1) + cmapss_line(1, 2) + cmapss_line(1, 2);
        write_file(td.file("dup.txt"), s);
        REQUIRE_THROWS_AS(parse_cmapss(td.file("dup.txt"), Split::train), ParseError);
    }
    SECTION("empty file") {
        write_file(td.file("empty.txt"), "\n  \n");
        REQUIRE_THROWS_AS(parse_cmapss(td.file("empty.txt"), Split::train), ParseError);
    }
    SECTION("missing file") {
        REQUIRE_THROWS_AS(parse_cmapss(td.file("nope.txt"), Split::train), IoError);
    }
    SECTION("test split requires a RUL file") {
        write_file(td.file("test.txt"), cmapss_file({{1, 2}}));
        REQUIRE_THROWS_AS(parse_cmapss(td.file("test.txt"), Split::test), ConfigError);
    }
    SECTION("RUL file with fewer entries than units") {
        write_file(td.file("test.txt"), cmapss_file({{1, 2}, {2, 2}}));
        write_file(td.file("rul.txt"), "5\n");
        REQUIRE_THROWS_AS(parse_cmapss(td.file("test.txt"), Split::test, td.file("rul.txt")),
                          ParseError);
    }
}

TEST_CASE("groups: subsystem grouping covers s_1..s_21 disjointly") {
    GroupSpec g = GroupSpec::cmapss_default();
    REQUIRE(g.n_groups() == 6);
    REQUIRE(g.total_width() == 21);
    REQUIRE_NOTHROW(g.validate(21));
    REQUIRE(g.name(0) == "fan");
    REQUIRE(g.channels(0) == std::vector<int>{0, 4, 7, 12, 17, 18});
    REQUIRE(g.name(1) == "lpc");
    REQUIRE(g.channels(1) == std::vector<int>{1});
    REQUIRE(g.name(2) == "hpc");
    REQUIRE(g.channels(2) == std::vector<int>{2, 6, 10});
    REQUIRE(g.name(3) == "core");
    REQUIRE(g.channels(3) == std::vector<int>{8, 13});
    REQUIRE(g.name(4) == "pressure_turbine");
    REQUIRE(g.channels(4) == std::vector<int>{3, 19, 20});
    REQUIRE(g.name(5) == "other");
    REQUIRE(g.channels(5) == std::vector<int>{5, 9, 11, 14, 15, 16});
}

TEST_CASE("groups: validation errors") {
    GroupSpec overlap;
    overlap.groups = {{"a", {0, 1}}, {"b", {1, 2}}};
    REQUIRE_THROWS_AS(overlap.validate(3), SpecError);

    GroupSpec empty_group;
    empty_group.groups = {{"a", {}}};
    REQUIRE_THROWS_AS(empty_group.validate(3), SpecError);

    GroupSpec none;
    REQUIRE_THROWS_AS(none.validate(3), SpecError);

    GroupSpec out_of_range;
    out_of_range.groups = {{"a", {0, 5}}};
    REQUIRE_THROWS_AS(out_of_range.validate(3), SpecError);

    REQUIRE_THROWS_AS(
        GroupSpec::from_names({"x", "y"}, {{"g", {"x", "zzz"}}}), SpecError);
}

TEST_CASE("groups: from_names resolves indices in order, single() covers all") {
    GroupSpec g = GroupSpec::from_names({"a", "b", "c"}, {{"g1", {"c", "a"}}, {"g2", {"b"}}});
    REQUIRE(g.channels(0) == std::vector<int>{2, 0});
    REQUIRE(g.channels(1) == std::vector<int>{1});

    GroupSpec s = GroupSpec::single(4);
    REQUIRE(s.n_groups() == 1);
    REQUIRE(s.channels(0) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("norm: min-max semantics without clipping") {
    Mat x(3, 2);
    x << 0.0, 10.0, 5.0, 10.0, 10.0, 10.0;  // col 1 is constant
    NormStats st = fit_norm(x);
    Mat y = apply_norm(st, x);
    REQUIRE(y(0, 0) == 0.0);
    REQUIRE(y(1, 0) == 0.5);
    REQUIRE(y(2, 0) == 1.0);
    for (int r = 0; r < 3; ++r) REQUIRE(y(r, 1) == 0.0);  // constant channel maps to 0

    Mat out(1, 2);
    out << 20.0, 99.0;
    Mat z = apply_norm(st, out);
    REQUIRE(z(0, 0) == 2.0);  // outside the fit range stays outside [0,1]

    NormStats unfitted;
    REQUIRE_THROWS_AS(apply_norm(unfitted, x), UsageError);

    Mat wrong(1, 3);
    wrong.setZero();
    REQUIRE_THROWS_AS(apply_norm(st, wrong), ShapeError);
}

namespace {

Trajectory make_traj(int unit, int len, DatasetKind, int n_channels = 2) {
    Trajectory t;
    t.unit_id = unit;
    t.cycles.resize(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) t.cycles[static_cast<std::size_t>(i)] = i + 1;
    t.op_settings.resize(len, 0);
    t.sensors = Mat::Zero(len, n_channels);
    return t;
}

}  // namespace

TEST_CASE("label_rul: caps train at 80 and test at 125 by default") {
    TrajectorySet ts;
    ts.kind = DatasetKind::cmapss;
    ts.channel_names = {"a", "b"};
    Trajectory t = make_traj(1, 200, ts.kind);
    t.rul.resize(200);
    for (int i = 0; i < 200; ++i) t.rul(i) = 199 - i;
    ts.units.push_back(t);

    TrajectorySet train = label_rul(ts, RulLabelCfg{}, Split::train);
    REQUIRE(train.units[0].rul.maxCoeff() == 80.0);
    REQUIRE(train.units[0].rul(199) == 0.0);
    REQUIRE(train.units[0].rul(119) == 80.0);  // raw 80 stays 80

    TrajectorySet test = label_rul(ts, RulLabelCfg{}, Split::test);
    REQUIRE(test.units[0].rul.maxCoeff() == 125.0);

    // Idempotent: capping twice changes nothing.
    TrajectorySet again = label_rul(train, RulLabelCfg{}, Split::train);
    REQUIRE(again.units[0].rul.cwiseEqual(train.units[0].rul).all());
}

TEST_CASE("label_rul: unlabeled non-wear trajectory is an error") {
    TrajectorySet ts;
    ts.kind = DatasetKind::cmapss;
    ts.channel_names = {"a", "b"};
    ts.units.push_back(make_traj(1, 5, ts.kind));
    REQUIRE_THROWS_AS(label_rul(ts, RulLabelCfg{}, Split::train), UsageError);
}

TEST_CASE("label_rul: wear proxy interpolates the failure crossing") {
    TrajectorySet ts;
    ts.kind = DatasetKind::mill;
    ts.channel_names = {"a", "b"};
    Trajectory t = make_traj(1, 3, ts.kind);
    t.degradation.resize(3);
    t.degradation << 0.1, 0.4, 0.75;
    ts.units.push_back(t);

    TrajectorySet out = label_rul(ts, RulLabelCfg{}, Split::test);
    const Vec& rul = out.units[0].rul;
    // Crossing of 0.70 between cycles 2 and 3: 2 + (0.7-0.4)/(0.75-0.4) = 2.857142...
    const double cross = 2.0 + 0.3 / 0.35;
    REQUIRE(rul(0) == Catch::Approx(cross - 1.0).margin(1e-12));
    REQUIRE(rul(1) == Catch::Approx(cross - 2.0).margin(1e-12));
    REQUIRE(rul(2) == 0.0);  // past the crossing clamps at zero
    REQUIRE_FALSE(out.units[0].rul_extrapolated);
}

TEST_CASE("label_rul: wear never crossing extrapolates the last rising segment") {
    TrajectorySet ts;
    ts.kind = DatasetKind::mill;
    ts.channel_names = {"a", "b"};
    Trajectory t = make_traj(1, 2, ts.kind);
    t.degradation.resize(2);
    t.degradation << 0.2, 0.3;
    ts.units.push_back(t);

    TrajectorySet out = label_rul(ts, RulLabelCfg{}, Split::test);
    // Slope 0.1/cycle from cycle 2 at wear 0.3: crossing at cycle 6.
    REQUIRE(out.units[0].rul(0) == Catch::Approx(5.0).margin(1e-12));
    REQUIRE(out.units[0].rul(1) == Catch::Approx(4.0).margin(1e-12));
    REQUIRE(out.units[0].rul_extrapolated);
}

TEST_CASE("label_rul: flat wear has no RUL proxy") {
    TrajectorySet ts;
    ts.kind = DatasetKind::mill;
    ts.channel_names = {"a", "b"};
    Trajectory t = make_traj(1, 2, ts.kind);
    t.degradation.resize(2);
    t.degradation << 0.5, 0.5;
    ts.units.push_back(t);
    REQUIRE_THROWS_AS(label_rul(ts, RulLabelCfg{}, Split::test), ValidationError);
}

TEST_CASE("select_healthy: life fraction includes the boundary cycle") {
    TrajectorySet ts;
    ts.kind = DatasetKind::cmapss;
    ts.channel_names = {"a", "b"};
    Trajectory t = make_traj(1, 10, ts.kind);
    for (int i = 0; i < 10; ++i) t.sensors(i, 0) = i;
    t.rul.resize(10);
    for (int i = 0; i < 10; ++i) t.rul(i) = 9 - i;
    ts.units.push_back(t);

    SampleSet h = select_healthy(ts, HealthyPolicy{HealthyKind::life_fraction, 0.20});
    REQUIRE(h.rows() == 2);  // cycles 1 and 2 of 10: fractions 0.1 and exactly 0.2
    REQUIRE(h.keys[0].cycle == 1);
    REQUIRE(h.keys[1].cycle == 2);
    REQUIRE(h.x(1, 0) == 1.0);
    REQUIRE(h.rul(0) == 9.0);
}

TEST_CASE("select_healthy: zero matches is an error") {
    TrajectorySet ts;
    ts.kind = DatasetKind::cmapss;
    ts.channel_names = {"a", "b"};
    Trajectory t = make_traj(1, 3, ts.kind);
    t.rul = Vec::Zero(3);
    ts.units.push_back(t);
    REQUIRE_THROWS_AS(select_healthy(ts, HealthyPolicy{HealthyKind::life_fraction, 0.01}),
                      ValidationError);
}

TEST_CASE("select_healthy: wear policy needs a wear channel") {
    TrajectorySet ts;
    ts.kind = DatasetKind::mill;
    ts.channel_names = {"a", "b"};
    Trajectory with_wear = make_traj(1, 4, ts.kind);
    with_wear.degradation.resize(4);
    with_wear.degradation << 0.05, 0.2, 0.5, 0.8;
    ts.units.push_back(with_wear);

    SampleSet h = select_healthy(ts, HealthyPolicy{HealthyKind::wear_threshold, 0.20});
    REQUIRE(h.rows() == 2);  // wear 0.05 and 0.2

    TrajectorySet no_wear;
    no_wear.kind = DatasetKind::cmapss;
    no_wear.channel_names = {"a", "b"};
    no_wear.units.push_back(make_traj(1, 3, no_wear.kind));
    REQUIRE_THROWS_AS(select_healthy(no_wear, HealthyPolicy{HealthyKind::wear_threshold, 0.2}),
                      UsageError);
}

TEST_CASE("flatten: rows align with (unit, cycle) keys, labels and wear") {
    TrajectorySet ts;
    ts.kind = DatasetKind::mill;
    ts.channel_names = {"a", "b"};
    Trajectory t1 = make_traj(4, 2, ts.kind);
    t1.sensors << 1, 2, 3, 4;
    t1.rul.resize(2);
    t1.rul << 9, 8;
    t1.degradation.resize(2);
    t1.degradation << 0.1, 0.2;
    Trajectory t2 = make_traj(7, 1 + 1, ts.kind);
    t2.sensors << 5, 6, 7, 8;
    t2.rul.resize(2);
    t2.rul << 3, 2;
    t2.degradation.resize(2);
    t2.degradation << 0.3, 0.4;
    ts.units = {t1, t2};

    SampleSet f = flatten(ts);
    REQUIRE(f.rows() == 4);
    REQUIRE(f.keys[0].unit_id == 4);
    REQUIRE(f.keys[0].cycle == 1);
    REQUIRE(f.keys[3].unit_id == 7);
    REQUIRE(f.keys[3].cycle == 2);
    REQUIRE(f.x(2, 0) == 5.0);
    REQUIRE(f.rul(3) == 2.0);
    REQUIRE(f.wear(1) == 0.2);
}

TEST_CASE("partition_groups: column slices follow the GroupSpec order") {
    Mat x(2, 4);
    x << 1, 2, 3, 4, 5, 6, 7, 8;
    GroupSpec g;
    g.groups = {{"hi", {3, 0}}, {"lo", {1, 2}}};
    auto parts = partition_groups(x, g);
    REQUIRE(parts.size() == 2);
    REQUIRE(parts[0](0, 0) == 4.0);
    REQUIRE(parts[0](0, 1) == 1.0);
    REQUIRE(parts[1](1, 0) == 6.0);
}

TEST_CASE("mill: parse sorts runs, renumbers cycles, interpolates gaps") {
    TempDir td("mill");
    std::string csv = kMillHeader;
    // case 1 written out of run order; smcac has an interior gap on run 2.
    csv += "1,2,0.75,0.5,1,0.4,nan,2.0,3.0,4.0,5.0,6.0\n";
    csv += "1,1,0.75,0.5,1,0.1,1.0,2.0,3.0,4.0,5.0,6.0\n";
    csv += "1,3,0.75,0.5,1,0.75,3.0,2.0,3.0,4.0,5.0,6.0\n";
    // case 2: boundary gap in smcdc, wear gap in the middle.
    csv += "2,1,1.5,0.25,2,0.2,1.0,nan,3.0,4.0,5.0,6.0\n";
    csv += "2,2,1.5,0.25,2,nan,1.0,2.5,3.0,4.0,5.0,6.0\n";
    csv += "2,3,1.5,0.25,2,0.6,1.0,2.5,3.0,4.0,5.0,6.0\n";
    write_file(td.file("mill.csv"), csv);

    TrajectorySet ts = parse_mill(td.file("mill.csv"));
    REQUIRE(ts.kind == DatasetKind::mill);
    REQUIRE(ts.units.size() == 2);
    REQUIRE(ts.channel_names.size() == 6);
    REQUIRE(ts.op_names == std::vector<std::string>{"doc", "feed", "material"});

    const Trajectory& c1 = ts.units[0];
    REQUIRE(c1.cycles == std::vector<int>{1, 2, 3});
    REQUIRE(c1.degradation(0) == 0.1);  // run order restored
    REQUIRE(c1.degradation(2) == 0.75);
    REQUIRE(c1.sensors(1, 0) == 2.0);  // interior nan interpolated between 1 and 3
    REQUIRE_FALSE(c1.severe_only);

    const Trajectory& c2 = ts.units[1];
    REQUIRE(c2.sensors(0, 1) == 2.5);                               // boundary nan takes nearest
    REQUIRE(c2.degradation(1) == Catch::Approx(0.4).margin(1e-12));  // wear gap interpolated
}

TEST_CASE("mill: rejections and flags") {
    TempDir td("mill-bad");

    SECTION("wear outside [0,1]") {
        std::string csv = kMillHeader;
        csv += "1,1,0.75,0.5,1,0.1,1,2,3,4,5,6\n";
        csv += "1,2,0.75,0.5,1,1.4,1,2,3,4,5,6\n";
        write_file(td.file("m.csv"), csv);
        REQUIRE_THROWS_AS(parse_mill(td.file("m.csv")), ValidationError);
    }
    SECTION("case with a single run is rejected") {
        std::string csv = kMillHeader;
        csv += "1,1,0.75,0.5,1,0.1,1,2,3,4,5,6\n";
        csv += "2,1,0.75,0.5,1,0.1,1,2,3,4,5,6\n";
        csv += "2,2,0.75,0.5,1,0.2,1,2,3,4,5,6\n";
        write_file(td.file("m.csv"), csv);
        REQUIRE_THROWS_AS(parse_mill(td.file("m.csv")), ValidationError);
    }
    SECTION("missing column is named") {
        write_file(td.file("m.csv"), "case,run,doc,feed,material,vb,smcac\n1,1,1,1,1,0.1,2\n");
        try {
            parse_mill(td.file("m.csv"));
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(std::string(e.what()).find("smcdc") != std::string::npos);
        }
    }
    SECTION("severe_only marks cases already past the failure level") {
        std::string csv = kMillHeader;
        csv += "1,1,0.75,0.5,1,0.72,1,2,3,4,5,6\n";
        csv += "1,2,0.75,0.5,1,0.8,1,2,3,4,5,6\n";
        write_file(td.file("m.csv"), csv);
        TrajectorySet ts = parse_mill(td.file("m.csv"));
        REQUIRE(ts.units[0].severe_only);
    }
    SECTION("fully missing sensor column is an error") {
        std::string csv = kMillHeader;
        csv += "1,1,0.75,0.5,1,0.1,nan,2,3,4,5,6\n";
        csv += "1,2,0.75,0.5,1,0.2,nan,2,3,4,5,6\n";
        write_file(td.file("m.csv"), csv);
        REQUIRE_THROWS_AS(parse_mill(td.file("m.csv")), ValidationError);
    }
}

TEST_CASE("mill: default grouping is by sensor modality") {
    GroupSpec g = GroupSpec::mill_default(
        {"smcac", "smcdc", "vib_table", "vib_spindle", "ae_table", "ae_spindle"});
    REQUIRE(g.n_groups() == 3);
    REQUIRE(g.name(0) == "acoustic");
    REQUIRE(g.channels(0) == std::vector<int>{4, 5});
    REQUIRE(g.name(1) == "vibration");
    REQUIRE(g.channels(1) == std::vector<int>{2, 3});
    REQUIRE(g.name(2) == "current");
    REQUIRE(g.channels(2) == std::vector<int>{0, 1});
}
