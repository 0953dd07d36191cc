// Command-line front end for the HI-extraction + RUL-regression pipeline.

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "iglide/iglide.hpp"
#include "iglide/plot.hpp"

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    std::vector<std::uint64_t> seed_list;
    int jobs = 1;
};

iglide::ExperimentConfig effective_config(const GlobalOpts& g) {
    iglide::ExperimentConfig cfg;
    if (!g.config_path.empty()) {
        cfg = iglide::load_config(g.config_path);
    }
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (!g.seed_list.empty()) cfg.seeds = g.seed_list;
    cfg.validate();
    return cfg;
}

int run_stage(const std::string& stage, const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const iglide::Error& e) {
        std::cerr << "[" << stage << "] error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "[" << stage << "] unexpected error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Health-indicator extraction and RUL regression pipeline"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "Path to a JSON experiment config");
    app.add_option("--out", g.out_dir, "Output directory (overrides config)");
    app.add_option("--seed-list", g.seed_list, "Run seeds (overrides config)")->delimiter(',');
    app.add_option("--jobs", g.jobs, "Worker threads for forest fitting")
        ->check(CLI::Range(1, 256));

    auto* prepare = app.add_subcommand("prepare", "Parse, label and normalize the dataset");
    auto* train = app.add_subcommand("train", "Train HI extractors for every seed");
    auto* extract = app.add_subcommand("extract", "Extract HI trajectories for every seed");
    auto* fit_rul = app.add_subcommand("fit-rul", "Fit the RUL forest on extracted train HIs");
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate forests on test HIs");
    auto* run_all = app.add_subcommand("run-all", "Full protocol over all variants and HI sets");
    auto* synth = app.add_subcommand("synth", "Write the synthetic dataset as CSV");
    auto* plot = app.add_subcommand("plot", "Render an HI CSV as per-unit SVG line plots");

    std::string plot_csv;
    int plot_unit = -1;
    std::string plot_out = ".";
    plot->add_option("hi_csv", plot_csv, "HI trajectory CSV")->required();
    plot->add_option("--unit", plot_unit, "Only this unit id");
    plot->add_option("--plot-out", plot_out, "Directory for the SVG files");

    CLI11_PARSE(app, argc, argv);

    if (prepare->parsed()) {
        return run_stage("prepare", [&] { iglide::cmd_prepare(effective_config(g)); });
    }
    if (train->parsed()) {
        return run_stage("train", [&] {
            auto cfg = effective_config(g);
            auto bundle = iglide::load_or_prepare(cfg);
            for (auto seed : cfg.seeds) iglide::cmd_train(cfg, bundle, seed);
        });
    }
    if (extract->parsed()) {
        return run_stage("extract", [&] {
            auto cfg = effective_config(g);
            auto bundle = iglide::load_or_prepare(cfg);
            for (auto seed : cfg.seeds) {
                auto [ck, hash] = iglide::load_model_checkpoint(iglide::model_path(cfg, seed));
                if (hash != iglide::model_config_hash(cfg)) {
                    throw iglide::UsageError("checkpoint for seed " + std::to_string(seed) +
                                             " was built from a different config; re-run train");
                }
                iglide::cmd_extract(cfg, bundle, ck, seed);
            }
        });
    }
    if (fit_rul->parsed()) {
        return run_stage("fit-rul", [&] {
            auto cfg = effective_config(g);
            for (auto seed : cfg.seeds) {
                auto train_hi = iglide::hi_table_from_csv(iglide::hi_path(cfg, "train", seed));
                iglide::cmd_fit_rul(cfg, train_hi, seed, g.jobs);
            }
        });
    }
    if (evaluate->parsed()) {
        return run_stage("evaluate", [&] {
            auto cfg = effective_config(g);
            iglide::RunReport rep;
            rep.method = iglide::method_label(cfg.variant, cfg.hi_set);
            rep.dataset = cfg.dataset.label();
            rep.config_hash_hex = iglide::hash_hex(iglide::config_hash(cfg));
            rep.seeds = cfg.seeds;
            std::map<std::string, iglide::SeedSeries> series;
            for (auto seed : cfg.seeds) {
                auto forest = iglide::load_forest_checkpoint(iglide::forest_path(cfg, seed));
                auto test_hi = iglide::hi_table_from_csv(iglide::hi_path(cfg, "test", seed));
                for (const auto& [name, value] : iglide::cmd_evaluate(cfg, forest, test_hi)) {
                    series[name].name = name;
                    series[name].values.push_back(value);
                }
            }
            for (auto& [name, s] : series) {
                iglide::finish_series(s);
                rep.series.push_back(s);
                std::cout << rep.method << " " << name << " mean " << iglide::format_double(s.mean)
                          << " +- " << iglide::format_double(s.stddev) << "\n";
            }
            iglide::atomic_write(iglide::report_path(cfg), iglide::to_json(rep).dump(1) + "\n");
        });
    }
    if (run_all->parsed()) {
        return run_stage("run-all", [&] { iglide::cmd_run_all(effective_config(g), g.jobs); });
    }
    if (synth->parsed()) {
        return run_stage("synth", [&] {
            auto cfg = effective_config(g);
            auto result = iglide::make_synthetic(cfg.dataset.synth);
            const iglide::fs::path dir(cfg.out_dir);
            auto dump = [&](const iglide::TrajectorySet& ts, const std::string& name) {
                iglide::CsvTable t;
                t.header = {"unit", "cycle"};
                for (const auto& c : ts.channel_names) t.header.push_back(c);
                t.header.push_back("rul");
                for (const auto& u : ts.units) {
                    for (int i = 0; i < u.length(); ++i) {
                        std::vector<std::string> row{std::to_string(u.unit_id),
                                                     std::to_string(u.cycles[static_cast<std::size_t>(i)])};
                        for (int c = 0; c < ts.n_channels(); ++c) {
                            row.push_back(iglide::format_double(u.sensors(i, c)));
                        }
                        row.push_back(iglide::format_double(u.rul(i)));
                        t.rows.push_back(std::move(row));
                    }
                }
                iglide::write_csv(dir / name, t);
            };
            dump(result.train, "synthetic-train.csv");
            dump(result.test, "synthetic-test.csv");
            iglide::Json params{{"baseline", iglide::to_json(result.params.baseline)},
                                {"sensitivity", iglide::to_json(result.params.sensitivity)},
                                {"groups", iglide::to_json(result.params.groups)}};
            iglide::atomic_write(dir / "synthetic-params.json", params.dump(1) + "\n");
            std::cout << "[synth] wrote " << result.train.units.size() << " train / "
                      << result.test.units.size() << " test units to " << dir.string() << "\n";
        });
    }
    if (plot->parsed()) {
        return run_stage("plot", [&] {
            auto table = iglide::hi_table_from_csv(plot_csv);
            auto files = iglide::plot_hi_table(table, plot_out, plot_unit);
            std::cout << "[plot] wrote " << files.size() << " SVG file(s)\n";
        });
    }
    return 0;
}
