// Command-line front end: synth | train | eval | ablate | correlate.
// Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcf/analysis.hpp"
#include "mcf/checkpoint.hpp"
#include "mcf/dataset.hpp"
#include "mcf/errors.hpp"
#include "mcf/model.hpp"
#include "mcf/runconfig.hpp"
#include "mcf/synth.hpp"
#include "mcf/train.hpp"

namespace {

using namespace mcf;

void write_json_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IOError("cannot write " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IOError("short write to " + path);
}

void write_config_snapshot(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    write_json_file(run_config_to_json(cfg), cfg.out_dir + "/config.json");
}

nlohmann::json report_to_json(const ForecastReport& rep) {
    nlohmann::json j;
    j["mse"] = rep.mse;
    j["mae"] = rep.mae;
    j["train_loss"] = rep.train_loss;
    j["val_loss"] = rep.val_loss;
    j["best_epoch"] = rep.best_epoch;
    j["config_hash"] = rep.config_hash;
    j["seed"] = rep.seed;
    j["wall_time_s"] = rep.wall_time_s;
    return j;
}

struct SplitWindows {
    std::vector<WindowSample> train, val, test;
};

SplitWindows windows_from(const RunConfig& cfg, const Dataset& ds) {
    SplitResult split = chronological_split(ds, cfg.split);
    if (cfg.data.standardize) {
        StandardizeResult st = standardize(split.train, {&split.val, &split.test});
        split.train = std::move(st.train);
        split.val = std::move(st.others[0]);
        split.test = std::move(st.others[1]);
    }
    SplitWindows w;
    w.train = make_windows(split.train, cfg.model.L, cfg.model.h, cfg.data.window_stride);
    w.val = make_windows(split.val, cfg.model.L, cfg.model.h, cfg.data.window_stride);
    w.test = make_windows(split.test, cfg.model.L, cfg.model.h, cfg.data.window_stride);
    return w;
}

int cmd_synth(const std::string& kind, std::size_t M, std::size_t T, std::uint64_t seed,
              const SynthParams& params, const std::string& out) {
    Dataset ds = synth_generate(kind, M, T, seed, params);
    save_csv(ds, out);
    std::cout << "wrote " << out << " (" << ds.T << " rows, " << ds.M << " channels)\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides) {
    RunConfig cfg = load_run_config(config_path, overrides);
    Dataset ds = resolve_dataset(cfg);
    write_config_snapshot(cfg);
    SplitWindows w = windows_from(cfg, ds);

    Mcformer model(cfg.model, cfg.train.seed);
    ForecastReport train_rep = fit(model, w.train, w.val, cfg.train);
    ForecastReport test_rep = evaluate(model, w.test, cfg.train.batch_size);

    save_checkpoint(model, cfg.out_dir + "/checkpoint.json");

    nlohmann::json rep = report_to_json(train_rep);
    rep["val_mse"] = train_rep.mse;
    rep["val_mae"] = train_rep.mae;
    rep["test_mse"] = test_rep.mse;
    rep["test_mae"] = test_rep.mae;
    write_json_file(rep, cfg.out_dir + "/report.json");

    std::cout << "best epoch " << train_rep.best_epoch << ", val mse " << train_rep.mse
              << ", test mse " << test_rep.mse << ", test mae " << test_rep.mae << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::vector<std::string>& overrides,
             const std::string& checkpoint_path) {
    RunConfig cfg = load_run_config(config_path, overrides);
    const ModelConfig saved = peek_checkpoint_config(checkpoint_path);
    cfg.model = saved;  // the checkpoint owns the architecture
    Dataset ds = resolve_dataset(cfg);
    write_config_snapshot(cfg);
    SplitWindows w = windows_from(cfg, ds);

    Mcformer model(saved, 0);
    load_checkpoint(model, checkpoint_path);
    ForecastReport test_rep = evaluate(model, w.test, cfg.train.batch_size);

    nlohmann::json rep;
    rep["test_mse"] = test_rep.mse;
    rep["test_mae"] = test_rep.mae;
    rep["checkpoint"] = checkpoint_path;
    write_json_file(rep, cfg.out_dir + "/eval_report.json");

    std::cout << "test mse " << test_rep.mse << ", test mae " << test_rep.mae << "\n";
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& overrides,
               const std::vector<std::size_t>& m_values,
               const std::vector<std::size_t>& horizons,
               const std::vector<std::uint64_t>& seeds, std::size_t max_runs) {
    RunConfig cfg = load_run_config(config_path, overrides);
    Dataset ds = resolve_dataset(cfg);
    write_config_snapshot(cfg);

    AblationGrid grid;
    const std::string name = !cfg.data.path.empty()
                                 ? std::filesystem::path(cfg.data.path).stem().string()
                                 : cfg.data.kind;
    grid.datasets.emplace_back(name, std::move(ds));
    grid.m_values = m_values.empty() ? std::vector<std::size_t>{cfg.model.m} : m_values;
    grid.horizons = horizons.empty() ? std::vector<std::size_t>{cfg.model.h} : horizons;
    grid.seeds = seeds.empty() ? std::vector<std::uint64_t>{cfg.train.seed} : seeds;

    SweepOptions opt;
    opt.split = cfg.split;
    opt.window_stride = cfg.data.window_stride;
    opt.max_runs = max_runs;

    const std::string csv_path = cfg.out_dir + "/ablation.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IOError("cannot write " + csv_path);
    csv << "dataset,m,horizon,seed,mse,mae,wall_time_s\n" << std::flush;

    std::size_t failures = 0;
    auto rows = ablation_sweep(grid, cfg.model, cfg.train, opt, [&](const AblationResult& r) {
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%zu,%zu,%llu,%.17g,%.17g,%.17g\n",
                      r.dataset.c_str(), r.m, r.horizon,
                      static_cast<unsigned long long>(r.seed), r.mse, r.mae, r.wall_time_s);
        csv << line << std::flush;
        if (r.failed) {
            ++failures;
            std::cerr << "cell (m=" << r.m << ", h=" << r.horizon << ", seed=" << r.seed
                      << ") failed: " << r.error << "\n";
        } else {
            std::cout << name << " m=" << r.m << " h=" << r.horizon << " seed=" << r.seed
                      << " mse=" << r.mse << " mae=" << r.mae << "\n";
        }
    });

    export_report(rows, cfg.out_dir + "/ablation.json", "json");
    std::cout << "wrote " << csv_path << " (" << rows.size() << " rows, " << failures
              << " failed)\n";
    return failures == 0 ? 0 : 2;
}

int cmd_correlate(const std::string& data_path, const std::string& channels, std::size_t window,
                  const std::string& out, bool has_header) {
    const std::size_t comma = channels.find(',');
    if (comma == std::string::npos)
        throw ConfigError("--channels expects two indices like 0,3");
    std::size_t a = 0, b = 0;
    try {
        a = std::stoull(channels.substr(0, comma));
        b = std::stoull(channels.substr(comma + 1));
    } catch (const std::exception&) {
        throw ConfigError("--channels expects two indices like 0,3");
    }

    Dataset ds = load_csv(data_path, has_header);
    CorrelationSeries series = rolling_correlation(ds, a, b, window);

    std::ofstream f(out, std::ios::trunc);
    if (!f) throw IOError("cannot write " + out);
    f << "t,corr\n";
    for (std::size_t t = 0; t < series.values.size(); ++t) {
        char line[64];
        std::snprintf(line, sizeof(line), "%zu,%.17g\n", t, series.values[t]);
        f << line;
    }
    if (!f) throw IOError("short write to " + out);
    std::cout << "wrote " << out << " (" << series.values.size() << " windows)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed-channel time-series forecasting toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset CSV");
    std::string synth_kind = "leader_follower";
    std::size_t synth_m = 8, synth_len = 4000;
    std::uint64_t synth_seed = 1;
    SynthParams synth_params;
    std::string synth_out = "synth.csv";
    synth->add_option("--kind", synth_kind,
                      "leader_follower | independent_walks | shared_season | drifting_corr");
    synth->add_option("--m-channels", synth_m, "channel count");
    synth->add_option("--length", synth_len, "number of rows");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--sigma", synth_params.sigma, "observation noise std");
    synth->add_option("--lag", synth_params.lag, "leader_follower lag per channel");
    synth->add_option("--period", synth_params.period, "sinusoid period");
    synth->add_option("--rho", synth_params.rho, "AR(1) coefficient");
    synth->add_option("--out", synth_out, "output CSV path")->required();

    // shared train/eval/ablate options
    std::string config_path;
    std::vector<std::string> overrides;

    auto* train = app.add_subcommand("train", "Train a model per the run config");
    train->add_option("--config", config_path, "run config JSON path");
    train->add_option("--set", overrides, "override, e.g. --set model.m=3")->take_all();

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    std::string checkpoint_path;
    eval->add_option("--config", config_path, "run config JSON path");
    eval->add_option("--set", overrides, "override, e.g. --set data.synth.seed=2")->take_all();
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint manifest path")->required();

    auto* ablate = app.add_subcommand("ablate", "Sweep mix counts / horizons / seeds");
    std::vector<std::size_t> m_values, horizons;
    std::vector<std::uint64_t> seeds;
    std::size_t max_runs = 4096;
    ablate->add_option("--config", config_path, "run config JSON path");
    ablate->add_option("--set", overrides, "override")->take_all();
    ablate->add_option("--m-values", m_values, "mix counts to sweep")->delimiter(',');
    ablate->add_option("--horizons", horizons, "horizons to sweep")->delimiter(',');
    ablate->add_option("--seeds", seeds, "seeds to sweep")->delimiter(',');
    ablate->add_option("--max-runs", max_runs, "refuse grids larger than this");

    auto* correlate = app.add_subcommand("correlate", "Rolling Pearson correlation CSV");
    std::string corr_data, corr_channels = "0,1", corr_out = "correlation.csv";
    std::size_t corr_window = 96;
    bool corr_no_header = false;
    correlate->add_option("--data", corr_data, "input CSV path")->required();
    correlate->add_option("--channels", corr_channels, "channel pair, e.g. 0,3");
    correlate->add_option("--window", corr_window, "window length (default 96)");
    correlate->add_option("--out", corr_out, "output CSV path")->required();
    correlate->add_flag("--no-header", corr_no_header, "input CSV has no header row");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed())
            return cmd_synth(synth_kind, synth_m, synth_len, synth_seed, synth_params,
                             synth_out);
        if (train->parsed()) return cmd_train(config_path, overrides);
        if (eval->parsed()) return cmd_eval(config_path, overrides, checkpoint_path);
        if (ablate->parsed())
            return cmd_ablate(config_path, overrides, m_values, horizons, seeds, max_runs);
        if (correlate->parsed())
            return cmd_correlate(corr_data, corr_channels, corr_window, corr_out,
                                 !corr_no_header);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
