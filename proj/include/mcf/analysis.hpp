#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mcf/dataset.hpp"
#include "mcf/errors.hpp"
#include "mcf/model.hpp"
#include "mcf/train.hpp"

namespace mcf {

struct CorrelationSeries {
    std::size_t a = 0;
    std::size_t b = 0;
    std::size_t w = 0;
    std::vector<double> values;  // one Pearson coefficient per window start
};

// Pearson correlation of channels a and b over every length-w window.
// Population normalization; a window where either channel is constant has no
// defined coefficient and yields NaN (never +-inf).
inline CorrelationSeries rolling_correlation(const Dataset& ds, std::size_t a, std::size_t b,
                                             std::size_t w) {
    if (a >= ds.M || b >= ds.M)
        throw ConfigError("correlation channels out of range for M=" + std::to_string(ds.M));
    if (a == b) throw ConfigError("correlation needs two distinct channels");
    if (w < 2) throw InvalidWindow("correlation window must be >= 2");
    if (ds.T < w)
        throw InvalidWindow("correlation window " + std::to_string(w) +
                            " exceeds series length " + std::to_string(ds.T));

    const std::size_t T = ds.T;
    // Prefix sums in extended precision keep the windowed differences stable;
    // the test oracle recomputes each window naively.
    std::vector<long double> sx(T + 1, 0.0L), sy(T + 1, 0.0L), sxx(T + 1, 0.0L),
        syy(T + 1, 0.0L), sxy(T + 1, 0.0L);
    // const_x[t] counts adjacent equal pairs, used to flag exactly-constant
    // windows without trusting cancellation.
    std::vector<std::size_t> eqx(T, 0), eqy(T, 0);
    for (std::size_t t = 0; t < T; ++t) {
        const long double x = ds.at(t, a), y = ds.at(t, b);
        sx[t + 1] = sx[t] + x;
        sy[t + 1] = sy[t] + y;
        sxx[t + 1] = sxx[t] + x * x;
        syy[t + 1] = syy[t] + y * y;
        sxy[t + 1] = sxy[t] + x * y;
        if (t > 0) {
            eqx[t] = eqx[t - 1] + (ds.at(t, a) == ds.at(t - 1, a) ? 1 : 0);
            eqy[t] = eqy[t - 1] + (ds.at(t, b) == ds.at(t - 1, b) ? 1 : 0);
        }
    }

    CorrelationSeries out;
    out.a = a;
    out.b = b;
    out.w = w;
    out.values.reserve(T - w + 1);
    const long double n = static_cast<long double>(w);
    for (std::size_t t = 0; t + w <= T; ++t) {
        const std::size_t last = t + w - 1;
        const bool const_x = eqx[last] - eqx[t] == w - 1;
        const bool const_y = eqy[last] - eqy[t] == w - 1;
        const long double dx = sx[t + w] - sx[t];
        const long double dy = sy[t + w] - sy[t];
        const long double varx = (sxx[t + w] - sxx[t]) - dx * dx / n;
        const long double vary = (syy[t + w] - syy[t]) - dy * dy / n;
        const long double cov = (sxy[t + w] - sxy[t]) - dx * dy / n;
        if (const_x || const_y || varx <= 0.0L || vary <= 0.0L) {
            out.values.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        long double r = cov / std::sqrt(varx * vary);
        if (r > 1.0L) r = 1.0L;
        if (r < -1.0L) r = -1.0L;
        out.values.push_back(static_cast<double>(r));
    }
    return out;
}

struct AblationGrid {
    std::vector<std::pair<std::string, Dataset>> datasets;  // display name + data
    std::vector<std::size_t> m_values;
    std::vector<std::size_t> horizons;
    std::vector<std::uint64_t> seeds;
};

struct AblationResult {
    std::string dataset;
    std::size_t m = 0;
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
    double mse = std::numeric_limits<double>::quiet_NaN();
    double mae = std::numeric_limits<double>::quiet_NaN();
    double wall_time_s = 0.0;
    bool failed = false;
    std::string error;
};

struct SweepOptions {
    SplitSpec split;
    std::size_t window_stride = 1;
    std::size_t max_runs = 4096;  // refuse larger grids outright
    std::size_t threads = 0;      // 0 = MCF_THREADS env or hardware count
};

namespace detail {

inline std::size_t sweep_thread_count(std::size_t requested, std::size_t cells) {
    std::size_t n = requested;
    if (n == 0) {
        if (const char* env = std::getenv("MCF_THREADS")) {
            char* end = nullptr;
            const unsigned long v = std::strtoul(env, &end, 10);
            if (end && *end == '\0' && v >= 1) n = v;
        }
    }
    if (n == 0) n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    return std::min(n, std::max<std::size_t>(1, cells));
}

// One full train + test cycle for a grid cell.
inline AblationResult run_cell(const std::string& name, const Dataset& ds, std::size_t m,
                               std::size_t horizon, std::uint64_t seed,
                               const ModelConfig& base_mc, const TrainConfig& base_tc,
                               const SweepOptions& opt) {
    AblationResult res;
    res.dataset = name;
    res.m = m;
    res.horizon = horizon;
    res.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        ModelConfig mc = base_mc;
        mc.M = ds.M;
        mc.m = m;
        mc.h = horizon;
        validate(mc);
        TrainConfig tc = base_tc;
        tc.seed = seed;

        SplitResult split = chronological_split(ds, opt.split);
        auto train_w = make_windows(split.train, mc.L, mc.h, opt.window_stride);
        auto val_w = make_windows(split.val, mc.L, mc.h, opt.window_stride);
        auto test_w = make_windows(split.test, mc.L, mc.h, opt.window_stride);

        Mcformer model(mc, seed);
        fit(model, train_w, val_w, tc);
        ForecastReport test_rep = evaluate(model, test_w, tc.batch_size);
        res.mse = test_rep.mse;
        res.mae = test_rep.mae;
    } catch (const std::exception& e) {
        res.failed = true;
        res.error = e.what();
    }
    res.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace detail

// Runs fit + evaluate for every (dataset, m, horizon, seed) cell. Cells run
// on a small worker pool (capped by MCF_THREADS); `on_row` fires in grid
// order as soon as each row's turn is complete, so a killed sweep keeps every
// row already emitted. Per-cell failures are recorded in the row, not thrown.
inline std::vector<AblationResult> ablation_sweep(
    const AblationGrid& grid, const ModelConfig& base_mc, const TrainConfig& base_tc,
    const SweepOptions& opt = {},
    const std::function<void(const AblationResult&)>& on_row = nullptr) {
    if (grid.datasets.empty() || grid.m_values.empty() || grid.horizons.empty() ||
        grid.seeds.empty())
        throw ConfigError("ablation grid has an empty axis");
    for (const auto& [name, ds] : grid.datasets)
        for (std::size_t m : grid.m_values)
            if (ds.M < 1 || m > ds.M - 1)
                throw ConfigError("ablation m=" + std::to_string(m) +
                                  " invalid for dataset '" + name +
                                  "' with M=" + std::to_string(ds.M));

    struct Cell {
        const std::string* name;
        const Dataset* ds;
        std::size_t m, horizon;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto& [name, ds] : grid.datasets)
        for (std::size_t m : grid.m_values)
            for (std::size_t horizon : grid.horizons)
                for (std::uint64_t seed : grid.seeds)
                    cells.push_back({&name, &ds, m, horizon, seed});
    if (cells.size() > opt.max_runs)
        throw ConfigError("ablation grid has " + std::to_string(cells.size()) +
                          " cells, cap is " + std::to_string(opt.max_runs));

    std::vector<AblationResult> results(cells.size());
    const std::size_t workers = detail::sweep_thread_count(opt.threads, cells.size());

    if (workers <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const Cell& c = cells[i];
            results[i] =
                detail::run_cell(*c.name, *c.ds, c.m, c.horizon, c.seed, base_mc, base_tc, opt);
            if (on_row) on_row(results[i]);
        }
        return results;
    }

    std::atomic<std::size_t> next{0};
    std::vector<char> done(cells.size(), 0);
    std::mutex mu;
    std::condition_variable cv;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& c = cells[i];
            AblationResult r =
                detail::run_cell(*c.name, *c.ds, c.m, c.horizon, c.seed, base_mc, base_tc, opt);
            {
                std::lock_guard<std::mutex> lk(mu);
                results[i] = std::move(r);
                done[i] = 1;
            }
            cv.notify_all();
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t k = 0; k < workers; ++k) pool.emplace_back(worker);
    // Emit in grid order while workers fill the table.
    for (std::size_t i = 0; i < cells.size(); ++i) {
        std::unique_lock<std::mutex> lk(mu);
        cv.wait(lk, [&] { return done[i] == 1; });
        if (on_row) {
            AblationResult copy = results[i];
            lk.unlock();
            on_row(copy);
        }
    }
    for (auto& t : pool) t.join();
    return results;
}

namespace detail {

inline std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// CSV columns are fixed: dataset,m,horizon,seed,mse,mae,wall_time_s. JSON is
// an array of objects with the same keys. Rows keep their given order.
inline void export_report(const std::vector<AblationResult>& results, const std::string& path,
                          const std::string& format) {
    if (format == "csv") {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IOError("cannot write " + path);
        f << "dataset,m,horizon,seed,mse,mae,wall_time_s\n";
        for (const auto& r : results) {
            f << r.dataset << "," << r.m << "," << r.horizon << "," << r.seed << ","
              << detail::format_g17(r.mse) << "," << detail::format_g17(r.mae) << ","
              << detail::format_g17(r.wall_time_s) << "\n";
        }
        if (!f) throw IOError("short write to " + path);
    } else if (format == "json") {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : results) {
            nlohmann::json row;
            row["dataset"] = r.dataset;
            row["m"] = r.m;
            row["horizon"] = r.horizon;
            row["seed"] = r.seed;
            row["mse"] = r.mse;
            row["mae"] = r.mae;
            row["wall_time_s"] = r.wall_time_s;
            if (r.failed) row["error"] = r.error;
            arr.push_back(std::move(row));
        }
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IOError("cannot write " + path);
        f << arr.dump(2) << "\n";
        if (!f) throw IOError("short write to " + path);
    } else {
        throw ConfigError("export format must be csv or json, got '" + format + "'");
    }
}

// Parses a CSV produced by export_report; used by tests and downstream
// tooling to reload sweep tables.
inline std::vector<AblationResult> import_report_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IOError("cannot read " + path);
    std::string line;
    if (!std::getline(f, line)) throw FormatError("empty report file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "dataset,m,horizon,seed,mse,mae,wall_time_s")
        throw FormatError("unexpected report header: " + line);
    std::vector<AblationResult> out;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i)
            if (i == line.size() || line[i] == ',') {
                cols.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        if (cols.size() != 7)
            throw FormatError("report row " + std::to_string(lineno) + " has " +
                              std::to_string(cols.size()) + " columns");
        AblationResult r;
        r.dataset = cols[0];
        try {
            r.m = std::stoull(cols[1]);
            r.horizon = std::stoull(cols[2]);
            r.seed = std::stoull(cols[3]);
            r.mse = std::stod(cols[4]);
            r.mae = std::stod(cols[5]);
            r.wall_time_s = std::stod(cols[6]);
        } catch (const std::exception&) {
            throw FormatError("unparseable report row " + std::to_string(lineno));
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace mcf
