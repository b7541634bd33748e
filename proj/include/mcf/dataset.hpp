#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mcf/errors.hpp"

namespace mcf {

// Time-major multivariate series: values[t*M + c]. Immutable by convention
// after construction; everything downstream shares const references.
struct Dataset {
    std::vector<double> values;  // T*M, row-major
    std::size_t T = 0;
    std::size_t M = 0;
    std::vector<std::string> channel_names;
    std::string freq;    // free-text sampling label, e.g. "1h"
    std::string source;  // provenance: file path or generator description

    double at(std::size_t t, std::size_t c) const { return values[t * M + c]; }
    double& at(std::size_t t, std::size_t c) { return values[t * M + c]; }
};

inline void validate_dataset(const Dataset& ds) {
    if (ds.T < 2 || ds.M < 1)
        throw ShapeError("dataset needs T >= 2 and M >= 1, got T=" + std::to_string(ds.T) +
                         " M=" + std::to_string(ds.M));
    if (ds.values.size() != ds.T * ds.M) throw ShapeError("dataset buffer size mismatch");
    if (ds.channel_names.size() != ds.M) throw ShapeError("dataset channel name count mismatch");
    std::set<std::string> uniq(ds.channel_names.begin(), ds.channel_names.end());
    if (uniq.size() != ds.M) throw ShapeError("duplicate channel names");
    for (double v : ds.values)
        if (!std::isfinite(v)) throw ShapeError("non-finite value in dataset");
}

// One supervised pair: x is the L*M look-back block ending right where the
// h*M target block y begins; t0 indexes the first row of x in the source.
struct WindowSample {
    std::vector<double> x;  // L*M
    std::vector<double> y;  // h*M
    std::size_t t0 = 0;
};

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.1;
    double test_frac = 0.2;
};

namespace detail {

inline bool parse_double(const std::string& cell, double& out) {
    std::size_t b = 0, e = cell.size();
    while (b < e && (cell[b] == ' ' || cell[b] == '\t')) ++b;
    while (e > b && (cell[e - 1] == ' ' || cell[e - 1] == '\t')) --e;
    if (b == e) return false;
    const char* first = cell.data() + b;
    const char* last = cell.data() + e;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

inline bool cell_is_blank(const std::string& cell) {
    for (char ch : cell)
        if (ch != ' ' && ch != '\t') return false;
    return true;
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

// Comma-separated, UTF-8, '.' decimal point, optional single header row.
// datetime_col, when given, names a column that is dropped from the values
// but must be non-decreasing; ISO-8601 timestamps compare correctly as
// strings. With forward_fill, blank or nan cells inherit the value above
// them; otherwise any cell that does not parse as a finite number raises
// ParseError with its 1-based file coordinates.
inline Dataset load_csv(const std::string& path, bool has_header,
                        std::optional<std::size_t> datetime_col = std::nullopt,
                        bool forward_fill = false) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw ShapeError(path + ": empty file");

    std::size_t row0 = 0;
    std::vector<std::string> names;
    const std::size_t ncols = detail::split_fields(lines[0]).size();
    if (has_header) {
        names = detail::split_fields(lines[0]);
        row0 = 1;
    }
    if (datetime_col && *datetime_col >= ncols)
        throw ConfigError("datetime column " + std::to_string(*datetime_col) +
                          " out of range for " + std::to_string(ncols) + " columns");

    Dataset ds;
    ds.M = datetime_col ? ncols - 1 : ncols;
    if (ds.M < 1) throw ShapeError(path + ": no value columns");
    ds.source = path;

    std::string prev_stamp;
    for (std::size_t r = row0; r < lines.size(); ++r) {
        const auto fields = detail::split_fields(lines[r]);
        if (fields.size() != ncols)
            throw ShapeError(path + ": row " + std::to_string(r + 1) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(ncols));
        std::size_t out_c = 0;
        for (std::size_t c = 0; c < ncols; ++c) {
            if (datetime_col && c == *datetime_col) {
                const std::string& stamp = fields[c];
                if (!prev_stamp.empty() && stamp < prev_stamp)
                    throw OrderError(path + ": timestamps decrease at row " +
                                     std::to_string(r + 1));
                prev_stamp = stamp;
                continue;
            }
            double v = 0.0;
            const bool blank = detail::cell_is_blank(fields[c]);
            const bool ok = !blank && detail::parse_double(fields[c], v);
            const bool missing = blank || (ok && std::isnan(v));
            if (ok && std::isfinite(v)) {
                ds.values.push_back(v);
            } else if (missing && forward_fill && ds.T > 0) {
                // inherit the previous row's value for this channel
                ds.values.push_back(ds.values[(ds.T - 1) * ds.M + out_c]);
            } else {
                throw ParseError(path + ": cell is not a finite number", r + 1, c + 1);
            }
            ++out_c;
        }
        ++ds.T;
    }

    if (has_header) {
        for (std::size_t c = 0; c < ncols; ++c) {
            if (datetime_col && c == *datetime_col) continue;
            ds.channel_names.push_back(names[c]);
        }
    } else {
        for (std::size_t c = 0; c < ds.M; ++c) ds.channel_names.push_back("ch" + std::to_string(c));
    }
    validate_dataset(ds);
    return ds;
}

namespace detail {

// Shortest representation that round-trips; byte-stable across runs.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

inline void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IOError("cannot write " + path);
    for (std::size_t c = 0; c < ds.M; ++c) {
        if (c) out << ',';
        out << ds.channel_names[c];
    }
    out << '\n';
    for (std::size_t t = 0; t < ds.T; ++t) {
        for (std::size_t c = 0; c < ds.M; ++c) {
            if (c) out << ',';
            out << detail::format_double(ds.at(t, c));
        }
        out << '\n';
    }
    if (!out) throw IOError("write failed for " + path);
}

namespace detail {

inline Dataset slice_rows(const Dataset& ds, std::size_t begin, std::size_t end) {
    Dataset out;
    out.T = end - begin;
    out.M = ds.M;
    out.channel_names = ds.channel_names;
    out.freq = ds.freq;
    out.source = ds.source;
    out.values.assign(ds.values.begin() + static_cast<std::ptrdiff_t>(begin * ds.M),
                      ds.values.begin() + static_cast<std::ptrdiff_t>(end * ds.M));
    return out;
}

}  // namespace detail

struct SplitResult {
    Dataset train, val, test;
};

// Contiguous chronological split covering every row: train gets rows
// [0, floor(T*train_frac)), val the next block up to floor(T*(train+val)),
// test the remainder.
inline SplitResult chronological_split(const Dataset& ds, const SplitSpec& spec) {
    const double sum = spec.train_frac + spec.val_frac + spec.test_frac;
    if (!(spec.train_frac > 0 && spec.train_frac < 1) ||
        !(spec.val_frac > 0 && spec.val_frac < 1) ||
        !(spec.test_frac > 0 && spec.test_frac < 1) || std::fabs(sum - 1.0) > 1e-9)
        throw ConfigError("split fractions must each lie in (0,1) and sum to 1");
    // The 1e-9 nudge keeps products like 10*0.7 = 6.999...96 from flooring
    // one short of the decimal-arithmetic boundary.
    const std::size_t b1 = static_cast<std::size_t>(
        std::floor(static_cast<double>(ds.T) * spec.train_frac + 1e-9));
    const std::size_t b2 = static_cast<std::size_t>(
        std::floor(static_cast<double>(ds.T) * (spec.train_frac + spec.val_frac) + 1e-9));
    if (b1 == 0 || b2 <= b1 || b2 >= ds.T)
        throw SplitError("split produces an empty segment for T=" + std::to_string(ds.T));
    return {detail::slice_rows(ds, 0, b1), detail::slice_rows(ds, b1, b2),
            detail::slice_rows(ds, b2, ds.T)};
}

// Per-channel affine transform fitted on the training segment only.
// Population std; constant channels keep std 1 so they scale to zeros.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> stddev;

    Dataset apply(const Dataset& ds) const {
        Dataset out = ds;
        for (std::size_t t = 0; t < out.T; ++t)
            for (std::size_t c = 0; c < out.M; ++c)
                out.at(t, c) = (out.at(t, c) - mean[c]) / stddev[c];
        return out;
    }
    Dataset invert(const Dataset& ds) const {
        Dataset out = ds;
        for (std::size_t t = 0; t < out.T; ++t)
            for (std::size_t c = 0; c < out.M; ++c)
                out.at(t, c) = out.at(t, c) * stddev[c] + mean[c];
        return out;
    }
};

inline Scaler fit_scaler(const Dataset& train) {
    Scaler s;
    s.mean.resize(train.M);
    s.stddev.resize(train.M);
    for (std::size_t c = 0; c < train.M; ++c) {
        double mu = 0.0;
        for (std::size_t t = 0; t < train.T; ++t) mu += train.at(t, c);
        mu /= static_cast<double>(train.T);
        double var = 0.0;
        for (std::size_t t = 0; t < train.T; ++t) {
            const double d = train.at(t, c) - mu;
            var += d * d;
        }
        var /= static_cast<double>(train.T);
        s.mean[c] = mu;
        s.stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

struct StandardizeResult {
    Dataset train;
    std::vector<Dataset> others;
    Scaler scaler;
};

// Scales train and every other segment with train-only statistics. All
// downstream metrics are computed in this scaled space.
inline StandardizeResult standardize(const Dataset& train,
                                     const std::vector<const Dataset*>& others = {}) {
    StandardizeResult res;
    res.scaler = fit_scaler(train);
    res.train = res.scaler.apply(train);
    res.others.reserve(others.size());
    for (const Dataset* d : others) res.others.push_back(res.scaler.apply(*d));
    return res;
}

// Sliding supervised pairs in time order; count = floor((T-L-h)/stride) + 1.
inline std::vector<WindowSample> make_windows(const Dataset& ds, std::size_t L, std::size_t h,
                                              std::size_t stride = 1) {
    if (L < 1 || h < 1 || stride < 1) throw ConfigError("make_windows: L, h, stride must be >= 1");
    if (ds.T < L + h)
        throw InsufficientData("need T >= L+h, got T=" + std::to_string(ds.T) + " L=" +
                               std::to_string(L) + " h=" + std::to_string(h));
    const std::size_t count = (ds.T - L - h) / stride + 1;
    std::vector<WindowSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t t0 = i * stride;
        WindowSample w;
        w.t0 = t0;
        w.x.assign(ds.values.begin() + static_cast<std::ptrdiff_t>(t0 * ds.M),
                   ds.values.begin() + static_cast<std::ptrdiff_t>((t0 + L) * ds.M));
        w.y.assign(ds.values.begin() + static_cast<std::ptrdiff_t>((t0 + L) * ds.M),
                   ds.values.begin() + static_cast<std::ptrdiff_t>((t0 + L + h) * ds.M));
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace mcf
