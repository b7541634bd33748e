#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcf/dataset.hpp"
#include "mcf/errors.hpp"
#include "mcf/model.hpp"
#include "mcf/synth.hpp"
#include "mcf/train.hpp"

namespace mcf {

// Where the rows come from: a CSV on disk when `path` is set, otherwise the
// named synthetic generator.
struct DataSpec {
    std::string path;
    bool has_header = true;
    std::optional<std::size_t> datetime_col;
    bool forward_fill = false;
    std::size_t window_stride = 1;
    bool standardize = false;
    std::string kind = "leader_follower";
    std::size_t M = 8;
    std::size_t T = 4000;
    std::uint64_t seed = 1;
    SynthParams synth;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DataSpec data;
    SplitSpec split;
    std::string out_dir = "runs/default";
};

namespace detail {

// Fail-closed key check: every key in the document must be known, and the
// error names the full dotted path of the offender.
inline void reject_unknown_keys(const nlohmann::json& j, const std::string& prefix,
                                const std::vector<std::string>& known) {
    if (!j.is_object())
        throw ConfigError("config section '" + (prefix.empty() ? "<root>" : prefix) +
                          "' must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const auto& k : known)
            if (k == key) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError("unknown config key '" + (prefix.empty() ? key : prefix + "." + key) +
                              "'");
        (void)value;
    }
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key, const std::string& prefix,
            T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + prefix + "." + key + "' has the wrong type");
    }
}

}  // namespace detail

// Builds a RunConfig from a parsed JSON document. Unknown keys anywhere in
// the tree are rejected; missing keys fall back to defaults, so "{}" is a
// complete synth-run config.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, "", {"model", "train", "data", "split", "out_dir"});
    RunConfig cfg;

    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown_keys(
            m, "model",
            {"M", "L", "h", "m", "p", "S", "P", "n_heads", "n_layers", "d_ff", "dropout",
             "activation", "revin_affine", "pre_norm", "revin_eps", "ln_eps"});
        ModelConfig& mc = cfg.model;
        mc.M = detail::get_field<std::size_t>(m, "M", "model", mc.M);
        mc.L = detail::get_field<std::size_t>(m, "L", "model", mc.L);
        mc.h = detail::get_field<std::size_t>(m, "h", "model", mc.h);
        mc.m = detail::get_field<std::size_t>(m, "m", "model", mc.m);
        mc.p = detail::get_field<std::size_t>(m, "p", "model", mc.p);
        mc.S = detail::get_field<std::size_t>(m, "S", "model", mc.S);
        mc.P = detail::get_field<std::size_t>(m, "P", "model", mc.P);
        mc.n_heads = detail::get_field<std::size_t>(m, "n_heads", "model", mc.n_heads);
        mc.n_layers = detail::get_field<std::size_t>(m, "n_layers", "model", mc.n_layers);
        mc.d_ff = detail::get_field<std::size_t>(m, "d_ff", "model", mc.d_ff);
        mc.dropout = detail::get_field<double>(m, "dropout", "model", mc.dropout);
        mc.activation = detail::get_field<std::string>(m, "activation", "model", mc.activation);
        mc.revin_affine = detail::get_field<bool>(m, "revin_affine", "model", mc.revin_affine);
        mc.pre_norm = detail::get_field<bool>(m, "pre_norm", "model", mc.pre_norm);
        mc.revin_eps = detail::get_field<double>(m, "revin_eps", "model", mc.revin_eps);
        mc.ln_eps = detail::get_field<double>(m, "ln_eps", "model", mc.ln_eps);
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown_keys(t, "train",
                                    {"batch_size", "max_epochs", "learning_rate", "beta1",
                                     "beta2", "adam_eps", "early_stop_patience", "seed",
                                     "grad_clip"});
        TrainConfig& tc = cfg.train;
        tc.batch_size = detail::get_field<std::size_t>(t, "batch_size", "train", tc.batch_size);
        tc.max_epochs = detail::get_field<std::size_t>(t, "max_epochs", "train", tc.max_epochs);
        tc.learning_rate =
            detail::get_field<double>(t, "learning_rate", "train", tc.learning_rate);
        tc.beta1 = detail::get_field<double>(t, "beta1", "train", tc.beta1);
        tc.beta2 = detail::get_field<double>(t, "beta2", "train", tc.beta2);
        tc.adam_eps = detail::get_field<double>(t, "adam_eps", "train", tc.adam_eps);
        tc.early_stop_patience = detail::get_field<std::size_t>(t, "early_stop_patience",
                                                                "train", tc.early_stop_patience);
        tc.seed = detail::get_field<std::uint64_t>(t, "seed", "train", tc.seed);
        tc.grad_clip = detail::get_field<double>(t, "grad_clip", "train", tc.grad_clip);
    }

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown_keys(d, "data",
                                    {"path", "has_header", "datetime_col", "forward_fill",
                                     "window_stride", "standardize", "synth"});
        DataSpec& ds = cfg.data;
        ds.path = detail::get_field<std::string>(d, "path", "data", ds.path);
        ds.has_header = detail::get_field<bool>(d, "has_header", "data", ds.has_header);
        if (d.contains("datetime_col") && !d.at("datetime_col").is_null()) {
            try {
                ds.datetime_col = d.at("datetime_col").get<std::size_t>();
            } catch (const nlohmann::json::exception&) {
                throw ConfigError("config key 'data.datetime_col' has the wrong type");
            }
        }
        ds.forward_fill = detail::get_field<bool>(d, "forward_fill", "data", ds.forward_fill);
        ds.window_stride =
            detail::get_field<std::size_t>(d, "window_stride", "data", ds.window_stride);
        ds.standardize = detail::get_field<bool>(d, "standardize", "data", ds.standardize);
        if (d.contains("synth")) {
            const auto& s = d.at("synth");
            detail::reject_unknown_keys(
                s, "data.synth", {"kind", "M", "T", "seed", "sigma", "lag", "period", "rho"});
            ds.kind = detail::get_field<std::string>(s, "kind", "data.synth", ds.kind);
            ds.M = detail::get_field<std::size_t>(s, "M", "data.synth", ds.M);
            ds.T = detail::get_field<std::size_t>(s, "T", "data.synth", ds.T);
            ds.seed = detail::get_field<std::uint64_t>(s, "seed", "data.synth", ds.seed);
            ds.synth.sigma = detail::get_field<double>(s, "sigma", "data.synth", ds.synth.sigma);
            ds.synth.lag = detail::get_field<std::size_t>(s, "lag", "data.synth", ds.synth.lag);
            ds.synth.period =
                detail::get_field<double>(s, "period", "data.synth", ds.synth.period);
            ds.synth.rho = detail::get_field<double>(s, "rho", "data.synth", ds.synth.rho);
        }
    }

    if (j.contains("split")) {
        const auto& s = j.at("split");
        detail::reject_unknown_keys(s, "split", {"train", "val", "test"});
        cfg.split.train_frac = detail::get_field<double>(s, "train", "split", cfg.split.train_frac);
        cfg.split.val_frac = detail::get_field<double>(s, "val", "split", cfg.split.val_frac);
        cfg.split.test_frac = detail::get_field<double>(s, "test", "split", cfg.split.test_frac);
    }

    cfg.out_dir = detail::get_field<std::string>(j, "out_dir", "", cfg.out_dir);
    return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    const ModelConfig& mc = cfg.model;
    j["model"] = {{"M", mc.M},
                  {"L", mc.L},
                  {"h", mc.h},
                  {"m", mc.m},
                  {"p", mc.p},
                  {"S", mc.S},
                  {"P", mc.P},
                  {"n_heads", mc.n_heads},
                  {"n_layers", mc.n_layers},
                  {"d_ff", mc.d_ff},
                  {"dropout", mc.dropout},
                  {"activation", mc.activation},
                  {"revin_affine", mc.revin_affine},
                  {"pre_norm", mc.pre_norm},
                  {"revin_eps", mc.revin_eps},
                  {"ln_eps", mc.ln_eps}};
    const TrainConfig& tc = cfg.train;
    j["train"] = {{"batch_size", tc.batch_size},
                  {"max_epochs", tc.max_epochs},
                  {"learning_rate", tc.learning_rate},
                  {"beta1", tc.beta1},
                  {"beta2", tc.beta2},
                  {"adam_eps", tc.adam_eps},
                  {"early_stop_patience", tc.early_stop_patience},
                  {"seed", tc.seed},
                  {"grad_clip", tc.grad_clip}};
    const DataSpec& ds = cfg.data;
    j["data"] = {{"path", ds.path},
                 {"has_header", ds.has_header},
                 {"forward_fill", ds.forward_fill},
                 {"window_stride", ds.window_stride},
                 {"standardize", ds.standardize},
                 {"synth",
                  {{"kind", ds.kind},
                   {"M", ds.M},
                   {"T", ds.T},
                   {"seed", ds.seed},
                   {"sigma", ds.synth.sigma},
                   {"lag", ds.synth.lag},
                   {"period", ds.synth.period},
                   {"rho", ds.synth.rho}}}};
    if (ds.datetime_col) j["data"]["datetime_col"] = *ds.datetime_col;
    j["split"] = {{"train", cfg.split.train_frac},
                  {"val", cfg.split.val_frac},
                  {"test", cfg.split.test_frac}};
    j["out_dir"] = cfg.out_dir;
    return j;
}

// Applies one "dotted.path=value" override onto the raw JSON document. The
// value is parsed as JSON when possible (numbers, booleans), else kept as a
// string, so both --set model.m=3 and --set model.activation=relu work.
inline void apply_override(nlohmann::json& root, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like key.path=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
        if (value.is_object() || value.is_array()) value = raw;  // only scalars via --set
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }

    nlohmann::json* node = &root;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw ConfigError("override path has an empty segment: '" + path + "'");
        if (dot == std::string::npos) {
            (*node)[key] = std::move(value);
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = nlohmann::json::object();
        node = &(*node)[key];
        start = dot + 1;
    }
}

// Loads the config file (or "{}" when path is empty), applies overrides in
// order, and validates the result. Cross-field constraints that need the
// dataset (M inference, segment lengths) run later in resolve_dataset.
inline RunConfig load_run_config(const std::string& path,
                                 const std::vector<std::string>& overrides) {
    nlohmann::json doc = nlohmann::json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw IOError("cannot read config " + path);
        try {
            f >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config " + path + " is not valid JSON: " + e.what());
        }
    }
    for (const auto& ov : overrides) apply_override(doc, ov);
    RunConfig cfg = run_config_from_json(doc);

    validate(cfg.train);
    if (cfg.model.M > 0) validate(cfg.model);  // M=0 defers to dataset inference
    else {
        // Validate everything that does not need M.
        token_count(cfg.model.L, cfg.model.p, cfg.model.S);
        if (cfg.model.n_heads < 1 || cfg.model.P % cfg.model.n_heads != 0)
            throw ConfigError("P must be divisible by n_heads");
        if (!(cfg.model.dropout >= 0.0 && cfg.model.dropout < 1.0))
            throw ConfigError("dropout must lie in [0,1)");
    }
    if (cfg.data.window_stride < 1) throw ConfigError("data.window_stride must be >= 1");
    return cfg;
}

// Materializes the dataset named by the config and finishes the cross-field
// checks that need it: channel-count inference, m < M, and segment lengths
// long enough for at least one (L, h) window each.
inline Dataset resolve_dataset(RunConfig& cfg) {
    Dataset ds;
    if (!cfg.data.path.empty())
        ds = load_csv(cfg.data.path, cfg.data.has_header, cfg.data.datetime_col,
                      cfg.data.forward_fill);
    else
        ds = synth_generate(cfg.data.kind, cfg.data.M, cfg.data.T, cfg.data.seed,
                            cfg.data.synth);

    if (cfg.model.M == 0) cfg.model.M = ds.M;
    if (cfg.model.M != ds.M)
        throw ConfigError("model.M=" + std::to_string(cfg.model.M) + " but dataset has M=" +
                          std::to_string(ds.M));
    validate(cfg.model);

    const auto need = cfg.model.L + cfg.model.h;
    const auto t_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(ds.T) * cfg.split.train_frac + 1e-9));
    const auto t_trainval = static_cast<std::size_t>(std::floor(
        static_cast<double>(ds.T) * (cfg.split.train_frac + cfg.split.val_frac) + 1e-9));
    if (t_train < need || t_trainval - t_train < need || ds.T - t_trainval < need)
        throw ConfigError("every split segment needs at least L+h=" + std::to_string(need) +
                          " rows (T=" + std::to_string(ds.T) + ")");
    return ds;
}

}  // namespace mcf
