#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcf/errors.hpp"
#include "mcf/model.hpp"
#include "mcf/tensor.hpp"

namespace mcf {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"M", c.M},
                          {"L", c.L},
                          {"h", c.h},
                          {"m", c.m},
                          {"p", c.p},
                          {"S", c.S},
                          {"P", c.P},
                          {"n_heads", c.n_heads},
                          {"n_layers", c.n_layers},
                          {"d_ff", c.d_ff},
                          {"dropout", c.dropout},
                          {"activation", c.activation},
                          {"revin_affine", c.revin_affine},
                          {"pre_norm", c.pre_norm},
                          {"revin_eps", c.revin_eps},
                          {"ln_eps", c.ln_eps}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.M = j.at("M").get<std::size_t>();
        c.L = j.at("L").get<std::size_t>();
        c.h = j.at("h").get<std::size_t>();
        c.m = j.at("m").get<std::size_t>();
        c.p = j.at("p").get<std::size_t>();
        c.S = j.at("S").get<std::size_t>();
        c.P = j.at("P").get<std::size_t>();
        c.n_heads = j.at("n_heads").get<std::size_t>();
        c.n_layers = j.at("n_layers").get<std::size_t>();
        c.d_ff = j.at("d_ff").get<std::size_t>();
        c.dropout = j.at("dropout").get<double>();
        c.activation = j.at("activation").get<std::string>();
        c.revin_affine = j.at("revin_affine").get<bool>();
        c.pre_norm = j.at("pre_norm").get<bool>();
        c.revin_eps = j.at("revin_eps").get<double>();
        c.ln_eps = j.at("ln_eps").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
    return c;
}

// Doubles are stored little-endian; byte-swap on big-endian hosts so the
// file format is fixed.
inline void to_le_bytes(const std::vector<double>& values, std::vector<unsigned char>& out) {
    const std::size_t n = values.size() * sizeof(double);
    const std::size_t base = out.size();
    out.resize(base + n);
    std::memcpy(out.data() + base, values.data(), n);
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < values.size(); ++i)
            std::reverse(out.begin() + base + i * 8, out.begin() + base + (i + 1) * 8);
    }
}

inline std::vector<double> from_le_bytes(const unsigned char* bytes, std::size_t count) {
    std::vector<double> values(count);
    std::memcpy(values.data(), bytes, count * sizeof(double));
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& v : values) {
            auto* b = reinterpret_cast<unsigned char*>(&v);
            std::reverse(b, b + 8);
        }
    }
    return values;
}

}  // namespace detail

// Writes `path` (JSON manifest) plus `path` + ".bin" (a flat little-endian
// f64 blob). The manifest pins parameter order, shapes, and byte offsets.
inline void save_checkpoint(Model& model, const std::string& path) {
    nlohmann::json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["dtype"] = "f64le";
    manifest["config"] = detail::config_to_json(model.config());

    std::vector<unsigned char> blob;
    nlohmann::json plist = nlohmann::json::array();
    for (auto& [name, t] : model.named_params()) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        entry["offset"] = blob.size();
        detail::to_le_bytes(t.data(), blob);
        plist.push_back(std::move(entry));
    }
    manifest["params"] = std::move(plist);
    manifest["blob_bytes"] = blob.size();

    const std::string blob_path = path + ".bin";
    {
        std::ofstream f(blob_path, std::ios::binary | std::ios::trunc);
        if (!f) throw IOError("cannot write " + blob_path);
        f.write(reinterpret_cast<const char*>(blob.data()),
                static_cast<std::streamsize>(blob.size()));
        if (!f) throw IOError("short write to " + blob_path);
    }
    {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IOError("cannot write " + path);
        f << manifest.dump(2) << "\n";
        if (!f) throw IOError("short write to " + path);
    }
}

// Reads just the config block of a manifest, for constructing a model of the
// right shape before the full load.
inline ModelConfig peek_checkpoint_config(const std::string& path) {
    std::ifstream mf(path);
    if (!mf) throw IOError("cannot read " + path);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("corrupt checkpoint manifest: " + std::string(e.what()));
    }
    if (!manifest.contains("config")) throw FormatError("checkpoint manifest lacks config");
    return detail::config_from_json(manifest.at("config"));
}

// Loads a manifest + blob pair saved by save_checkpoint into a model whose
// parameter names and shapes must match exactly.
inline ModelConfig load_checkpoint(Model& model, const std::string& path) {
    std::ifstream mf(path);
    if (!mf) throw IOError("cannot read " + path);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("corrupt checkpoint manifest: " + std::string(e.what()));
    }

    if (!manifest.contains("format_version") ||
        manifest["format_version"].get<int>() != kCheckpointVersion)
        throw FormatError("unsupported checkpoint format version");
    if (!manifest.contains("dtype") || manifest["dtype"].get<std::string>() != "f64le")
        throw FormatError("unsupported checkpoint dtype");
    if (!manifest.contains("params") || !manifest["params"].is_array())
        throw FormatError("checkpoint manifest lacks a parameter list");

    const ModelConfig cfg = detail::config_from_json(manifest.at("config"));

    const std::string blob_path = path + ".bin";
    std::ifstream bf(blob_path, std::ios::binary);
    if (!bf) throw IOError("cannot read " + blob_path);
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)),
                                    std::istreambuf_iterator<char>());
    const std::size_t expect_bytes = manifest.value("blob_bytes", std::size_t{0});
    if (blob.size() != expect_bytes)
        throw FormatError("checkpoint blob is " + std::to_string(blob.size()) +
                          " bytes, manifest says " + std::to_string(expect_bytes));

    auto& params = model.named_params();
    const auto& plist = manifest["params"];
    if (plist.size() != params.size())
        throw ShapeError("checkpoint holds " + std::to_string(plist.size()) +
                         " parameters, model has " + std::to_string(params.size()));

    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = plist[i];
        std::string name;
        Shape shape;
        std::size_t offset = 0;
        try {
            name = entry.at("name").get<std::string>();
            shape = entry.at("shape").get<Shape>();
            offset = entry.at("offset").get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("corrupt parameter entry: " + std::string(e.what()));
        }
        auto& [pname, tensor] = params[i];
        if (name != pname)
            throw ShapeError("checkpoint parameter '" + name + "' where model expects '" +
                             pname + "'");
        if (shape != tensor.shape())
            throw ShapeError("checkpoint shape mismatch for '" + name + "': file " +
                             shape_str(shape) + ", model " + shape_str(tensor.shape()));
        const std::size_t bytes = tensor.numel() * sizeof(double);
        if (offset + bytes > blob.size())
            throw FormatError("parameter '" + name + "' overruns the checkpoint blob");
        tensor.data() = detail::from_le_bytes(blob.data() + offset, tensor.numel());
    }
    return cfg;
}

}  // namespace mcf
