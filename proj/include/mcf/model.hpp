#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mcf/errors.hpp"
#include "mcf/ops.hpp"
#include "mcf/rng.hpp"
#include "mcf/tensor.hpp"

namespace mcf {

// N = floor((L-p)/S) + 2: the +2 counts the patch starting at 0 and the one
// extra patch over the S-step replication padding at the end.
inline std::size_t token_count(std::size_t L, std::size_t p, std::size_t S) {
    if (p < 1 || p > L) throw ConfigError("patch length must satisfy 1 <= p <= L");
    if (S < 1 || S > p) throw ConfigError("patch stride must satisfy 1 <= S <= p");
    return (L - p) / S + 2;
}

struct ModelConfig {
    std::size_t M = 0;  // channel count; 0 = infer from data
    std::size_t L = 96;
    std::size_t h = 96;
    std::size_t m = 0;  // additional channels mixed into each instance; 0 = pure CI
    std::size_t p = 16;
    std::size_t S = 8;
    std::size_t P = 128;  // model width after projection
    std::size_t n_heads = 4;
    std::size_t n_layers = 3;
    std::size_t d_ff = 256;
    double dropout = 0.0;
    std::string activation = "gelu";  // gelu | relu
    bool revin_affine = true;
    bool pre_norm = false;
    double revin_eps = 1e-5;
    double ln_eps = 1e-5;

    std::size_t tokens() const { return token_count(L, p, S); }
    std::size_t d_k() const { return P / n_heads; }
};

inline void validate(const ModelConfig& c) {
    if (c.M < 1) throw ConfigError("model.M must be >= 1");
    if (c.m > c.M - 1)
        throw ConfigError("mix count m must satisfy 0 <= m <= M-1, got m=" +
                          std::to_string(c.m) + " M=" + std::to_string(c.M));
    if (c.L < 1 || c.h < 1) throw ConfigError("L and h must be >= 1");
    token_count(c.L, c.p, c.S);  // validates p, S
    if (c.n_heads < 1 || c.P % c.n_heads != 0)
        throw ConfigError("P must be divisible by n_heads, got P=" + std::to_string(c.P) +
                          " heads=" + std::to_string(c.n_heads));
    if (c.d_ff < 1) throw ConfigError("d_ff must be >= 1");
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
    if (c.activation != "gelu" && c.activation != "relu")
        throw ConfigError("activation must be gelu or relu, got '" + c.activation + "'");
    if (c.revin_eps <= 0 || c.ln_eps <= 0) throw ConfigError("eps values must be > 0");
}

// Channel indices mixed into target channel i: a walk i, i+v, i+2v, ... mod M
// with interval v = floor(M/m). Wraparound duplicates are replaced by the
// lowest-index channel not already present; *wrapped reports whether that
// replacement happened.
inline std::vector<std::size_t> mixed_channel_indices(std::size_t M, std::size_t m, std::size_t i,
                                                      bool* wrapped = nullptr) {
    if (wrapped) *wrapped = false;
    if (M < 1 || i >= M) throw ConfigError("target channel out of range");
    if (m == 0) return {i};
    if (m >= M) throw ConfigError("mix count m must be < M");
    const std::size_t interval = M / m;
    std::vector<std::size_t> out;
    std::vector<bool> used(M, false);
    out.reserve(m + 1);
    for (std::size_t k = 0; k <= m; ++k) {
        std::size_t idx = (i + k * interval) % M;
        if (used[idx]) {
            if (wrapped) *wrapped = true;
            idx = 0;
            while (used[idx]) ++idx;
        }
        used[idx] = true;
        out.push_back(idx);
    }
    return out;
}

// Per-instance normalization statistics (Mean/Var over one channel's window)
// plus the affine pair applied after normalization.
struct RevinStats {
    double mean = 0.0;
    double var = 0.0;
    double eps = 1e-5;
    double gamma = 1.0;
    double beta = 0.0;
};

// y_t = gamma * (x_t - mean) / sqrt(var + eps) + beta, population variance.
inline std::vector<double> revin_normalize(const std::vector<double>& x, RevinStats& stats,
                                           double eps = 1e-5, double gamma = 1.0,
                                           double beta = 0.0) {
    if (x.empty()) throw ShapeError("revin_normalize: empty instance");
    const double n = static_cast<double>(x.size());
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= n;
    stats = {mu, var, eps, gamma, beta};
    const double inv = 1.0 / std::sqrt(var + eps);
    std::vector<double> out(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) out[t] = gamma * (x[t] - mu) * inv + beta;
    return out;
}

// Exact inverse of revin_normalize under the same stats.
inline std::vector<double> revin_denormalize(const std::vector<double>& y,
                                             const RevinStats& stats) {
    const double s = std::sqrt(stats.var + stats.eps);
    std::vector<double> out(y.size());
    for (std::size_t t = 0; t < y.size(); ++t)
        out[t] = (y[t] - stats.beta) / stats.gamma * s + stats.mean;
    return out;
}

// Single-window reference for the mixing step: X is L x M (normalized
// upstream), returns L x (m+1) with column 0 the target channel. The batched
// forward uses a fused gather that must agree with this.
inline Tensor mix_channels(const Tensor& X, std::size_t i, std::size_t m) {
    if (X.ndim() != 2) throw ShapeError("mix_channels expects L x M");
    const std::size_t L = X.dim(0), M = X.dim(1);
    const auto idx = mixed_channel_indices(M, m, i);
    auto table = std::make_shared<std::vector<std::size_t>>();
    table->reserve(L * idx.size());
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c : idx) table->push_back(t * M + c);
    return take(X, std::move(table), {L, idx.size()});
}

// Single-instance reference for patch + projection: U is L x (m+1), padded by
// repeating the final time row S times; patch n covers padded rows
// [n*S, n*S+p), flattened time-major, projected by W_proj and offset by
// W_pos. Returns N x P (one P-wide token per row).
inline Tensor patchify_project(const Tensor& U, std::size_t p, std::size_t S,
                               const Tensor& W_proj, const Tensor& b_proj, const Tensor& W_pos) {
    if (U.ndim() != 2) throw ShapeError("patchify_project expects L x C");
    const std::size_t L = U.dim(0), C = U.dim(1);
    const std::size_t N = token_count(L, p, S);
    if (W_proj.ndim() != 2 || W_proj.dim(0) != p * C)
        throw ShapeError("W_proj rows must equal p*(m+1)");
    auto table = std::make_shared<std::vector<std::size_t>>();
    table->reserve(N * p * C);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t tau = 0; tau < p; ++tau) {
            const std::size_t row = std::min(n * S + tau, L - 1);
            for (std::size_t c = 0; c < C; ++c) table->push_back(row * C + c);
        }
    Tensor patches = take(U, std::move(table), {N, p * C});
    return add(add(matmul(patches, W_proj), b_proj), W_pos);
}

namespace detail {

inline Tensor init_weight(Shape shape, std::uint64_t seed, double stddev) {
    return Tensor::seeded_normal(std::move(shape), seed, 0.0, stddev);
}

}  // namespace detail

// Abstract forecaster: maps a B x L x M batch to B x h x M. Parameters are
// exposed by name for the optimizer and the checkpoint writer.
class Model {
public:
    virtual ~Model() = default;
    virtual Tensor forecast(const Tensor& batch, bool training = false,
                            NormalSampler* dropout_rng = nullptr) = 0;
    virtual std::vector<std::pair<std::string, Tensor>>& named_params() = 0;
    virtual const ModelConfig& config() const = 0;

    std::vector<Tensor*> param_tensors() {
        std::vector<Tensor*> out;
        for (auto& [name, t] : named_params()) out.push_back(&t);
        return out;
    }

    Tensor& param(const std::string& name) {
        for (auto& [n, t] : named_params())
            if (n == name) return t;
        throw ConfigError("no parameter named '" + name + "'");
    }
};

// The mixed-channel patch transformer. Forward pipeline:
//   per-instance normalize -> flatten channels into B*M single-channel
//   instances -> gather m companion channels -> patchify + project ->
//   encoder layers -> linear head -> denormalize -> unflatten.
class Mcformer : public Model {
public:
    Mcformer(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        if (cfg_.M < 1) throw ConfigError("Mcformer needs a concrete M");
        validate(cfg_);
        const std::size_t N = cfg_.tokens();
        const std::size_t in_w = cfg_.p * (cfg_.m + 1);
        std::uint64_t k = 0;
        auto next = [&] { return mix_seed(seed, k++); };
        auto addp = [&](const std::string& name, Tensor t) {
            t.set_requires_grad(true);
            params_.emplace_back(name, std::move(t));
        };
        if (cfg_.revin_affine) {
            addp("revin.gamma", Tensor::full(Shape{cfg_.M}, 1.0));
            addp("revin.beta", Tensor::zeros(Shape{cfg_.M}));
        }
        addp("proj.weight", detail::init_weight(Shape{in_w, cfg_.P}, next(),
                                                1.0 / std::sqrt(static_cast<double>(in_w))));
        addp("proj.bias", Tensor::zeros(Shape{cfg_.P}));
        // one P-wide row per token position
        addp("pos", detail::init_weight(Shape{N, cfg_.P}, next(), 0.02));
        const double wstd = 1.0 / std::sqrt(static_cast<double>(cfg_.P));
        for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
            const std::string pre = "layer" + std::to_string(l) + ".";
            addp(pre + "attn.wq", detail::init_weight(Shape{cfg_.P, cfg_.P}, next(), wstd));
            addp(pre + "attn.wk", detail::init_weight(Shape{cfg_.P, cfg_.P}, next(), wstd));
            addp(pre + "attn.wv", detail::init_weight(Shape{cfg_.P, cfg_.P}, next(), wstd));
            addp(pre + "attn.wo", detail::init_weight(Shape{cfg_.P, cfg_.P}, next(), wstd));
            addp(pre + "ln1.gamma", Tensor::full(Shape{cfg_.P}, 1.0));
            addp(pre + "ln1.beta", Tensor::zeros(Shape{cfg_.P}));
            addp(pre + "ffn.w1", detail::init_weight(Shape{cfg_.P, cfg_.d_ff}, next(), wstd));
            addp(pre + "ffn.b1", Tensor::zeros(Shape{cfg_.d_ff}));
            addp(pre + "ffn.w2", detail::init_weight(Shape{cfg_.d_ff, cfg_.P}, next(),
                                                     1.0 / std::sqrt(static_cast<double>(cfg_.d_ff))));
            addp(pre + "ffn.b2", Tensor::zeros(Shape{cfg_.P}));
            addp(pre + "ln2.gamma", Tensor::full(Shape{cfg_.P}, 1.0));
            addp(pre + "ln2.beta", Tensor::zeros(Shape{cfg_.P}));
        }
        addp("head.weight", detail::init_weight(Shape{cfg_.P * N, cfg_.h}, next(),
                                                1.0 / std::sqrt(static_cast<double>(cfg_.P * N))));
        addp("head.bias", Tensor::zeros(Shape{cfg_.h}));
    }

    std::vector<std::pair<std::string, Tensor>>& named_params() override { return params_; }
    const ModelConfig& config() const override { return cfg_; }

    Tensor forecast(const Tensor& batch, bool training = false,
                    NormalSampler* dropout_rng = nullptr) override {
        const std::size_t B = batch.ndim() == 3 ? batch.dim(0) : 0;
        Tensor x = tokens_forward(batch, cfg_.n_layers, training, dropout_rng);
        const std::size_t M = cfg_.M, R = B * M, N = cfg_.tokens();
        const Tensor& mu = last_mu_;
        const Tensor& sigma = last_sigma_;

        Tensor flat = x.reshape(Shape{R, N * cfg_.P});
        Tensor y = add(matmul(flat, param("head.weight")), param("head.bias"));  // [R,h]
        check_finite(y, "prediction head");

        // Undo the affine, then the normalization, using gathered per-channel
        // affine parameters and per-instance stats.
        Tensor sigma_r = sigma.reshape(Shape{R, 1});
        Tensor mu_r = mu.reshape(Shape{R, 1});
        if (cfg_.revin_affine) {
            auto chan = channel_table(B);
            Tensor gamma_r = take(param("revin.gamma"), chan, {R, 1});
            Tensor beta_r = take(param("revin.beta"), chan, {R, 1});
            y = divide(sub(y, beta_r), gamma_r);
        }
        y = add(mul(y, sigma_r), mu_r);
        check_finite(y, "revin denormalize");

        return take(y, unflatten_table(B), {B, cfg_.h, M});
    }

    // Runs `layers` encoder layers over existing [R, N, P] tokens. With zero
    // layers this is the identity.
    Tensor encoder_forward(const Tensor& tokens, std::size_t layers, bool training = false,
                           NormalSampler* rng = nullptr) {
        if (tokens.ndim() != 3 || tokens.dim(2) != cfg_.P)
            throw ShapeError("encoder expects R x N x P tokens, got " +
                             shape_str(tokens.shape()));
        if (layers > cfg_.n_layers) throw ConfigError("layer index beyond n_layers");
        const std::size_t R = tokens.dim(0), N = tokens.dim(1);
        Tensor x = tokens;
        for (std::size_t l = 0; l < layers; ++l) {
            const std::string pre = "layer" + std::to_string(l) + ".";
            if (cfg_.pre_norm) {
                Tensor a = attention(layer_norm(x, 2, param(pre + "ln1.gamma"),
                                                param(pre + "ln1.beta"), cfg_.ln_eps),
                                     pre, R, N, training, rng);
                x = add(x, a);
                Tensor f = ffn(layer_norm(x, 2, param(pre + "ln2.gamma"),
                                          param(pre + "ln2.beta"), cfg_.ln_eps),
                               pre, training, rng);
                x = add(x, f);
            } else {
                Tensor a = attention(x, pre, R, N, training, rng);
                x = layer_norm(add(x, a), 2, param(pre + "ln1.gamma"), param(pre + "ln1.beta"),
                               cfg_.ln_eps);
                Tensor f = ffn(x, pre, training, rng);
                x = layer_norm(add(x, f), 2, param(pre + "ln2.gamma"), param(pre + "ln2.beta"),
                               cfg_.ln_eps);
            }
            check_finite(x, ("encoder layer " + std::to_string(l)).c_str());
        }
        return x;
    }

    // Normalize, gather, project, and run `layers` encoder layers; the
    // [R, N, P] token view of a batch.
    Tensor encode_tokens(const Tensor& batch, std::size_t layers) {
        return tokens_forward(batch, layers, false, nullptr);
    }

    // Attention scores for one instance/layer on the current parameters; used
    // to inspect softmax rows. Returns [heads, N, N].
    Tensor attention_weights(const Tensor& batch, std::size_t layer, std::size_t instance) {
        NoGradScope ng;
        Tensor cur = tokens_forward(batch, layer, false, nullptr);
        const std::size_t N = cfg_.tokens();
        const std::size_t H = cfg_.n_heads, dk = cfg_.d_k();
        const std::string pre = "layer" + std::to_string(layer) + ".";
        Tensor x = cfg_.pre_norm ? layer_norm(cur, 2, param(pre + "ln1.gamma"),
                                              param(pre + "ln1.beta"), cfg_.ln_eps)
                                 : cur;
        Tensor q = split_heads(matmul(x, param(pre + "attn.wq")), x.dim(0), N);
        Tensor kk = split_heads(matmul(x, param(pre + "attn.wk")), x.dim(0), N);
        Tensor scores = scale(matmul_nt(q, kk), 1.0 / std::sqrt(static_cast<double>(dk)));
        Tensor attn = softmax(scores, 2);  // [R*H, N, N]
        auto table = std::make_shared<std::vector<std::size_t>>();
        table->reserve(H * N * N);
        for (std::size_t hh = 0; hh < H; ++hh)
            for (std::size_t a = 0; a < N; ++a)
                for (std::size_t b = 0; b < N; ++b)
                    table->push_back(((instance * H + hh) * N + a) * N + b);
        return take(attn, std::move(table), {H, N, N});
    }

private:
    // Shared prefix: normalize, fused mix+patch gather, projection, then
    // `layers` encoder layers. Stores the per-instance stats for the
    // denormalization step.
    Tensor tokens_forward(const Tensor& batch, std::size_t layers, bool training,
                          NormalSampler* rng) {
        if (batch.ndim() != 3 || batch.dim(1) != cfg_.L || batch.dim(2) != cfg_.M)
            throw ShapeError("forecast expects B x L x M = B x " + std::to_string(cfg_.L) +
                             " x " + std::to_string(cfg_.M) + ", got " + shape_str(batch.shape()));
        check_finite(batch, "input batch");
        const std::size_t B = batch.dim(0);
        const std::size_t L = cfg_.L, M = cfg_.M, R = B * M;
        const std::size_t N = cfg_.tokens();

        // Instance stats live outside the tape: they are functions of the
        // grad-free input, so parameter gradients are exact without them.
        Tensor mu = Tensor::zeros(Shape{B, 1, M});
        Tensor sigma = Tensor::zeros(Shape{B, 1, M});
        {
            NoGradScope ng;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < M; ++c) {
                    double s = 0.0;
                    for (std::size_t t = 0; t < L; ++t) s += batch.at({b, t, c});
                    const double mean = s / static_cast<double>(L);
                    double var = 0.0;
                    for (std::size_t t = 0; t < L; ++t) {
                        const double d = batch.at({b, t, c}) - mean;
                        var += d * d;
                    }
                    var /= static_cast<double>(L);
                    mu.set({b, 0, c}, mean);
                    sigma.set({b, 0, c}, std::sqrt(var + cfg_.revin_eps));
                }
        }
        last_mu_ = mu;
        last_sigma_ = sigma;

        Tensor norm = divide(sub(batch, mu), sigma);  // [B,L,M]
        if (cfg_.revin_affine) {
            norm = add(mul(norm, param("revin.gamma").reshape(Shape{1, 1, M})),
                       param("revin.beta").reshape(Shape{1, 1, M}));
        }
        check_finite(norm, "revin normalize");

        // Fused mix + patch gather straight out of [B,L,M]: instance r = b*M+i
        // reads channel idx_k(i) at padded time min(n*S+tau, L-1).
        Tensor patches = take(norm, mix_patch_table(B), {R, N, cfg_.p * (cfg_.m + 1)});
        Tensor x = add(add(matmul(patches, param("proj.weight")), param("proj.bias")),
                       param("pos"));
        check_finite(x, "patch projection");

        return encoder_forward(x, layers, training, rng);
    }

    Tensor split_heads(const Tensor& t, std::size_t R, std::size_t N) {
        const std::size_t H = cfg_.n_heads, dk = cfg_.d_k();
        Tensor r = t.reshape(Shape{R, N, H, dk});
        Tensor p = permute(r, {0, 2, 1, 3});  // [R,H,N,dk]
        return p.reshape(Shape{R * H, N, dk});
    }

    Tensor merge_heads(const Tensor& t, std::size_t R, std::size_t N) {
        const std::size_t H = cfg_.n_heads, dk = cfg_.d_k();
        Tensor r = t.reshape(Shape{R, H, N, dk});
        Tensor p = permute(r, {0, 2, 1, 3});  // [R,N,H,dk]
        return p.reshape(Shape{R, N, cfg_.P});
    }

    Tensor dropout_mask(const Shape& shape, NormalSampler* rng) {
        Tensor mask = Tensor::full(shape, 1.0);
        if (cfg_.dropout > 0.0 && rng) {
            const double keep = 1.0 - cfg_.dropout;
            for (double& v : mask.data())
                v = rng->unit_open_closed() <= keep ? 1.0 / keep : 0.0;
        }
        return mask;
    }

    Tensor maybe_dropout(const Tensor& x, bool training, NormalSampler* rng) {
        if (!training || cfg_.dropout <= 0.0 || !rng) return x;
        return mul(x, dropout_mask(x.shape(), rng));
    }

    Tensor attention(const Tensor& x, const std::string& pre, std::size_t R, std::size_t N,
                     bool training, NormalSampler* rng) {
        const std::size_t dk = cfg_.d_k();
        Tensor q = split_heads(matmul(x, param(pre + "attn.wq")), R, N);
        Tensor k = split_heads(matmul(x, param(pre + "attn.wk")), R, N);
        Tensor v = split_heads(matmul(x, param(pre + "attn.wv")), R, N);
        Tensor scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dk)));
        Tensor attn = maybe_dropout(softmax(scores, 2), training, rng);
        Tensor ctx = merge_heads(matmul(attn, v), R, N);
        return matmul(ctx, param(pre + "attn.wo"));
    }

    Tensor ffn(const Tensor& x, const std::string& pre, bool training, NormalSampler* rng) {
        Tensor h1 = add(matmul(x, param(pre + "ffn.w1")), param(pre + "ffn.b1"));
        Tensor a = cfg_.activation == "relu" ? relu(h1) : gelu(h1);
        a = maybe_dropout(a, training, rng);
        Tensor h2 = add(matmul(a, param(pre + "ffn.w2")), param(pre + "ffn.b2"));
        return maybe_dropout(h2, training, rng);
    }

    using TablePtr = std::shared_ptr<const std::vector<std::size_t>>;

    // (r=b*M+i, n, tau, c) -> source element (b, min(n*S+tau, L-1), idx_c(i))
    TablePtr mix_patch_table(std::size_t B) {
        auto it = mix_patch_cache_.find(B);
        if (it != mix_patch_cache_.end()) return it->second;
        const std::size_t L = cfg_.L, M = cfg_.M, N = cfg_.tokens();
        auto table = std::make_shared<std::vector<std::size_t>>();
        table->reserve(B * M * N * cfg_.p * (cfg_.m + 1));
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < M; ++i) {
                const auto idx = mixed_channel_indices(M, cfg_.m, i);
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t tau = 0; tau < cfg_.p; ++tau) {
                        const std::size_t t = std::min(n * cfg_.S + tau, L - 1);
                        for (std::size_t c : idx) table->push_back((b * L + t) * M + c);
                    }
            }
        mix_patch_cache_[B] = table;
        return table;
    }

    TablePtr channel_table(std::size_t B) {
        auto it = channel_cache_.find(B);
        if (it != channel_cache_.end()) return it->second;
        auto table = std::make_shared<std::vector<std::size_t>>();
        table->reserve(B * cfg_.M);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < cfg_.M; ++i) table->push_back(i);
        channel_cache_[B] = table;
        return table;
    }

    // (b, t, i) -> instance r = b*M+i, step t
    TablePtr unflatten_table(std::size_t B) {
        auto it = unflatten_cache_.find(B);
        if (it != unflatten_cache_.end()) return it->second;
        auto table = std::make_shared<std::vector<std::size_t>>();
        table->reserve(B * cfg_.h * cfg_.M);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < cfg_.h; ++t)
                for (std::size_t i = 0; i < cfg_.M; ++i)
                    table->push_back((b * cfg_.M + i) * cfg_.h + t);
        unflatten_cache_[B] = table;
        return table;
    }

    ModelConfig cfg_;
    std::vector<std::pair<std::string, Tensor>> params_;
    Tensor last_mu_ = Tensor::zeros(Shape{1});
    Tensor last_sigma_ = Tensor::zeros(Shape{1});
    std::map<std::size_t, TablePtr> mix_patch_cache_;
    std::map<std::size_t, TablePtr> channel_cache_;
    std::map<std::size_t, TablePtr> unflatten_cache_;
};

// Channel-shared linear map L -> h over per-instance-normalized input; the
// control model. No learnable normalization affine.
class LinearBaseline : public Model {
public:
    LinearBaseline(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        if (cfg_.M < 1) throw ConfigError("LinearBaseline needs a concrete M");
        if (cfg_.L < 1 || cfg_.h < 1) throw ConfigError("L and h must be >= 1");
        Tensor w = detail::init_weight(Shape{cfg_.L, cfg_.h}, mix_seed(seed, 0),
                                       1.0 / std::sqrt(static_cast<double>(cfg_.L)));
        w.set_requires_grad(true);
        params_.emplace_back("linear.weight", std::move(w));
        Tensor b = Tensor::zeros(Shape{cfg_.h});
        b.set_requires_grad(true);
        params_.emplace_back("linear.bias", std::move(b));
    }

    std::vector<std::pair<std::string, Tensor>>& named_params() override { return params_; }
    const ModelConfig& config() const override { return cfg_; }

    Tensor forecast(const Tensor& batch, bool training = false,
                    NormalSampler* dropout_rng = nullptr) override {
        (void)training;
        (void)dropout_rng;
        if (batch.ndim() != 3 || batch.dim(1) != cfg_.L || batch.dim(2) != cfg_.M)
            throw ShapeError("forecast expects B x L x M, got " + shape_str(batch.shape()));
        const std::size_t B = batch.dim(0), L = cfg_.L, M = cfg_.M, R = B * M;
        Tensor mu = Tensor::zeros(Shape{B, 1, M});
        Tensor sigma = Tensor::zeros(Shape{B, 1, M});
        {
            NoGradScope ng;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < M; ++c) {
                    double s = 0.0;
                    for (std::size_t t = 0; t < L; ++t) s += batch.at({b, t, c});
                    const double mean = s / static_cast<double>(L);
                    double var = 0.0;
                    for (std::size_t t = 0; t < L; ++t) {
                        const double d = batch.at({b, t, c}) - mean;
                        var += d * d;
                    }
                    var /= static_cast<double>(L);
                    mu.set({b, 0, c}, mean);
                    sigma.set({b, 0, c}, std::sqrt(var + cfg_.revin_eps));
                }
        }
        Tensor norm = divide(sub(batch, mu), sigma);          // [B,L,M]
        Tensor inst = instance_major(norm, B);                 // [R,L]
        Tensor y = add(matmul(inst, params_[0].second), params_[1].second);  // [R,h]
        y = add(mul(y, sigma.reshape(Shape{R, 1})), mu.reshape(Shape{R, 1}));
        return take(y, unflatten_table(B), {B, cfg_.h, M});
    }

private:
    Tensor instance_major(const Tensor& norm, std::size_t B) {
        auto table = std::make_shared<std::vector<std::size_t>>();
        const std::size_t L = cfg_.L, M = cfg_.M;
        table->reserve(B * M * L);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t t = 0; t < L; ++t) table->push_back((b * L + t) * M + i);
        return take(norm, std::move(table), {B * M, L});
    }

    std::shared_ptr<const std::vector<std::size_t>> unflatten_table(std::size_t B) {
        auto table = std::make_shared<std::vector<std::size_t>>();
        table->reserve(B * cfg_.h * cfg_.M);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < cfg_.h; ++t)
                for (std::size_t i = 0; i < cfg_.M; ++i)
                    table->push_back((b * cfg_.M + i) * cfg_.h + t);
        return table;
    }

    ModelConfig cfg_;
    std::vector<std::pair<std::string, Tensor>> params_;
};

}  // namespace mcf
