#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mcf/dataset.hpp"
#include "mcf/errors.hpp"
#include "mcf/model.hpp"
#include "mcf/ops.hpp"
#include "mcf/rng.hpp"
#include "mcf/tensor.hpp"

namespace mcf {

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t early_stop_patience = 5;
    std::uint64_t seed = 0;
    double grad_clip = 0.0;  // global max-norm; 0 disables clipping
};

inline void validate(const TrainConfig& c) {
    if (c.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (c.max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
    if (!(c.learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
    if (!(c.beta1 >= 0 && c.beta1 < 1) || !(c.beta2 >= 0 && c.beta2 < 1))
        throw ConfigError("adam betas must lie in [0,1)");
    if (!(c.adam_eps > 0)) throw ConfigError("train.adam_eps must be > 0");
    if (c.early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be >= 1");
    if (c.grad_clip < 0) throw ConfigError("train.grad_clip must be >= 0");
}

struct ForecastReport {
    double mse = 0.0;
    double mae = 0.0;
    std::vector<double> train_loss;  // one entry per completed epoch
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;  // 1-based; 0 means no epoch completed
    std::string config_hash;
    std::uint64_t seed = 0;
    double wall_time_s = 0.0;
};

// Mean squared / absolute error over every element; plain accumulation,
// outside the autograd graph.
inline double mse(const Tensor& y, const Tensor& yhat) {
    if (y.shape() != yhat.shape())
        throw ShapeError("mse: shape mismatch " + shape_str(y.shape()) + " vs " +
                         shape_str(yhat.shape()));
    double s = 0.0, c = 0.0;
    for (std::size_t k = 0; k < y.numel(); ++k) {
        const double d = y.data()[k] - yhat.data()[k];
        detail::kahan_add(s, c, d * d);
    }
    return s / static_cast<double>(y.numel());
}

inline double mae(const Tensor& y, const Tensor& yhat) {
    if (y.shape() != yhat.shape())
        throw ShapeError("mae: shape mismatch " + shape_str(y.shape()) + " vs " +
                         shape_str(yhat.shape()));
    double s = 0.0, c = 0.0;
    for (std::size_t k = 0; k < y.numel(); ++k)
        detail::kahan_add(s, c, std::fabs(y.data()[k] - yhat.data()[k]));
    return s / static_cast<double>(y.numel());
}

// First/second moment estimates per parameter tensor.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t t = 0;
};

inline AdamState init_adam(const std::vector<Tensor*>& params) {
    AdamState st;
    for (const Tensor* p : params) {
        st.m.emplace_back(p->numel(), 0.0);
        st.v.emplace_back(p->numel(), 0.0);
    }
    return st;
}

// Global gradient norm across all parameter tensors.
inline double grad_global_norm(const std::vector<Tensor*>& params) {
    double sq = 0.0;
    for (Tensor* p : params)
        for (double g : p->grad()) sq += g * g;
    return std::sqrt(sq);
}

// One Adam update with bias correction. Gradients are read from each
// tensor's grad buffer; optional global-norm clipping rescales them first.
inline void adam_step(const std::vector<Tensor*>& params, AdamState& st,
                      const TrainConfig& cfg) {
    if (st.m.size() != params.size()) throw ConfigError("adam state does not match params");
    double scale = 1.0;
    if (cfg.grad_clip > 0.0) {
        const double norm = grad_global_norm(params);
        if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
    }
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (p.numel() != st.m[i].size()) throw ShapeError("adam moment shape mismatch");
        auto& grad = p.grad();
        for (std::size_t k = 0; k < p.numel(); ++k) {
            const double g = grad[k] * scale;
            st.m[i][k] = cfg.beta1 * st.m[i][k] + (1.0 - cfg.beta1) * g;
            st.v[i][k] = cfg.beta2 * st.v[i][k] + (1.0 - cfg.beta2) * g * g;
            const double mhat = st.m[i][k] / bc1;
            const double vhat = st.v[i][k] / bc2;
            p.data()[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    }
}

namespace detail {

// Stack windows [first, last) into ([B,L,M], [B,h,M]) input/target tensors.
inline std::pair<Tensor, Tensor> make_batch(const std::vector<WindowSample>& windows,
                                            const std::vector<std::size_t>& order,
                                            std::size_t first, std::size_t last,
                                            std::size_t L, std::size_t h, std::size_t M) {
    const std::size_t B = last - first;
    std::vector<double> xs, ys;
    xs.reserve(B * L * M);
    ys.reserve(B * h * M);
    for (std::size_t k = first; k < last; ++k) {
        const WindowSample& w = windows[order[k]];
        if (w.x.size() != L * M || w.y.size() != h * M)
            throw ShapeError("window does not match model dimensions");
        xs.insert(xs.end(), w.x.begin(), w.x.end());
        ys.insert(ys.end(), w.y.begin(), w.y.end());
    }
    return {Tensor::from_data(Shape{B, L, M}, std::move(xs)),
            Tensor::from_data(Shape{B, h, M}, std::move(ys))};
}

inline std::vector<std::size_t> identity_order(std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    return order;
}

// FNV-1a over a canonical rendering of the configs; identifies a run setup
// in reports without hauling the whole config around.
inline std::string config_fingerprint(const ModelConfig& mc, const TrainConfig& tc) {
    std::string s = std::to_string(mc.M) + "," + std::to_string(mc.L) + "," +
                    std::to_string(mc.h) + "," + std::to_string(mc.m) + "," +
                    std::to_string(mc.p) + "," + std::to_string(mc.S) + "," +
                    std::to_string(mc.P) + "," + std::to_string(mc.n_heads) + "," +
                    std::to_string(mc.n_layers) + "," + std::to_string(mc.d_ff) + "," +
                    std::to_string(mc.dropout) + "," + mc.activation + "," +
                    std::to_string(mc.revin_affine) + "," + std::to_string(mc.pre_norm) + ";" +
                    std::to_string(tc.batch_size) + "," + std::to_string(tc.max_epochs) + "," +
                    std::to_string(tc.learning_rate) + "," + std::to_string(tc.beta1) + "," +
                    std::to_string(tc.beta2) + "," + std::to_string(tc.adam_eps) + "," +
                    std::to_string(tc.early_stop_patience) + "," + std::to_string(tc.seed) +
                    "," + std::to_string(tc.grad_clip);
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char ch : s) {
        hash ^= ch;
        hash *= 1099511628211ull;
    }
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = hex[hash & 0xf];
        hash >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

}  // namespace detail

// Average squared error of the model over a window set, dropout disabled.
// Deterministic batch order; used for validation and test metrics.
inline void eval_metrics(Model& model, const std::vector<WindowSample>& windows,
                         std::size_t batch_size, double* out_mse, double* out_mae) {
    const ModelConfig& mc = model.config();
    const auto order = detail::identity_order(windows.size());
    double se = 0.0, se_c = 0.0, ae = 0.0, ae_c = 0.0;
    std::size_t count = 0;
    NoGradScope ng;
    for (std::size_t first = 0; first < windows.size(); first += batch_size) {
        const std::size_t last = std::min(first + batch_size, windows.size());
        auto [x, y] = detail::make_batch(windows, order, first, last, mc.L, mc.h, mc.M);
        Tensor pred = model.forecast(x, false, nullptr);
        for (std::size_t k = 0; k < y.numel(); ++k) {
            const double d = y.data()[k] - pred.data()[k];
            detail::kahan_add(se, se_c, d * d);
            detail::kahan_add(ae, ae_c, std::fabs(d));
        }
        count += y.numel();
    }
    if (count == 0) throw InsufficientData("evaluate: no windows");
    if (out_mse) *out_mse = se / static_cast<double>(count);
    if (out_mae) *out_mae = ae / static_cast<double>(count);
}

inline ForecastReport evaluate(Model& model, const std::vector<WindowSample>& windows,
                               std::size_t batch_size = 64) {
    ForecastReport rep;
    const auto t0 = std::chrono::steady_clock::now();
    eval_metrics(model, windows, batch_size, &rep.mse, &rep.mae);
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

// Minimize MSE over the training windows with Adam. Per epoch: reshuffle with
// an epoch-derived seed, run batches under a fresh tape, step, then score the
// validation set; early-stop when validation MSE has not improved for
// `early_stop_patience` consecutive epochs. The model is left holding the
// best-validation-epoch parameters.
inline ForecastReport fit(Model& model, const std::vector<WindowSample>& train_windows,
                          const std::vector<WindowSample>& val_windows,
                          const TrainConfig& tcfg) {
    validate(tcfg);
    if (train_windows.empty()) throw InsufficientData("fit: no training windows");
    if (val_windows.empty()) throw InsufficientData("fit: no validation windows");
    const ModelConfig& mc = model.config();
    const auto t_start = std::chrono::steady_clock::now();

    ForecastReport rep;
    rep.seed = tcfg.seed;
    rep.config_hash = detail::config_fingerprint(mc, tcfg);

    auto params = model.param_tensors();
    for (Tensor* p : params) p->set_requires_grad(true);
    AdamState adam = init_adam(params);

    std::vector<std::vector<double>> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_best = 0;

    std::vector<std::size_t> order = detail::identity_order(train_windows.size());
    for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        // Epoch-derived shuffle seed keeps runs reproducible end to end.
        std::mt19937_64 shuffle_eng(mix_seed(tcfg.seed, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_eng);
        NormalSampler dropout_rng(mix_seed(tcfg.seed, (1ull << 32) + epoch));

        double loss_sum = 0.0, loss_c = 0.0;
        std::size_t seen = 0, batch_index = 0;
        for (std::size_t first = 0; first < train_windows.size();
             first += tcfg.batch_size, ++batch_index) {
            const std::size_t last = std::min(first + tcfg.batch_size, train_windows.size());
            auto [x, y] = detail::make_batch(train_windows, order, first, last, mc.L, mc.h,
                                             mc.M);
            try {
                TapeScope scope;
                Tensor diff = sub(model.forecast(x, true, &dropout_rng), y);
                Tensor loss = mean_all(mul(diff, diff));
                const double lv = loss.value();
                if (!std::isfinite(lv))
                    throw NumericError("non-finite training loss");
                for (Tensor* p : params) p->zero_grad();
                backward(scope.tape(), loss);
                adam_step(params, adam, tcfg);
                detail::kahan_add(loss_sum, loss_c,
                                  lv * static_cast<double>(last - first));
                seen += last - first;
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + ")");
            }
        }
        rep.train_loss.push_back(loss_sum / static_cast<double>(seen));

        double val_mse = 0.0;
        eval_metrics(model, val_windows, tcfg.batch_size, &val_mse, nullptr);
        rep.val_loss.push_back(val_mse);

        if (val_mse < best_val) {
            best_val = val_mse;
            rep.best_epoch = epoch;
            epochs_since_best = 0;
            best_params.clear();
            for (Tensor* p : params) best_params.push_back(p->data());
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= tcfg.early_stop_patience) break;
        }
    }

    if (!best_params.empty())
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->data() = best_params[i];

    rep.mse = best_val;
    double best_mae = 0.0;
    eval_metrics(model, val_windows, tcfg.batch_size, nullptr, &best_mae);
    rep.mae = best_mae;
    rep.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

}  // namespace mcf
