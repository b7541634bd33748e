#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "mcf/dataset.hpp"
#include "mcf/errors.hpp"
#include "mcf/rng.hpp"

namespace mcf {

// Knobs for the synthetic generators; unused fields are ignored per kind.
struct SynthParams {
    double sigma = 0.1;   // additive observation noise std
    std::size_t lag = 3;  // leader_follower: channel j lags the driver by lag*j
    double period = 24.0; // sinusoid period in steps
    double rho = 0.9;     // AR(1) coefficient
};

namespace detail {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// AR(1) with innovation std `innov`, plus a unit sinusoid.
inline std::vector<double> ar1_sin_series(std::size_t T, NormalSampler& eng, double rho,
                                          double innov, double period) {
    std::vector<double> s(T);
    double prev = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        prev = rho * prev + innov * eng.next();
        s[t] = prev + std::sin(kTwoPi * static_cast<double>(t) / period);
    }
    return s;
}

}  // namespace detail

// Deterministic multivariate benchmark series. Every channel draws from its
// own seed stream derived via mix_seed, so a channel's values do not depend
// on M.
//
//   leader_follower   channel 0 is an AR(1)+sinusoid driver; channel j
//                     repeats the driver lag*j steps later (clamped at the
//                     start) plus noise. sigma=0 makes followers lag-exact.
//   independent_walks damped AR(1) per channel, no cross-channel structure.
//                     (An undamped random walk would show large spurious
//                     correlations between independent channels.)
//   shared_season     one sinusoid per channel, same period, per-channel
//                     amplitude and phase, plus noise.
//   drifting_corr     channel 0 is an AR(1)+sinusoid base; channels j >= 1
//                     track +base for t < T/2 and -base afterwards, so their
//                     correlation with channel 0 flips sign mid-series.
inline Dataset synth_generate(const std::string& kind, std::size_t M, std::size_t T,
                              std::uint64_t seed, const SynthParams& params = {}) {
    if (T < 64) throw ConfigError("synth needs T >= 64, got " + std::to_string(T));
    const bool dependent = kind != "independent_walks";
    if (M < (dependent ? 2u : 1u))
        throw ConfigError("synth kind '" + kind + "' needs M >= " +
                          std::to_string(dependent ? 2 : 1));
    if (params.sigma < 0) throw ConfigError("synth sigma must be >= 0");
    if (params.period <= 0) throw ConfigError("synth period must be > 0");

    Dataset ds;
    ds.T = T;
    ds.M = M;
    ds.values.assign(T * M, 0.0);
    for (std::size_t c = 0; c < M; ++c) ds.channel_names.push_back("ch" + std::to_string(c));
    ds.freq = "1h";
    ds.source = "synth:" + kind + ":M=" + std::to_string(M) + ":T=" + std::to_string(T) +
                ":seed=" + std::to_string(seed);

    auto noise_for = [&](std::size_t c) { return NormalSampler(mix_seed(seed, 1 + c)); };

    if (kind == "leader_follower") {
        NormalSampler drv(mix_seed(seed, 0));
        const std::vector<double> driver =
            detail::ar1_sin_series(T, drv, 0.9, 0.3, params.period);
        for (std::size_t c = 0; c < M; ++c) {
            NormalSampler noise = noise_for(c);
            const std::size_t shift = params.lag * c;
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t src = t >= shift ? t - shift : 0;
                ds.at(t, c) = driver[src] + params.sigma * noise.next();
            }
        }
    } else if (kind == "independent_walks") {
        for (std::size_t c = 0; c < M; ++c) {
            NormalSampler noise = noise_for(c);
            double prev = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                prev = params.rho * prev + noise.next();
                ds.at(t, c) = prev;
            }
        }
    } else if (kind == "shared_season") {
        for (std::size_t c = 0; c < M; ++c) {
            NormalSampler part(mix_seed(seed, 10000 + c));
            const double amp = 0.5 + part.unit_open_closed();
            const double phase = detail::kTwoPi * part.unit_open_closed();
            NormalSampler noise = noise_for(c);
            for (std::size_t t = 0; t < T; ++t)
                ds.at(t, c) = amp * std::sin(detail::kTwoPi * static_cast<double>(t) /
                                                 params.period +
                                             phase) +
                              params.sigma * noise.next();
        }
    } else if (kind == "drifting_corr") {
        NormalSampler drv(mix_seed(seed, 0));
        const std::vector<double> base =
            detail::ar1_sin_series(T, drv, 0.95, 0.3, params.period);
        for (std::size_t c = 0; c < M; ++c) {
            NormalSampler noise = noise_for(c);
            for (std::size_t t = 0; t < T; ++t) {
                const double sign = (c == 0 || t < T / 2) ? 1.0 : -1.0;
                ds.at(t, c) = sign * base[t] + params.sigma * noise.next();
            }
        }
    } else {
        throw ConfigError("unknown synth kind '" + kind + "'");
    }
    return ds;
}

}  // namespace mcf
