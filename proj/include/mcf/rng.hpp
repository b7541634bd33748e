#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mcf {

// splitmix64 step, used to derive independent seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Gaussian stream: MT19937-64 engine plus an explicit Box-Muller transform.
// The engine's bit stream is fixed by the standard and the transform is
// spelled out here, so a given seed reproduces the same doubles on every
// platform with IEEE-754 arithmetic (std::normal_distribution gives no such
// guarantee).
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed, double mean = 0.0, double stddev = 1.0)
        : eng_(seed), mean_(mean), stddev_(stddev) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return mean_ + stddev_ * spare_;
        }
        const double u1 = unit_open_closed();
        const double u2 = unit_open_closed();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return mean_ + stddev_ * radius * std::cos(angle);
    }

    // Uniform in (0, 1], so log() above never sees zero.
    double unit_open_closed() {
        return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
    }

    std::uint64_t next_u64() { return eng_(); }

private:
    std::mt19937_64 eng_;
    double mean_;
    double stddev_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mcf
