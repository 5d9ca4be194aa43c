#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace lnared::rng {

/// Mixes a base seed with a stream index (splitmix64 finalizer over both words).
/// Used to give every sample path its own decorrelated generator.
[[nodiscard]] inline std::uint64_t hash_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Standard normal generator with a platform-independent bit stream.
///
/// mt19937_64 output is fixed by the standard and the Box-Muller transform is
/// spelled out here, so identical seeds give identical samples everywhere.
class NormalRng {
public:
    explicit NormalRng(std::uint64_t seed) : gen_(seed) {}

    [[nodiscard]] double uniform() {
        // (0, 1]: keeps log() finite in the transform below.
        return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    }

    [[nodiscard]] double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace lnared::rng
