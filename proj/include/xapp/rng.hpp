#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace xapp::rng {

// splitmix64 step; mutates the state and returns the next output.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Independent substream seed for (master, stream). Used wherever a module
// fans one seed out to per-UE / per-sample generators.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    return splitmix64(s);
}

// mt19937_64 engine with fixed-algorithm distributions on top, so that a
// given seed produces the same draws on every platform.
class Generator {
public:
    explicit Generator(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform over {0, ..., n-1}; n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) { return engine_() % n; }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) {
            u1 = uniform01();
        }
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Fisher-Yates; std::shuffle is implementation-defined, this is not.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace xapp::rng
