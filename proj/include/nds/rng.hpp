#pragma once

#include <cstdint>
#include <random>

namespace nds {

/// splitmix64, used to spread a (seed, stream) pair into a well-mixed
/// 64-bit engine seed so per-trajectory / per-fit streams are independent.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x517cc1b727220a95ULL));
}

/// Seedable RNG wrapper. One instance per independent unit of work
/// (trajectory, fit, episode); never shared across threads.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t stream) : engine_(derive_stream(seed, stream)) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        // one-shot distribution object: avoids the cached second variate so
        // draw sequences stay reproducible regardless of call interleaving
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    std::uint64_t next_u64() { return engine_(); }
    /// integer in [0, n)
    std::uint64_t index(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
    }
    bool coin() { return index(2) == 1; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace nds
