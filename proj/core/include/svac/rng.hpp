#pragma once

#include <cstdint>

namespace svac {

// SplitMix64 stream. Hand-rolled so that draws are identical across platforms
// and across serial/parallel execution; streams for sub-tasks are derived by
// hashing the parent seed with the task indices.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform draw in [0, n). Rejection-free multiply-shift; deterministic.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Child stream for (seed, a, b, c) tuples, e.g. (run, prompt, head).
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
        Rng mix(seed);
        mix.state_ ^= mix.next() ^ (a * 0x9E3779B97F4A7C15ULL);
        mix.state_ ^= mix.next() ^ (b * 0xC2B2AE3D27D4EB4FULL);
        mix.state_ ^= mix.next() ^ (c * 0x165667B19E3779F9ULL);
        return mix;
    }

  private:
    std::uint64_t state_;
};

} // namespace svac
