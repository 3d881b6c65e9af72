#pragma once

#include <cmath>
#include <cstdint>

namespace changen {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Deterministic, platform-independent RNG. std:: distributions are
// implementation-defined, so draws are hand-rolled to keep every seeded
// pipeline bit-reproducible across compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // warm up so that small seeds decorrelate
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range
    int uniform_int(int lo, int hi) {
        if (hi <= lo) return lo;
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, pair cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    // Stable per-item substream derivation for parallel workers.
    static uint64_t derive(uint64_t root, uint64_t index) {
        uint64_t s = root ^ (0xD1B54A32D192ED03ULL + index * 0x9E3779B97F4A7C15ULL);
        splitmix64(s);
        return splitmix64(s);
    }

private:
    uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace changen
