#pragma once

#include <cmath>
#include <cstdint>

namespace tscam {

// Deterministic pseudo-random generator (splitmix64 core). The standard
// library distributions are implementation-defined, so every sampling
// algorithm is spelled out here to keep generated artifacts byte-identical
// across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi); requires lo < hi.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo);
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    bool coin(double p = 0.5) { return uniform() < p; }

    // Standard normal via Box-Muller; second sample cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Normal truncated to mean +/- 2 stddev, by resampling.
    double trunc_normal(double mean, double stddev) {
        for (;;) {
            const double z = normal();
            if (z >= -2.0 && z <= 2.0) {
                return mean + stddev * z;
            }
        }
    }

    // Derives an independent stream; used for per-record generation so the
    // output does not depend on visit order.
    Rng fork(std::uint64_t stream) const {
        Rng child(state_ ^ (0x9e3779b97f4a7c15ULL * (stream + 0x632be59bd9b4e019ULL)));
        child.next_u64();
        return child;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace tscam
