#pragma once

#include <cstdint>
#include <cmath>

#include "plms/common.hpp"

namespace plms {

// Counter-based random streams. Every stream is addressed by
// (master seed, run, agent, kind, iteration); the address is hashed into a
// 64-bit state and the stream is generated from there. No generator state
// survives between iterations, so results do not depend on scheduling or
// worker count.

enum class StreamKind : uint64_t { task = 1, regressor = 2, obs_noise = 3, share_noise = 4, scenario = 5 };

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t stream_seed(uint64_t master, uint64_t run, uint64_t agent,
                            StreamKind kind, uint64_t iter) {
    uint64_t h = mix64(master);
    h = mix64(h ^ run);
    h = mix64(h ^ agent);
    h = mix64(h ^ static_cast<uint64_t>(kind));
    h = mix64(h ^ iter);
    return h;
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}
    Rng(uint64_t master, uint64_t run, uint64_t agent, StreamKind kind, uint64_t iter)
        : state_(stream_seed(master, run, agent, kind, iter)) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform on (0, 1].
    double next_unit() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    double next_gauss() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u = next_unit();
        double v = next_unit();
        double r = std::sqrt(-2.0 * std::log(u));
        spare_ = r * std::sin(2.0 * M_PI * v);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * v);
    }

    Vec gauss_vec(Eigen::Index n) {
        Vec out(n);
        for (Eigen::Index i = 0; i < n; ++i) out(i) = next_gauss();
        return out;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Uniform over [-hi,-lo] U [lo,hi]; the constraint-coefficient law.
    double signed_band(double lo, double hi) {
        double mag = uniform(lo, hi);
        return (next_u64() & 1) ? mag : -mag;
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace plms
