#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace bxi {

// Seed for one Monte Carlo trial: a 64-bit base value plus the trial index.
// (value, stream_id) determines every sample bit-reproducibly, independent
// of which worker thread runs the trial.
struct RandomSeed {
    std::uint64_t value = 0;
    std::uint64_t stream_id = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

// xoshiro256++ seeded through splitmix64 from (value, stream_id).
// Normal variates use the Marsaglia polar method with a cached spare;
// this is the innermost loop of every sampler, so it avoids
// std::normal_distribution (whose state layout is unspecified and which
// is noticeably slower with libstdc++).
class RngStream {
public:
    explicit RngStream(RandomSeed seed) {
        std::uint64_t s = seed.value ^ (seed.stream_id * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL);
        for (auto& w : state_) w = detail::splitmix64(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0,1]; safe as a log() argument.
    double uniform_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    // Both coordinates of one planar increment (saves the spare shuffle).
    void normal_pair(double& a, double& b) {
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        a = u * m;
        b = v * m;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace bxi
