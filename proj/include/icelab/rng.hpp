#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace icelab {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Hashes a master seed and a list of stream coordinates (n, environment,
/// path index, purpose tag, ...) into an independent 64-bit stream key.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t state = seed;
    std::uint64_t key = splitmix64(state);
    for (std::uint64_t id : ids) {
        state = key ^ (id + 0x632BE59BD9B4E019ULL);
        key = splitmix64(state);
    }
    return key;
}

/// Purpose tags so that obstacle draws, path draws and auxiliary draws never
/// share a stream even when the numeric indices coincide.
enum class StreamTag : std::uint64_t {
    obstacles = 0x6f627374,
    paths = 0x70617468,
    limit = 0x6c696d74,
    energy = 0x656e7267,
    capacity = 0x63617061,
    points = 0x706f696e,
    misc = 0x6d697363,
};

inline constexpr std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

/// xoshiro256++ with a cached polar-method normal. Satisfies
/// UniformRandomBitGenerator so it also works with <random> distributions.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t key = 0) { reseed(key); }

    void reseed(std::uint64_t key) {
        std::uint64_t sm = key;
        for (auto& w : s_) w = splitmix64(sm);
        has_spare_ = false;
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_open0() { return 1.0 - uniform(); }

    double exponential() { return -std::log(uniform_open0()); }

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

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace icelab
