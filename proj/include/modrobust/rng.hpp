#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace modrobust {

// Portable deterministic random streams.
//
// Every stream is identified by a (seed, key) pair. The pair is folded into a
// single 64-bit state with splitmix64, which then fills the 256-bit state of a
// xoshiro256++ generator. Normals use the Marsaglia polar method and cache the
// second variate of each accepted pair. Any implementation following these
// steps reproduces the same sequences bit for bit.

/// Advances `state` by the golden-ratio increment and returns the mixed output.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Folds `key` into `seed`. Not commutative: derive(a, b) != derive(b, a).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) noexcept {
    std::uint64_t state = seed;
    std::uint64_t mixed = splitmix64(state) ^ key;
    return splitmix64(mixed);
}

template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key, Keys... rest) noexcept {
    return derive_seed(derive_seed(seed, key), static_cast<std::uint64_t>(rest)...);
}

/// 64-bit FNV-1a; maps string sample ids onto stream keys.
constexpr std::uint64_t id_key(std::string_view id) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : id) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

class Stream {
public:
    using result_type = std::uint64_t;

    Stream(std::uint64_t seed, std::uint64_t key) noexcept {
        std::uint64_t sm = derive_seed(seed, key);
        for (auto& word : s_) word = splitmix64(sm);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    /// xoshiro256++ step.
    result_type next() noexcept {
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

    result_type operator()() noexcept { return next(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, bound). `bound` must be positive.
    std::uint64_t below(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Standard normal via the polar method.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0;
        double v = 0.0;
        double s = 0.0;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double factor = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * factor;
        has_spare_ = true;
        return u * factor;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace modrobust
