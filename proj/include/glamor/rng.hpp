#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace glamor {

// splitmix64, used to expand a 64-bit seed into generator state.
inline uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// xoshiro256++ seeded through splitmix64. The algorithm is fixed so that a
// given seed produces the same stream on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t sm = seed;
        for (auto& s : state_)
            s = splitmix64(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; generates pairs, second draw is cached.
    double normal(double mu = 0.0, double sigma = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mu + sigma * spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0)
            u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mu + sigma * r * std::cos(theta);
    }

    // Unbiased integer in [0, n) by rejection.
    uint64_t below(uint64_t n) {
        if (n == 0)
            return 0;
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold)
                return r % n;
        }
    }

    bool bernoulli(double p) { return uniform01() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Derives an independent stream from (seed, tag, index). Used to give every
// random consumer (init, shuffle, dropout, crops) its own reproducible stream.
inline Rng derive_rng(uint64_t seed, std::string_view tag, uint64_t index = 0) {
    uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
    for (char c : tag)
        h = (h ^ static_cast<uint8_t>(c)) * 0x100000001b3ull;
    uint64_t mix = seed;
    mix = splitmix64(mix) ^ h;
    mix = splitmix64(mix) ^ index;
    (void)splitmix64(mix);
    return Rng(mix);
}

} // namespace glamor
