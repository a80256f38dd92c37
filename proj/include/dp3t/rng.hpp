#pragma once

#include <cstdint>
#include <random>

#include "dp3t/bytes.hpp"

namespace dp3t {

// splitmix64-seeded xoshiro256** . Used everywhere randomness is injected so
// that runs are reproducible and byte-stable across platforms (libstdc++
// distributions make no such guarantee).
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& si : s_) {
            x += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            si = z ^ (z >> 31);
        }
    }

    static Rng from_entropy() {
        std::random_device rd;
        return Rng((static_cast<std::uint64_t>(rd()) << 32) | rd());
    }

    std::uint64_t next() {
        auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
        std::uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % n;
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    void fill(std::uint8_t* out, std::size_t len) {
        std::size_t i = 0;
        while (i < len) {
            std::uint64_t v = next();
            for (int k = 0; k < 8 && i < len; ++k, ++i) {
                out[i] = static_cast<std::uint8_t>(v);
                v >>= 8;
            }
        }
    }

    Bytes bytes(std::size_t len) {
        Bytes out(len);
        fill(out.data(), len);
        return out;
    }

private:
    std::uint64_t s_[4];
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rng.below(i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace dp3t
