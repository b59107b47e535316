#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace kgram {

// SplitMix64 finalizer. Full-avalanche mixing of a 64-bit word.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// FNV-1a, used to turn component names into stream tags.
inline uint64_t hash_tag(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Counter-based stream: draw i of stream (seed, tag) is mix64(base + i).
// Streams with distinct tags are independent; every draw is O(1) and the
// whole scheme is reproducible across platforms.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t tag = 0) : base_(mix64(seed ^ mix64(tag ^ 0x6a09e667f3bcc909ull))) {}

    Rng(uint64_t seed, std::string_view tag) : Rng(seed, hash_tag(tag)) {}

    // Derive a child stream, e.g. one per sequence index.
    Rng fork(uint64_t idx) const { return Rng(base_, mix64(idx ^ 0xbb67ae8584caa73bull), ChildTag{}); }

    uint64_t next_u64() { return mix64(base_ + ++counter_); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Lemire multiply-shift; bias is O(n / 2^64).
    uint64_t uniform_int(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    // Standard exponential via inverse CDF; strictly positive.
    double exponential() { return -std::log1p(-uniform()); }

    // Standard normal, Box-Muller with a cached spare.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u = 1.0 - uniform();  // (0, 1]
        double r = std::sqrt(-2.0 * std::log(u));
        double t = 6.283185307179586477 * uniform();
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

private:
    struct ChildTag {};
    Rng(uint64_t base, uint64_t mixed_tag, ChildTag) : base_(mix64(base ^ mixed_tag)) {}

    uint64_t base_;
    uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace kgram
