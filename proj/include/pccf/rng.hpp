#pragma once

#include <cstdint>
#include <string_view>

namespace pccf {

// All randomness in the library flows through these routines so that every
// result is a pure function of explicit 64-bit seeds, identical on every
// platform.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Stable combiner for deriving sub-seeds, e.g. per-record corpus seeds.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    return splitmix64(seed ^ splitmix64(salt));
}

constexpr std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
    return mix_seed(seed, fnv1a64(tag));
}

// Sequential generator (splitmix64 stream).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // in [0, 1)
    double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // in [-1, 1)
    double next_sym() { return next_unit() * 2.0 - 1.0; }

    // unbiased integer in [0, n); rejection sampling on the top range
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

private:
    std::uint64_t state_;
};

// Counter-based value: random access into a virtual stream, used by the
// encoder stubs so huge projection matrices never need to be materialized.
inline double hashed_sym(std::uint64_t seed, std::uint64_t counter) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(counter + 0x632be59bd9b4e019ull));
    return double(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

} // namespace pccf
