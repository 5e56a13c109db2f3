#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mdicart {

// Seed scrambler used to derive independent substreams from a master seed.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Labeled purposes for substream derivation. Every consumer of randomness
// derives its own stream so that, e.g., changing the noise level never
// perturbs the input draw, and trees can be fitted in any order.
enum class StreamTag : std::uint64_t {
    inputs = 1,
    noise = 2,
    bootstrap = 3,
    tree = 4,
    node_dims = 5,
    mc = 6,
    rep = 7,
};

inline constexpr std::uint64_t derive_seed(std::uint64_t master, StreamTag tag,
                                           std::uint64_t index = 0) {
    std::uint64_t s = splitmix64(master ^ (static_cast<std::uint64_t>(tag) * 0x9e3779b97f4a7c15ull));
    return splitmix64(s ^ (index * 0xd1342543de82ef95ull));
}

// Deterministic random stream. mt19937_64 is bit-exact by the standard, and
// the uniform/normal mappings below are fixed here rather than delegated to
// <random> distributions (whose output is implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Integer in [0, n). Clamped so u*n rounding can never return n.
    std::size_t below(std::size_t n) {
        std::size_t i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    // normal_bm1: Box-Muller transform, version 1. Named and pinned so that
    // seeded runs reproduce exactly; do not change without bumping the name.
    double normal01() {
        double u1 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        const double u2 = uniform01();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace mdicart
