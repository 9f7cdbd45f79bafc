#pragma once

#include <cstdint>
#include <random>

namespace sumix {

using Rng = std::mt19937_64;

// splitmix64 finalizer; good enough to turn (seed, tag...) tuples into
// decorrelated engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

// Independent stream keyed by (seed, a, b, c). Training derives all
// per-(epoch, batch) randomness through this so that runs are resumable
// from any step without replaying the stream.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ (0x1000000001ULL + a));
    s = splitmix64(s ^ (0x2000000002ULL + b));
    s = splitmix64(s ^ (0x3000000003ULL + c));
    return Rng(s);
}

}  // namespace sumix
