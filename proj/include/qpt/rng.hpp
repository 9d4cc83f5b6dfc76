#pragma once

#include <cstdint>
#include <random>

namespace qpt {

/// splitmix64 finalizer; used to derive independent sub-seeds.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t a) { return mix_seed(master ^ mix_seed(a)); }

inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b) {
    return mix_seed(derive_seed(master, a) ^ mix_seed(b + 0x632be59bd9b4e019ull));
}

inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(derive_seed(master, a, b) ^ mix_seed(c + 0x2545f4914f6cdd1dull));
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

/// One Poisson draw with the given mean. Distribution object is rebuilt per
/// call so the stream depends only on the generator state.
inline long long poisson_draw(Rng& rng, double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<long long>(mean)(rng);
}

}  // namespace qpt
