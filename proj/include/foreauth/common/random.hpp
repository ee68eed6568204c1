#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace foreauth {

/// FNV-1a 64-bit string hash. Used to fold identifiers (user ids) into seed
/// paths; chosen over std::hash for a stable value across implementations.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// SplitMix64 mixing step. Used as the seed-derivation primitive everywhere
/// so that any run component can be reproduced in isolation.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Derives a child seed from a base seed and an integer path.
///
/// The scheme is a SplitMix64 fold: seed' = splitmix64(seed ^ mix(component)).
/// Components identify (cell, user, purpose, ...) so per-cell and per-user
/// streams are independent of execution order.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(base);
    for (std::uint64_t c : path) {
        s = splitmix64(s ^ splitmix64(c));
    }
    return s;
}

/// Stream purposes for derive_seed paths. Fixed numeric tags, never reordered.
enum class SeedPurpose : std::uint64_t {
    split = 1,
    model_init = 2,
    shuffle = 3,
    impostor_train = 4,
    impostor_test = 5,
    validation = 6,
    synth_params = 7,
    synth_noise = 8,
    dropout = 9,
};

inline std::uint64_t purpose_tag(SeedPurpose p) { return static_cast<std::uint64_t>(p); }

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

} // namespace foreauth
