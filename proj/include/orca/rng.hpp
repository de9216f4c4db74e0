#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace orca {

using Rng = std::mt19937_64;

// Named, seeded substreams. Every source of randomness (init, shuffle, mask,
// generator, Monte-Carlo) derives its own seed so that streams never overlap
// and adding draws to one stream never perturbs another.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t index);

inline Rng make_rng(std::uint64_t base, std::string_view stream) {
  return Rng(derive_seed(base, stream));
}

inline Rng make_rng(std::uint64_t base, std::string_view stream,
                    std::uint64_t index) {
  return Rng(derive_seed(base, stream, index));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

// 64-bit FNV-1a, used for dataset fingerprints in run manifests.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace orca
