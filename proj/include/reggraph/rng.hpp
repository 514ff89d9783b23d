#pragma once

#include <cstdint>
#include <random>

namespace reggraph {

/// Independent RNG streams per model component. Every stream is a
/// mt19937_64 seeded from seed_seq{seed_lo, seed_hi, stream, replicate}, so
/// components and replicates never share a sequence.
enum class Stream : std::uint32_t {
  kLatents = 1,    // sigma0, beta0
  kDesign = 2,     // Phi
  kNoise = 3,      // eps
  kGraph = 4,      // adjacency
  kSurrogate = 5,  // Gaussian surrogate matrix
  kInit = 6,       // oracle AMP initialization
  kSplit = 7,      // holdout split for tuning
};

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint32_t sub = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(stream),
                    sub};
  return Rng(seq);
}

/// Seed of replicate r derived from a base seed (splitmix64 finalizer).
inline std::uint64_t replicate_seed(std::uint64_t base, std::uint64_t r) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (r + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace reggraph
