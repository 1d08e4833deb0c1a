#pragma once

// ============================================================================
// Deterministic randomness.
//
// A single root seed drives every stochastic component of a run.  Independent
// streams (parameter init, batch shuffling, dropout, synthetic noise...) are
// derived from the root seed with split_seed(root, tag): the tag string is
// folded into the seed with FNV-1a and a final splitmix64 avalanche, so
// streams are decorrelated, stable across platforms, and documented by name.
//
// Engines are std::mt19937_64 everywhere.  Normal/uniform variates are drawn
// through the std <random> distributions; determinism within one toolchain is
// all the reproducibility contract asks for (bit-identical across same-binary
// runs).
// ============================================================================

#include <cstdint>
#include <random>
#include <string_view>

namespace canet {

namespace detail {

// splitmix64 finalizer: avalanches every input bit over the whole word.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// 64-bit FNV-1a hash; also used for config hashing in the manifest.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives the seed for the named stream from the root seed.
//
// Documented derivation rule (stable across the whole project):
//   split_seed(root, tag) = splitmix64( fnv1a64(tag, root ^ FNV_BASIS) )
//
// Canonical stream tags: "init" (parameter initialisation), "shuffle"
// (training batch order), "dropout" (dropout masks).  Harnesses may derive
// further streams, e.g. "noise/0.3".
inline std::uint64_t split_seed(std::uint64_t root, std::string_view tag) {
  return detail::mix64(fnv1a64(tag, root ^ 0xcbf29ce484222325ULL));
}

// Convenience: an engine already seeded for the given stream.
inline std::mt19937_64 make_stream(std::uint64_t root, std::string_view tag) {
  return std::mt19937_64(split_seed(root, tag));
}

}  // namespace canet
