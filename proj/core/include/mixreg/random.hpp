#pragma once

#include <cstdint>
#include <random>

namespace mixreg {

/// SplitMix64 finalizer; used to derive independent engine seeds from keys.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Key of a counter-based random stream: the run seed plus a call counter
/// (the optimization step for mask draws).
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;
};

/// Engine for the sub-stream (key, lane). Distinct lanes (e.g. layer ids)
/// give independent draws for the same key.
inline std::mt19937_64 make_engine(StreamKey key, std::uint64_t lane = 0) {
  std::uint64_t h = mix64(key.seed);
  h = mix64(h ^ key.counter);
  h = mix64(h ^ (lane + 0x632be59bd9b4e019ULL));
  return std::mt19937_64(h);
}

/// Uniform double in [0, 1) from the top 53 bits; portable across standard
/// libraries, unlike std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

}  // namespace mixreg
