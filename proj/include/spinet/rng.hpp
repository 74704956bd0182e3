#ifndef SPINET_RNG_HPP
#define SPINET_RNG_HPP

#include <cstdint>
#include <random>

namespace spinet {

// All randomness flows through mt19937_64 plus the explicit mappings below.
// std::uniform_real_distribution and friends are implementation-defined and
// would break the byte-identical-log determinism contract.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent seed for (base seed, stream tag, counter).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t counter = 0) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= stream * 0xD1342543DE82EF95ULL;
  std::uint64_t b = splitmix64(s);
  s ^= counter * 0xAF251AF3B0F025B5ULL;
  std::uint64_t c = splitmix64(s);
  return a ^ (b << 1) ^ c;
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t counter = 0) {
  return std::mt19937_64(derive_seed(seed, stream, counter));
}

// Uniform on [0, 1).
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform on [lo, hi).
inline double uniform_in(std::mt19937_64& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(eng);
}

// Uniform integer in [0, n).
inline std::uint64_t uniform_index(std::mt19937_64& eng, std::uint64_t n) {
  // Multiply-shift rejection-free map; bias is negligible for n << 2^64 and,
  // more importantly, the result is fully deterministic.
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(eng()) * n) >> 64);
}

}  // namespace spinet

#endif  // SPINET_RNG_HPP
