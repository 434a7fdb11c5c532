#pragma once

#include <cstdint>
#include <random>

namespace lyapresp {

/// splitmix64 finaliser; used to derive independent per-task seeds from a base
/// seed so that work plans are reproducible bit-for-bit.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits of a mt19937_64 draw.
/// (std::uniform_real_distribution is implementation-defined; this mapping is not.)
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

}  // namespace lyapresp
