#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "icgan/tensor.hpp"

namespace icgan {

// splitmix64 step, used to derive independent substream seeds from a base
// seed plus a stream index without correlating the streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline double uniform_real(std::mt19937_64& rng) {
  // 53-bit mantissa uniform in [0,1)
  return (rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n), n >= 1. Rejection keeps it unbiased and the
// draw count deterministic given the engine state.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = rng();
  while (v >= bound) v = rng();
  return static_cast<std::size_t>(v % n);
}

inline double normal(std::mt19937_64& rng) {
  // Box-Muller, one value per call; cheap enough and avoids libstdc++
  // distribution state.
  double u1 = uniform_real(rng);
  double u2 = uniform_real(rng);
  while (u1 <= 0.0) u1 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline Tensor normal_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape,
                            double stddev = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = stddev * normal(rng);
  return t;
}

}  // namespace icgan
