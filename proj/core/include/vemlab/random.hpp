#pragma once

#include <cstdint>

namespace vemlab {

/// Splits one root seed into independent per-consumer seeds (splitmix64 of
/// the root mixed with a stream tag).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Stream tags used throughout the library.
namespace streams {
inline constexpr std::uint64_t kCriticInit = 1;
inline constexpr std::uint64_t kBatchSampling = 2;
inline constexpr std::uint64_t kDataset = 3;
inline constexpr std::uint64_t kOperatorNoise = 4;
inline constexpr std::uint64_t kValuePairs = 5;
inline constexpr std::uint64_t kResampling = 6;
inline constexpr std::uint64_t kMdp = 7;
}  // namespace streams

}  // namespace vemlab
