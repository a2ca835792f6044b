#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace clipcp {

/// Philox4x32-10 block function: 128-bit counter, 64-bit key.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// 64-bit avalanche mix (SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a over a tag string; used to turn purpose names into stream ids.
constexpr std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Derive a child seed from (seed, purpose tag, index). Distinct inputs give
/// independent-looking seeds; the mapping is a pure function.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  return mix64(mix64(seed ^ tag_hash(tag)) + mix64(index + 0x632BE59BD9B4E019ULL));
}

/// Counter-based random stream.
///
/// A stream is addressed by (seed, purpose tag, index). The seed is the
/// Philox key, the hashed (tag, index) pair fills the upper counter words and
/// the draw number fills the lower ones, so the n-th draw of any stream can be
/// computed without touching any other stream. Generators that assign one
/// stream per row produce identical data regardless of how rows are sharded.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);
  CounterRng(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal via inverse CDF.
  double normal();

  std::uint64_t draws() const { return draw_; }

 private:
  std::array<std::uint32_t, 2> key_{};
  std::uint64_t stream_ = 0;
  std::uint64_t draw_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
};

}  // namespace clipcp
