#include "clipcp/rng.hpp"

#include "clipcp/normal.hpp"

namespace clipcp {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53U;
constexpr std::uint32_t kMul1 = 0xCD9E8D57U;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9U;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85U;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

CounterRng::CounterRng(std::uint64_t seed, std::string_view tag, std::uint64_t index)
    : CounterRng(seed, mix64(tag_hash(tag)) ^ mix64(index ^ 0xA0761D6478BD642FULL)) {}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream_id)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream_id) {}

CounterRng::result_type CounterRng::operator()() {
  if (used_ >= 4) {
    const std::uint64_t block = draw_ / 2;
    block_ = philox4x32({static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                        key_);
    used_ = 0;
  }
  const std::uint64_t out = (static_cast<std::uint64_t>(block_[used_]) << 32) | block_[used_ + 1];
  used_ += 2;
  ++draw_;
  return out;
}

double CounterRng::uniform() {
  // 53 random bits, shifted by half an ulp so 0 and 1 are never produced.
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal() { return normal_quantile(uniform()); }

}  // namespace clipcp
