#pragma once

#include <cstdint>

namespace psno {

// splitmix64: used to expand user seeds into generator state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// PCG XSL-RR 128/64: 64-bit outputs, 128-bit LCG state, selectable stream.
// Streams for dataset records are derived from (seed, split, index) so each
// record draws from an independent sequence regardless of generation order.
class Pcg64 {
 public:
  using u128 = unsigned __int128;

  Pcg64() : Pcg64(0xcafef00dd15ea5e5ull, 0) {}
  Pcg64(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed;
    const std::uint64_t hi = splitmix64(s), lo = splitmix64(s);
    std::uint64_t t = stream ^ 0xda3e39cb94b95bdbull;
    const std::uint64_t inc_hi = splitmix64(t), inc_lo = splitmix64(t);
    inc_ = ((u128(inc_hi) << 64) | inc_lo) | 1;
    state_ = 0;
    next_u64();
    state_ += (u128(hi) << 64) | lo;
    next_u64();
  }

  std::uint64_t next_u64() {
    state_ = state_ * mult_ + inc_;
    const std::uint64_t xored = static_cast<std::uint64_t>(state_ >> 64) ^
                                static_cast<std::uint64_t>(state_);
    const unsigned rot = static_cast<unsigned>(state_ >> 122);
    return (xored >> rot) | (xored << ((64u - rot) & 63u));
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + next_double() * (hi - lo); }

 private:
  static constexpr u128 mult_ = (u128(2549297995355413924ull) << 64) | 4865540595714422341ull;
  u128 state_ = 0;
  u128 inc_ = 1;
};

// Deterministic stream id for a (split, record) pair.
inline std::uint64_t record_stream(std::uint32_t split_id, std::uint64_t record_index) {
  std::uint64_t s = (std::uint64_t(split_id) << 48) ^ record_index ^ 0x5851f42d4c957f2dull;
  return splitmix64(s);
}

// Deterministic stream id from a short label (parameter names, subsystems).
inline std::uint64_t label_stream(const char* label) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (const char* p = label; *p; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace psno
