#pragma once

#include <array>
#include <cstdint>

namespace fence {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Counter-based random stream.
///
/// The 64-bit seed is the Philox key; the 128-bit counter is split into a
/// 64-bit stream id (high words) and a 64-bit block position (low words).
/// Two `Rng`s with the same (seed, stream) produce identical sequences on
/// every platform: uniforms use the top 53 bits of each 64-bit draw and
/// normals use Box-Muller, so no implementation-defined std distribution is
/// involved.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Independent child stream keyed by `tag`; does not advance this stream.
  Rng derive(std::uint64_t tag) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t position_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;  // 32-bit words consumed from block_
  double spare_normal_ = 0.0;
  bool has_spare_ = false;

  std::uint32_t next_u32();
};

/// SplitMix64 finalizer, used to derive stream ids.
std::uint64_t mix64(std::uint64_t x);

}  // namespace fence
