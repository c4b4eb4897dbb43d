#pragma once

#include <array>
#include <cstdint>

namespace gridlearn {

/// Philox4x32-10 block function (Salmon et al., SC'11). Portable and stateless: the same
/// (counter, key) gives the same four words on every platform.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed for the `index`-th trial or stream under `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Sequential generator over one Philox stream. The key is the 64-bit seed, counter words 2-3
/// hold the stream id and words 0-1 the block index, so streams never overlap.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t seed, std::uint64_t stream);

  std::uint32_t next_u32();
  /// Uniform on the open interval (0, 1) with 53-bit resolution.
  double uniform();
  /// Standard normal via Box-Muller (both outputs used).
  double normal();

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gridlearn
