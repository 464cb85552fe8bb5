#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace jsb {

/// Philox4x32-10 block function (Salmon et al., SC'11), as in Random123.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Purpose tags keep the streams of independent sampling roles disjoint.
enum class Purpose : std::uint32_t {
  prompts = 1,
  rollouts = 2,
  train_prompts = 3,
  train_rollouts = 4,
  env_generation = 5,
  test = 0xFFFF,
};

/// Counter-based random stream.
///
/// A stream is identified by (seed, purpose, replication, lane). The 64-bit
/// seed is the Philox key; the 128-bit counter is
///   word0 = block index, word1 = lane, word2 = replication, word3 = purpose.
/// Each block yields four 32-bit words, consumed in order. Two streams with
/// different identities never share a counter value, so any number of them
/// can be drawn concurrently without coordination, and the output depends
/// only on the identity and the number of draws taken.
///
/// Conversions are fixed: next_u64() = (w[k] << 32) | w[k+1];
/// uniform() = (next_u64() >> 11) * 2^-53, a value in [0, 1).
class RngStream {
 public:
  RngStream(std::uint64_t seed, Purpose purpose, std::uint32_t replication = 0,
            std::uint32_t lane = 0) noexcept;

  /// Fresh stream with the same seed/purpose/replication and lane offset by `index`.
  RngStream substream(std::uint32_t index) const noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;

  /// Inverse-CDF draw from unnormalized-but-summing-to-one weights, scanning
  /// left to right. Zero-weight entries are never returned.
  std::size_t categorical(std::span<const double> probs) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t lane() const noexcept { return lane_; }
  std::uint32_t replication() const noexcept { return replication_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  Purpose purpose_;
  std::uint32_t replication_;
  std::uint32_t lane_;
  std::uint32_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  std::size_t used_ = 4;
};

}  // namespace jsb
