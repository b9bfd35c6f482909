#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace snrs {

// PCG-XSH-RR 64/32 (O'Neill), multiplier 6364136223846793005.
class Pcg32 {
 public:
  using result_type = std::uint32_t;
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return UINT32_MAX; }

  // Reference pcg32_srandom_r seeding: increment = 2 * sequence + 1.
  constexpr Pcg32(std::uint64_t initstate, std::uint64_t initseq) noexcept
      : state_(0), inc_((initseq << 1u) | 1u) {
    (void)next();
    state_ += initstate;
    (void)next();
  }

  constexpr std::uint32_t next() noexcept {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }
  constexpr std::uint32_t operator()() noexcept { return next(); }

  /// next() / 2^32, in [0, 1).
  double uniform01() noexcept { return next() * 0x1p-32; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }
  /// Unbiased integer in [0, bound) by rejection.
  std::uint32_t below(std::uint32_t bound) noexcept;
  /// Box-Muller; consumes exactly two draws per call.
  double gaussian() noexcept;

  std::uint64_t state() const noexcept { return state_; }
  std::uint64_t increment() const noexcept { return inc_; }

  friend constexpr bool operator==(const Pcg32&, const Pcg32&) = default;

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

namespace purpose {
inline constexpr std::string_view kMask = "mask";
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kShuffle = "shuffle";
inline constexpr std::string_view kSynth = "synth";
}  // namespace purpose

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Stream for (global seed, purpose tag, index):
///   sequence = splitmix64(fnv1a64(tag) ^ splitmix64(index))
///   state    = splitmix64(seed ^ sequence)
/// Distinct (tag, index) pairs select distinct PCG increments.
Pcg32 derive_stream(std::uint64_t seed, std::string_view purpose_tag, std::uint64_t index);

/// Fisher-Yates permutation of [0, n) driven by `rng`.
std::vector<std::size_t> shuffled_indices(std::size_t n, Pcg32& rng);

}  // namespace snrs
