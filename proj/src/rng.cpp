#include "snrs/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace snrs {

std::uint32_t Pcg32::below(std::uint32_t bound) noexcept {
  if (bound <= 1) return 0;
  const std::uint32_t threshold = (0u - bound) % bound;
  for (;;) {
    const std::uint32_t r = next();
    if (r >= threshold) return r % bound;
  }
}

double Pcg32::gaussian() noexcept {
  const double u1 = (static_cast<double>(next()) + 1.0) * 0x1p-32;  // (0, 1]
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Pcg32 derive_stream(std::uint64_t seed, std::string_view purpose_tag, std::uint64_t index) {
  const std::uint64_t sequence = splitmix64(fnv1a64(purpose_tag) ^ splitmix64(index));
  return Pcg32(splitmix64(seed ^ sequence), sequence);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Pcg32& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(static_cast<std::uint32_t>(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace snrs
