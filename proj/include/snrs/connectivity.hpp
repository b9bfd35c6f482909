#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "snrs/config.hpp"
#include "snrs/rng.hpp"
#include "snrs/tensor.hpp"

namespace snrs {

/// One realization of the random connectivity graph for a conv layer: a
/// bit per weight of the [out, in, kh, kw] kernel tensor. Immutable once
/// sampled.
class ConnectivityMask {
 public:
  ConnectivityMask() = default;
  ConnectivityMask(Shape shape, std::vector<std::uint8_t> bits, double connectivity_p,
                   std::uint64_t seed, std::size_t layer);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return bits_.size(); }
  bool active(std::size_t i) const noexcept { return bits_[i] != 0; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
  std::size_t popcount() const noexcept { return popcount_; }

  double connectivity_p() const noexcept { return p_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t layer() const noexcept { return layer_; }

  /// Active weights feeding output channel `o`.
  std::size_t active_fan_in(std::size_t o) const;

  /// 0.0/1.0 tensor of the mask's shape.
  Tensor to_tensor() const;

  /// Row-major bits, 8 per byte, least-significant bit first; unused high
  /// bits of the last byte are zero.
  std::vector<std::uint8_t> pack() const;
  static std::size_t packed_size(std::size_t bit_count) { return (bit_count + 7) / 8; }
  static ConnectivityMask unpack(Shape shape, std::span<const std::uint8_t> bytes,
                                 double connectivity_p, std::uint64_t seed, std::size_t layer);

  friend bool operator==(const ConnectivityMask& a, const ConnectivityMask& b) {
    return a.shape_ == b.shape_ && a.bits_ == b.bits_;
  }

 private:
  Shape shape_;
  std::vector<std::uint8_t> bits_;
  std::size_t popcount_ = 0;
  double p_ = 1.0;
  std::uint64_t seed_ = 0;
  std::size_t layer_ = 0;
};

/// Independent Bernoulli(p) bit per weight, drawn in row-major order:
/// bit = 1 iff next()/2^32 < p.
ConnectivityMask sample_mask(const Shape& shape, double p, Pcg32& stream,
                             std::uint64_t seed = 0, std::size_t layer = 0);

/// sample_mask on stream (seed, "mask", layer); `layer` is 0-based.
ConnectivityMask sample_layer_mask(const Shape& shape, double p, std::uint64_t seed,
                                   std::size_t layer);

double mask_density(const ConnectivityMask& mask);

/// The masks a sequencer built from `config` would carry.
std::vector<ConnectivityMask> sample_masks(const SequencerConfig& config);

struct ParameterCount {
  std::size_t dense = 0;     // conv weights only; biases and head excluded
  double expected = 0.0;     // p * dense
  std::size_t realized = 0;  // popcount over all masks
};

ParameterCount expected_parameter_count(const SequencerConfig& config);
ParameterCount parameter_count(const SequencerConfig& config,
                               std::span<const ConnectivityMask> masks);

struct MacCount {
  std::uint64_t dense = 0;
  std::uint64_t active = 0;
};

/// Conv multiply-accumulates for one input of shape [C, H, W].
MacCount mac_count(const SequencerConfig& config, const Shape& input_shape);
MacCount mac_count(const SequencerConfig& config, const Shape& input_shape,
                   std::span<const ConnectivityMask> masks);

}  // namespace snrs
