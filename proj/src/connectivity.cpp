#include "snrs/connectivity.hpp"

#include <algorithm>
#include <string>

#include "snrs/error.hpp"

namespace snrs {

ConnectivityMask::ConnectivityMask(Shape shape, std::vector<std::uint8_t> bits,
                                   double connectivity_p, std::uint64_t seed, std::size_t layer)
    : shape_(std::move(shape)), bits_(std::move(bits)), p_(connectivity_p), seed_(seed), layer_(layer) {
  if (shape_.size() != 4) throw Error(ErrorKind::kShapeMismatch, "mask shape must be [out,in,kh,kw]");
  if (shape_size(shape_) != bits_.size()) {
    throw Error(ErrorKind::kShapeMismatch, "mask shape " + shape_to_string(shape_) + " needs " +
                                               std::to_string(shape_size(shape_)) + " bits, got " +
                                               std::to_string(bits_.size()));
  }
  for (auto b : bits_) {
    if (b > 1) throw Error(ErrorKind::kInvalidArgument, "mask bits must be 0 or 1");
    popcount_ += b;
  }
}

std::size_t ConnectivityMask::active_fan_in(std::size_t o) const {
  const std::size_t per = shape_[1] * shape_[2] * shape_[3];
  const auto first = bits_.begin() + static_cast<std::ptrdiff_t>(o * per);
  return static_cast<std::size_t>(std::count(first, first + static_cast<std::ptrdiff_t>(per), 1));
}

Tensor ConnectivityMask::to_tensor() const {
  std::vector<double> v(bits_.begin(), bits_.end());
  return Tensor(shape_, std::move(v));
}

std::vector<std::uint8_t> ConnectivityMask::pack() const {
  std::vector<std::uint8_t> out(packed_size(bits_.size()), 0);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

ConnectivityMask ConnectivityMask::unpack(Shape shape, std::span<const std::uint8_t> bytes,
                                          double connectivity_p, std::uint64_t seed,
                                          std::size_t layer) {
  const std::size_t n = shape_size(shape);
  if (bytes.size() != packed_size(n)) {
    throw Error(ErrorKind::kLayoutMismatch, "packed mask has " + std::to_string(bytes.size()) +
                                                " bytes, shape " + shape_to_string(shape) + " needs " +
                                                std::to_string(packed_size(n)));
  }
  if (n % 8 != 0 && (bytes.back() >> (n % 8)) != 0) {
    throw Error(ErrorKind::kLayoutMismatch, "packed mask has bits set past the last weight");
  }
  std::vector<std::uint8_t> bits(n);
  for (std::size_t i = 0; i < n; ++i) bits[i] = (bytes[i / 8] >> (i % 8)) & 1u;
  return ConnectivityMask(std::move(shape), std::move(bits), connectivity_p, seed, layer);
}

ConnectivityMask sample_mask(const Shape& shape, double p, Pcg32& stream, std::uint64_t seed,
                             std::size_t layer) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "connectivity probability " + std::to_string(p) + " outside [0,1]");
  }
  std::vector<std::uint8_t> bits(shape_size(shape));
  for (auto& b : bits) b = stream.uniform01() < p ? 1 : 0;
  return ConnectivityMask(shape, std::move(bits), p, seed, layer);
}

ConnectivityMask sample_layer_mask(const Shape& shape, double p, std::uint64_t seed,
                                   std::size_t layer) {
  Pcg32 stream = derive_stream(seed, purpose::kMask, layer);
  return sample_mask(shape, p, stream, seed, layer);
}

double mask_density(const ConnectivityMask& mask) {
  if (mask.size() == 0) return 0.0;
  return static_cast<double>(mask.popcount()) / static_cast<double>(mask.size());
}

std::vector<ConnectivityMask> sample_masks(const SequencerConfig& config) {
  validate(config);
  std::vector<ConnectivityMask> masks;
  const auto geo = layer_geometry(config);
  for (std::size_t l = 0; l < geo.size(); ++l) {
    masks.push_back(sample_layer_mask(geo[l].conv.weight_shape(), config.connectivity_p, config.seed, l));
  }
  return masks;
}

ParameterCount parameter_count(const SequencerConfig& config,
                               std::span<const ConnectivityMask> masks) {
  const auto geo = layer_geometry(config);
  if (masks.size() != geo.size()) {
    throw Error(ErrorKind::kShapeMismatch, "expected " + std::to_string(geo.size()) + " masks, got " +
                                               std::to_string(masks.size()));
  }
  ParameterCount pc;
  for (std::size_t l = 0; l < geo.size(); ++l) {
    if (masks[l].shape() != geo[l].conv.weight_shape()) {
      throw Error(ErrorKind::kShapeMismatch, "mask " + std::to_string(l + 1) + " has shape " +
                                                 shape_to_string(masks[l].shape()));
    }
    pc.dense += geo[l].conv.weight_count();
    pc.realized += masks[l].popcount();
  }
  pc.expected = config.connectivity_p * static_cast<double>(pc.dense);
  return pc;
}

ParameterCount expected_parameter_count(const SequencerConfig& config) {
  const auto masks = sample_masks(config);
  return parameter_count(config, masks);
}

MacCount mac_count(const SequencerConfig& config, const Shape& input_shape,
                   std::span<const ConnectivityMask> masks) {
  if (input_shape.size() != 3) throw Error(ErrorKind::kShapeMismatch, "input shape must be [C,H,W]");
  const auto geo = layer_geometry(config, input_shape[0], input_shape[1], input_shape[2]);
  if (masks.size() != geo.size()) throw Error(ErrorKind::kShapeMismatch, "mask count differs from layer count");
  MacCount mc;
  for (std::size_t l = 0; l < geo.size(); ++l) {
    if (masks[l].shape() != geo[l].conv.weight_shape()) {
      throw Error(ErrorKind::kShapeMismatch, "mask " + std::to_string(l + 1) + " does not match input channels");
    }
    const std::uint64_t positions = geo[l].output_positions();
    mc.dense += positions * geo[l].conv.weight_count();
    mc.active += positions * masks[l].popcount();
  }
  return mc;
}

MacCount mac_count(const SequencerConfig& config, const Shape& input_shape) {
  const auto masks = sample_masks(config);
  return mac_count(config, input_shape, masks);
}

}  // namespace snrs
