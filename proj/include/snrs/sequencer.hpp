#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "snrs/config.hpp"
#include "snrs/connectivity.hpp"
#include "snrs/layers.hpp"
#include "snrs/tensor.hpp"

namespace snrs {

struct ConvLayer {
  ConvLayer() = default;
  ConvLayer(ConnectivityMask mask, Tensor weights, Tensor bias);

  ConnectivityMask mask;
  ActiveTaps taps;     // active positions of `mask`, cached for the layer ops
  Tensor weights;      // [out, in, kh, kw]; masked slots hold exactly 0
  Tensor bias;         // [out]; never masked
};

struct DenseHead {
  Tensor weights;  // [num_classes, feature_len]
  Tensor bias;     // [num_classes]
};

/// A discovered radiomic sequencer: stochastic conv stack plus a dense
/// classifier head over the flattened last-layer activations.
struct Sequencer {
  SequencerConfig config;
  std::vector<ConvLayer> layers;
  DenseHead head;

  std::size_t feature_len() const { return head.weights.dim(1); }
  Shape input_shape() const { return {config.input_channels, config.input_height, config.input_width}; }

  /// Throws kInvariantViolation if any masked slot is nonzero or any
  /// parameter is non-finite, kShapeMismatch if shapes disagree with config.
  void check_invariants() const;
};

struct RadiomicSequence {
  std::vector<double> values;
  std::string source_id;
};

/// Masks come from streams (seed, "mask", l); active weights are drawn from
/// (seed, "init", l) as N(0, 2 / active_fan_in) per output channel, the
/// head from (seed, "init", L) as N(0, 1 / feature_len). Biases start at 0.
Sequencer build(const SequencerConfig& config);

struct LayerTrace {
  Tensor input;
  Tensor pre_activation;
  Tensor activation;
  std::vector<std::size_t> pool_argmax;  // empty if the layer is not pooled
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  Tensor features;  // flattened [feature_len]
  Tensor logits;
};

/// conv -> ReLU -> (2x2 max-pool) per layer, flatten, dense head.
Tensor forward(const Sequencer& model, const Tensor& patch);
ForwardTrace forward_traced(const Sequencer& model, const Tensor& patch);

RadiomicSequence extract_sequence(const Sequencer& model, const Tensor& patch,
                                  std::string source_id = {});
Tensor apply_head(const Sequencer& model, std::span<const double> sequence);

// Model file, little-endian:
//   "SNRS" | u32 version=1 | u32 n | n bytes config JSON
//   per layer: packed mask | f64 weights | f64 biases
//   head f64 weights | head f64 biases | u32 CRC-32 of all preceding bytes
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize(const Sequencer& model);
Sequencer deserialize(std::span<const std::uint8_t> bytes);
void save(const Sequencer& model, const std::filesystem::path& path);
Sequencer load(const std::filesystem::path& path);

/// "crc32:xxxxxxxx" over the serialized model.
std::string model_id(const Sequencer& model);

struct LayerDescription {
  std::size_t index = 0;  // 1-based
  Shape weight_shape;
  std::size_t dense = 0;
  std::size_t active = 0;
  double density = 0.0;
  std::size_t dead_channels = 0;  // output channels with no active weights
  std::uint64_t dense_macs = 0;
  std::uint64_t active_macs = 0;
};

struct ModelDescription {
  std::string id;
  SequencerConfig config;
  std::vector<LayerDescription> layers;
  ParameterCount conv_parameters;
  std::size_t conv_biases = 0;
  std::size_t head_parameters = 0;
  MacCount macs;
  std::size_t feature_len = 0;
};

ModelDescription describe(const Sequencer& model);
std::string format_description(const ModelDescription& description);

}  // namespace snrs
