#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "snrs/layers.hpp"

namespace snrs {

/// Architecture and stochastic hyperparameters of a radiomic sequencer.
/// Defaults describe three 5x5 stochastic conv layers with 32, 32 and 64
/// receptive fields at connectivity 0.5 on a 32x32 single-channel patch.
struct SequencerConfig {
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  std::size_t input_channels = 1;
  std::vector<std::size_t> layer_fields{32, 32, 64};
  std::size_t kernel_h = 5;
  std::size_t kernel_w = 5;
  double connectivity_p = 0.5;
  std::set<std::size_t> pool_after{1, 2};  // 1-based layer indices
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;

  friend bool operator==(const SequencerConfig&, const SequencerConfig&) = default;
};

struct LayerGeometry {
  ConvGeometry conv;
  std::size_t in_h = 0, in_w = 0;
  std::size_t conv_h = 0, conv_w = 0;  // after the valid convolution
  bool pooled = false;
  std::size_t out_h = 0, out_w = 0;    // after optional pooling

  std::size_t output_positions() const { return conv_h * conv_w; }
};

/// Walks the layer stack for an input of the given size. Throws
/// kInvalidConfig if the spatial extent collapses below 1x1 or a pooled
/// layer has odd size.
std::vector<LayerGeometry> layer_geometry(const SequencerConfig& config, std::size_t in_channels,
                                          std::size_t in_h, std::size_t in_w);
std::vector<LayerGeometry> layer_geometry(const SequencerConfig& config);

void validate(const SequencerConfig& config);

/// Length of the radiomic sequence: channels x height x width after the stack.
std::size_t feature_length(const SequencerConfig& config);

/// Canonical JSON (sorted keys, compact) used inside model files.
std::string config_to_json(const SequencerConfig& config);
SequencerConfig config_from_json(const std::string& text);

}  // namespace snrs
