#include "snrs/sequencer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "byte_io.hpp"
#include "snrs/error.hpp"
#include "snrs/rng.hpp"

namespace snrs {

ConvLayer::ConvLayer(ConnectivityMask m, Tensor w, Tensor b)
    : mask(std::move(m)), taps(mask.to_tensor()), weights(std::move(w)), bias(std::move(b)) {}

void Sequencer::check_invariants() const {
  const auto geo = layer_geometry(config);
  if (layers.size() != geo.size()) {
    throw Error(ErrorKind::kShapeMismatch, "model has " + std::to_string(layers.size()) + " layers, config " +
                                               std::to_string(geo.size()));
  }
  for (std::size_t l = 0; l < geo.size(); ++l) {
    const auto& layer = layers[l];
    const Shape ws = geo[l].conv.weight_shape();
    if (layer.weights.shape() != ws || layer.mask.shape() != ws || layer.taps.shape() != ws ||
        layer.bias.shape() != Shape{geo[l].conv.out_channels}) {
      throw Error(ErrorKind::kShapeMismatch, "layer " + std::to_string(l + 1) + " shapes disagree with config");
    }
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      if (!layer.mask.active(i) && layer.weights[i] != 0.0) {
        throw Error(ErrorKind::kInvariantViolation, "layer " + std::to_string(l + 1) + " masked slot " +
                                                        std::to_string(i) + " holds a nonzero weight");
      }
    }
    if (!layer.weights.all_finite() || !layer.bias.all_finite()) {
      throw Error(ErrorKind::kInvariantViolation, "layer " + std::to_string(l + 1) + " has non-finite parameters");
    }
  }
  const std::size_t flen = feature_length(config);
  if (head.weights.shape() != Shape{config.num_classes, flen} || head.bias.shape() != Shape{config.num_classes}) {
    throw Error(ErrorKind::kShapeMismatch, "head shape disagrees with config");
  }
  if (!head.weights.all_finite() || !head.bias.all_finite()) {
    throw Error(ErrorKind::kInvariantViolation, "head has non-finite parameters");
  }
}

Sequencer build(const SequencerConfig& config) {
  validate(config);
  const auto geo = layer_geometry(config);
  Sequencer model;
  model.config = config;
  for (std::size_t l = 0; l < geo.size(); ++l) {
    const ConvGeometry& cg = geo[l].conv;
    ConnectivityMask mask = sample_layer_mask(cg.weight_shape(), config.connectivity_p, config.seed, l);
    Tensor weights(cg.weight_shape());
    Pcg32 init = derive_stream(config.seed, purpose::kInit, l);
    const std::size_t per_out = cg.in_channels * cg.kernel_h * cg.kernel_w;
    for (std::size_t o = 0; o < cg.out_channels; ++o) {
      const std::size_t fan_in = mask.active_fan_in(o);
      const double stddev = fan_in ? std::sqrt(2.0 / static_cast<double>(fan_in)) : 0.0;
      for (std::size_t k = o * per_out; k < (o + 1) * per_out; ++k) {
        if (mask.active(k)) weights[k] = stddev * init.gaussian();
      }
    }
    model.layers.emplace_back(std::move(mask), std::move(weights), Tensor({cg.out_channels}));
  }
  const std::size_t flen = feature_length(config);
  model.head.weights = Tensor({config.num_classes, flen});
  model.head.bias = Tensor({config.num_classes});
  Pcg32 init = derive_stream(config.seed, purpose::kInit, geo.size());
  const double stddev = std::sqrt(1.0 / static_cast<double>(flen));
  for (double& w : model.head.weights.data()) w = stddev * init.gaussian();
  return model;
}

namespace {

void check_patch(const Sequencer& model, const Tensor& patch) {
  const Shape want = model.input_shape();
  if (patch.shape() != want) {
    throw Error(ErrorKind::kShapeMismatch, "patch shape " + shape_to_string(patch.shape()) +
                                               " does not match model input " + shape_to_string(want));
  }
}

}  // namespace

ForwardTrace forward_traced(const Sequencer& model, const Tensor& patch) {
  check_patch(model, patch);
  ForwardTrace trace;
  Tensor x = patch;
  for (const auto& layer : model.layers) {
    LayerTrace lt;
    lt.pre_activation = conv2d_masked(x, layer.weights, layer.taps, layer.bias);
    lt.activation = relu(lt.pre_activation);
    lt.input = std::move(x);
    if (model.config.pool_after.contains(trace.layers.size() + 1)) {
      PoolResult pooled = maxpool2(lt.activation);
      x = std::move(pooled.output);
      lt.pool_argmax = std::move(pooled.argmax);
    } else {
      x = lt.activation;
    }
    trace.layers.push_back(std::move(lt));
  }
  trace.features = x.reshaped({x.size()});
  trace.logits = apply_head(model, trace.features.data());
  return trace;
}

RadiomicSequence extract_sequence(const Sequencer& model, const Tensor& patch, std::string source_id) {
  check_patch(model, patch);
  Tensor x = patch;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    x = relu(conv2d_masked(x, layer.weights, layer.taps, layer.bias));
    if (model.config.pool_after.contains(l + 1)) x = maxpool2(x).output;
  }
  return {x.values(), std::move(source_id)};
}

Tensor apply_head(const Sequencer& model, std::span<const double> sequence) {
  Tensor features({sequence.size()}, std::vector<double>(sequence.begin(), sequence.end()));
  return fully_connected(features, model.head.weights, model.head.bias);
}

Tensor forward(const Sequencer& model, const Tensor& patch) {
  return apply_head(model, extract_sequence(model, patch).values);
}

std::vector<std::uint8_t> serialize(const Sequencer& model) {
  detail::ByteWriter w;
  w.text("SNRS");
  w.u32(kModelFormatVersion);
  const std::string json = config_to_json(model.config);
  w.u32(static_cast<std::uint32_t>(json.size()));
  w.text(json);
  for (const auto& layer : model.layers) {
    w.bytes(layer.mask.pack());
    for (double v : layer.weights.data()) w.f64(v);
    for (double v : layer.bias.data()) w.f64(v);
  }
  for (double v : model.head.weights.data()) w.f64(v);
  for (double v : model.head.bias.data()) w.f64(v);
  w.u32(detail::crc32(w.data()));
  return w.take();
}

Sequencer deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "model file");
  const auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "SNRS") throw Error(ErrorKind::kBadMagic, "model file does not start with SNRS");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw Error(ErrorKind::kUnsupportedVersion, "model format version " + std::to_string(version));
  }
  const std::uint32_t json_len = r.u32();
  const auto json_bytes = r.bytes(json_len);
  SequencerConfig config = config_from_json(std::string(json_bytes.begin(), json_bytes.end()));
  validate(config);

  const auto geo = layer_geometry(config);
  const std::size_t flen = feature_length(config);
  std::size_t payload = 0;
  for (const auto& g : geo) {
    payload += ConnectivityMask::packed_size(g.conv.weight_count()) + 8 * (g.conv.weight_count() + g.conv.out_channels);
  }
  payload += 8 * (config.num_classes * flen + config.num_classes);
  if (r.remaining() < payload + 4) {
    throw Error(ErrorKind::kTruncated, "model file holds " + std::to_string(r.remaining()) +
                                           " payload bytes, config requires " + std::to_string(payload + 4));
  }
  if (r.remaining() > payload + 4) {
    throw Error(ErrorKind::kLayoutMismatch, "model file holds " + std::to_string(r.remaining() - payload - 4) +
                                                " bytes beyond the config-declared layers");
  }
  const std::size_t body = bytes.size() - 4;
  detail::ByteReader tail(bytes.subspan(body), "model checksum");
  if (tail.u32() != detail::crc32(bytes.first(body))) {
    throw Error(ErrorKind::kChecksumMismatch, "model file CRC-32 does not match contents");
  }

  Sequencer model;
  model.config = config;
  for (std::size_t l = 0; l < geo.size(); ++l) {
    const ConvGeometry& cg = geo[l].conv;
    auto packed = r.bytes(ConnectivityMask::packed_size(cg.weight_count()));
    ConnectivityMask mask = ConnectivityMask::unpack(cg.weight_shape(), packed, config.connectivity_p, config.seed, l);
    Tensor weights(cg.weight_shape());
    for (double& v : weights.data()) v = r.f64();
    Tensor bias({cg.out_channels});
    for (double& v : bias.data()) v = r.f64();
    model.layers.emplace_back(std::move(mask), std::move(weights), std::move(bias));
  }
  model.head.weights = Tensor({config.num_classes, flen});
  for (double& v : model.head.weights.data()) v = r.f64();
  model.head.bias = Tensor({config.num_classes});
  for (double& v : model.head.bias.data()) v = r.f64();
  model.check_invariants();
  return model;
}

void save(const Sequencer& model, const std::filesystem::path& path) {
  detail::write_file(path, serialize(model));
}

Sequencer load(const std::filesystem::path& path) { return deserialize(detail::read_file(path)); }

std::string model_id(const Sequencer& model) {
  const auto bytes = serialize(model);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", detail::crc32(std::span(bytes).first(bytes.size() - 4)));
  return std::string("crc32:") + buf;
}

ModelDescription describe(const Sequencer& model) {
  ModelDescription d;
  d.id = model_id(model);
  d.config = model.config;
  const auto geo = layer_geometry(model.config);
  std::vector<ConnectivityMask> masks;
  for (std::size_t l = 0; l < geo.size(); ++l) {
    const auto& mask = model.layers[l].mask;
    LayerDescription ld;
    ld.index = l + 1;
    ld.weight_shape = mask.shape();
    ld.dense = mask.size();
    ld.active = mask.popcount();
    ld.density = mask_density(mask);
    for (std::size_t o = 0; o < geo[l].conv.out_channels; ++o) {
      if (mask.active_fan_in(o) == 0) ++ld.dead_channels;
    }
    ld.dense_macs = static_cast<std::uint64_t>(geo[l].output_positions()) * ld.dense;
    ld.active_macs = static_cast<std::uint64_t>(geo[l].output_positions()) * ld.active;
    d.conv_biases += geo[l].conv.out_channels;
    d.layers.push_back(ld);
    masks.push_back(mask);
  }
  d.conv_parameters = parameter_count(model.config, masks);
  d.macs = mac_count(model.config, model.input_shape(), masks);
  d.head_parameters = model.head.weights.size() + model.head.bias.size();
  d.feature_len = model.feature_len();
  return d;
}

std::string format_description(const ModelDescription& d) {
  std::ostringstream out;
  char line[256];
  out << "model " << d.id << "\n";
  std::snprintf(line, sizeof line, "input %zux%zux%zu  connectivity_p %.4f  seed %llu  radiomic sequence length %zu\n",
                d.config.input_channels, d.config.input_height, d.config.input_width, d.config.connectivity_p,
                static_cast<unsigned long long>(d.config.seed), d.feature_len);
  out << line;
  out << "layer  weight_shape      dense    active   density  dead_channels  dense_macs  active_macs\n";
  for (const auto& l : d.layers) {
    std::snprintf(line, sizeof line, "%-6zu %-16s %7zu  %7zu   %.4f   %13zu  %10llu  %11llu\n", l.index,
                  shape_to_string(l.weight_shape).c_str(), l.dense, l.active, l.density, l.dead_channels,
                  static_cast<unsigned long long>(l.dense_macs), static_cast<unsigned long long>(l.active_macs));
    out << line;
  }
  std::snprintf(line, sizeof line, "conv weights: dense %zu  expected %.1f  realized %zu\n", d.conv_parameters.dense,
                d.conv_parameters.expected, d.conv_parameters.realized);
  out << line;
  std::snprintf(line, sizeof line, "conv biases %zu  head parameters %zu\n", d.conv_biases, d.head_parameters);
  out << line;
  const double ratio = d.macs.dense ? static_cast<double>(d.macs.active) / static_cast<double>(d.macs.dense) : 0.0;
  std::snprintf(line, sizeof line, "MACs per patch: dense %llu  active %llu  ratio %.4f\n",
                static_cast<unsigned long long>(d.macs.dense), static_cast<unsigned long long>(d.macs.active), ratio);
  out << line;
  return out.str();
}

}  // namespace snrs
