#include "snrs/config.hpp"

#include <json.hpp>

#include "snrs/error.hpp"

namespace snrs {

using nlohmann::json;

std::vector<LayerGeometry> layer_geometry(const SequencerConfig& config, std::size_t in_channels,
                                          std::size_t in_h, std::size_t in_w) {
  if (config.layer_fields.empty()) throw Error(ErrorKind::kInvalidConfig, "layer_fields is empty");
  if (config.kernel_h == 0 || config.kernel_w == 0) throw Error(ErrorKind::kInvalidConfig, "kernel dimensions must be >= 1");
  if (in_channels == 0 || in_h == 0 || in_w == 0) throw Error(ErrorKind::kInvalidConfig, "input dimensions must be >= 1");

  std::vector<LayerGeometry> out;
  std::size_t c = in_channels, h = in_h, w = in_w;
  for (std::size_t l = 0; l < config.layer_fields.size(); ++l) {
    const std::size_t fields = config.layer_fields[l];
    const std::string where = "layer " + std::to_string(l + 1);
    if (fields == 0) throw Error(ErrorKind::kInvalidConfig, where + " has zero receptive fields");
    if (h < config.kernel_h || w < config.kernel_w) {
      throw Error(ErrorKind::kInvalidConfig, where + " input " + std::to_string(h) + "x" + std::to_string(w) +
                                                 " is smaller than the kernel");
    }
    LayerGeometry g;
    g.conv = {c, fields, config.kernel_h, config.kernel_w};
    g.in_h = h;
    g.in_w = w;
    g.conv_h = h - config.kernel_h + 1;
    g.conv_w = w - config.kernel_w + 1;
    g.pooled = config.pool_after.contains(l + 1);
    g.out_h = g.conv_h;
    g.out_w = g.conv_w;
    if (g.pooled) {
      if (g.conv_h % 2 || g.conv_w % 2) {
        throw Error(ErrorKind::kInvalidConfig, where + " output " + std::to_string(g.conv_h) + "x" +
                                                   std::to_string(g.conv_w) + " cannot be 2x2-pooled");
      }
      g.out_h /= 2;
      g.out_w /= 2;
    }
    out.push_back(g);
    c = fields;
    h = g.out_h;
    w = g.out_w;
  }
  return out;
}

std::vector<LayerGeometry> layer_geometry(const SequencerConfig& config) {
  return layer_geometry(config, config.input_channels, config.input_height, config.input_width);
}

void validate(const SequencerConfig& config) {
  if (!(config.connectivity_p >= 0.0 && config.connectivity_p <= 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "connectivity_p must lie in [0,1]");
  }
  if (config.num_classes < 2) throw Error(ErrorKind::kInvalidConfig, "num_classes must be >= 2");
  for (std::size_t l : config.pool_after) {
    if (l == 0 || l > config.layer_fields.size()) {
      throw Error(ErrorKind::kInvalidConfig, "pool_after names nonexistent layer " + std::to_string(l));
    }
  }
  (void)layer_geometry(config);
}

std::size_t feature_length(const SequencerConfig& config) {
  const auto geo = layer_geometry(config);
  const auto& last = geo.back();
  return last.conv.out_channels * last.out_h * last.out_w;
}

std::string config_to_json(const SequencerConfig& config) {
  json j;
  j["input_height"] = config.input_height;
  j["input_width"] = config.input_width;
  j["input_channels"] = config.input_channels;
  j["layer_fields"] = config.layer_fields;
  j["kernel_h"] = config.kernel_h;
  j["kernel_w"] = config.kernel_w;
  j["connectivity_p"] = config.connectivity_p;
  j["pool_after"] = std::vector<std::size_t>(config.pool_after.begin(), config.pool_after.end());
  j["num_classes"] = config.num_classes;
  j["seed"] = config.seed;
  return j.dump();
}

SequencerConfig config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SequencerConfig c;
    c.input_height = j.at("input_height").get<std::size_t>();
    c.input_width = j.at("input_width").get<std::size_t>();
    c.input_channels = j.at("input_channels").get<std::size_t>();
    c.layer_fields = j.at("layer_fields").get<std::vector<std::size_t>>();
    c.kernel_h = j.at("kernel_h").get<std::size_t>();
    c.kernel_w = j.at("kernel_w").get<std::size_t>();
    c.connectivity_p = j.at("connectivity_p").get<double>();
    const auto pools = j.at("pool_after").get<std::vector<std::size_t>>();
    c.pool_after = std::set<std::size_t>(pools.begin(), pools.end());
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("config JSON: ") + e.what());
  }
}

}  // namespace snrs
