#include <gtest/gtest.h>
#include <zlib.h>

#include <cmath>
#include <cstring>

#include "snrs/error.hpp"
#include "snrs/sequencer.hpp"
#include "test_support.hpp"

namespace snrs {
namespace {

SequencerConfig config_with(double p, std::uint64_t seed) {
  SequencerConfig c;
  c.connectivity_p = p;
  c.seed = seed;
  return c;
}

Tensor random_patch(Pcg32& rng) { return test::random_tensor({1, 32, 32}, rng, 0.0, 1.0); }

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b[at + k] = static_cast<std::uint8_t>(v >> (8 * k));
}

void reseal(std::vector<std::uint8_t>& b) {
  const auto crc = static_cast<std::uint32_t>(::crc32(0L, b.data(), static_cast<uInt>(b.size() - 4)));
  put_u32(b, b.size() - 4, crc);
}

ErrorKind load_error(const std::vector<std::uint8_t>& bytes) {
  try {
    (void)deserialize(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "deserialize accepted a corrupt file";
  return ErrorKind::kInvalidArgument;
}

TEST(Build, DefaultShapes) {
  const Sequencer m = build(config_with(0.5, 3));
  EXPECT_EQ(m.feature_len(), 64u);
  ASSERT_EQ(m.layers.size(), 3u);
  std::size_t dense = 0;
  for (const auto& l : m.layers) dense += l.weights.size();
  EXPECT_EQ(dense, 77600u);
  EXPECT_EQ(m.head.weights.shape(), (Shape{2, 64}));
  EXPECT_NO_THROW(m.check_invariants());
}

TEST(Build, MaskedSlotsAreZeroAndBiasesStartAtZero) {
  const Sequencer m = build(config_with(0.5, 4));
  for (const auto& l : m.layers) {
    for (std::size_t i = 0; i < l.weights.size(); ++i) {
      if (!l.mask.active(i)) {
        ASSERT_EQ(l.weights[i], 0.0);
      }
    }
    for (double b : l.bias.data()) EXPECT_EQ(b, 0.0);
  }
  for (double b : m.head.bias.data()) EXPECT_EQ(b, 0.0);
}

TEST(Build, FullConnectivityDrawsEveryWeightFromInitStream) {
  const Sequencer m = build(config_with(1.0, 5));
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    EXPECT_EQ(layer.mask.popcount(), layer.weights.size());
    Pcg32 init = derive_stream(5, purpose::kInit, l);
    const std::size_t per_out = layer.weights.size() / layer.weights.dim(0);
    const double sd = std::sqrt(2.0 / static_cast<double>(per_out));
    for (std::size_t i = 0; i < layer.weights.size(); ++i) ASSERT_EQ(layer.weights[i], sd * init.gaussian());
  }
}

TEST(Build, InitialisationScale) {
  const Sequencer m = build(config_with(0.5, 6));
  const auto& l2 = m.layers[1];
  double s2 = 0.0;
  std::size_t n = 0;
  for (std::size_t o = 0; o < l2.weights.dim(0); ++o) {
    const double fan = static_cast<double>(l2.mask.active_fan_in(o));
    for (std::size_t k = o * 800; k < (o + 1) * 800; ++k) {
      if (l2.mask.active(k)) {
        s2 += l2.weights[k] * l2.weights[k] * fan / 2.0;
        ++n;
      }
    }
  }
  EXPECT_NEAR(s2 / static_cast<double>(n), 1.0, 0.05);
}

TEST(Build, Deterministic) {
  EXPECT_EQ(serialize(build(config_with(0.5, 9))), serialize(build(config_with(0.5, 9))));
  EXPECT_NE(serialize(build(config_with(0.5, 9))), serialize(build(config_with(0.5, 10))));
}

TEST(Forward, ZeroPatchWithZeroBiasesGivesZeroLogits) {
  const Sequencer m = build(config_with(0.5, 1));
  const Tensor z({1, 32, 32});
  EXPECT_EQ(forward(m, z), Tensor({2}));
  for (double v : extract_sequence(m, z).values) EXPECT_EQ(v, 0.0);
}

TEST(Forward, RepeatableAndConsistentWithHead) {
  Pcg32 rng(1, 1);
  const Sequencer m = build(config_with(0.5, 2));
  const Tensor x = random_patch(rng);
  const Tensor a = forward(m, x);
  EXPECT_EQ(a, forward(m, x));
  const RadiomicSequence seq = extract_sequence(m, x, "lesion");
  EXPECT_EQ(seq.values.size(), 64u);
  EXPECT_EQ(seq.source_id, "lesion");
  EXPECT_EQ(apply_head(m, seq.values), a);
  EXPECT_EQ(forward_traced(m, x).logits, a);
}

TEST(Forward, FullConnectivityMatchesDenseOracle) {
  Pcg32 rng(2, 2);
  Sequencer m = build(config_with(1.0, 3));
  for (auto& l : m.layers) {
    for (auto& b : l.bias.data()) b = rng.uniform(-0.1, 0.1);
  }
  for (int k = 0; k < 5; ++k) {
    const Tensor x = random_patch(rng);
    const Tensor got = forward(m, x);
    const Tensor want = test::dense_cnn_oracle(m, x);
    EXPECT_LT(test::max_relative_error(got.data(), want.data(), 1e-300), 1e-10);
  }
}

TEST(Forward, RejectsWrongPatchShape) {
  const Sequencer m = build(config_with(0.5, 1));
  EXPECT_THROW(forward(m, Tensor({1, 31, 32})), Error);
}

TEST(Serialization, RoundTripIsByteIdentical) {
  Sequencer m = build(config_with(0.5, 11));
  m.layers[0].bias[3] = 0.125;
  const auto bytes = serialize(m);
  const Sequencer back = deserialize(bytes);
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(model_id(back), model_id(m));

  const auto dir = test::scratch_dir("serialization");
  save(m, dir / "m.snrs");
  EXPECT_EQ(test::file_bytes(dir / "m.snrs"), bytes);
  EXPECT_EQ(serialize(load(dir / "m.snrs")), bytes);
}

TEST(Serialization, HeaderLayout) {
  const auto bytes = serialize(build(config_with(0.5, 1)));
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(std::memcmp(bytes.data(), "SNRS", 4), 0);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  const std::uint32_t n = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | static_cast<std::uint32_t>(bytes[11]) << 24;
  EXPECT_EQ(bytes[12], '{');
  EXPECT_EQ(bytes[12 + n - 1], '}');
  // body + packed masks (100 + 3200 + 6400) + f64 params + head + crc
  EXPECT_EQ(bytes.size(), 12 + n + 9700 + 8 * (77600 + 128) + 8 * (128 + 2) + 4);
}

TEST(Serialization, ModelIdIsTheStoredChecksum) {
  const auto m = build(config_with(0.5, 1));
  const auto bytes = serialize(m);
  char want[32];
  std::snprintf(want, sizeof want, "crc32:%02x%02x%02x%02x", bytes[bytes.size() - 1], bytes[bytes.size() - 2],
                bytes[bytes.size() - 3], bytes[bytes.size() - 4]);
  EXPECT_EQ(model_id(m), want);
  EXPECT_NE(model_id(m), model_id(build(config_with(0.5, 2))));
}

TEST(Serialization, BadMagic) {
  auto bytes = serialize(build(config_with(0.5, 1)));
  bytes[0] = 'X';
  EXPECT_EQ(load_error(bytes), ErrorKind::kBadMagic);
}

TEST(Serialization, UnsupportedVersion) {
  auto bytes = serialize(build(config_with(0.5, 1)));
  put_u32(bytes, 4, 2);
  EXPECT_EQ(load_error(bytes), ErrorKind::kUnsupportedVersion);
}

TEST(Serialization, Truncated) {
  const auto bytes = serialize(build(config_with(0.5, 1)));
  for (std::size_t keep : {std::size_t{2}, std::size_t{10}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_EQ(load_error(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + keep)), ErrorKind::kTruncated)
        << keep;
  }
}

TEST(Serialization, TrailingBytes) {
  auto bytes = serialize(build(config_with(0.5, 1)));
  bytes.insert(bytes.end() - 4, {0, 0, 0, 0, 0, 0, 0, 0});
  reseal(bytes);
  EXPECT_EQ(load_error(bytes), ErrorKind::kLayoutMismatch);
}

TEST(Serialization, FlippedBitFailsChecksum) {
  auto bytes = serialize(build(config_with(0.5, 1)));
  bytes[bytes.size() / 2] ^= 0x10;
  EXPECT_EQ(load_error(bytes), ErrorKind::kChecksumMismatch);
}

TEST(Serialization, NonzeroMaskedSlotViolatesInvariant) {
  const Sequencer m = build(config_with(0.5, 1));
  auto bytes = serialize(m);
  const std::uint32_t n = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | static_cast<std::uint32_t>(bytes[11]) << 24;
  // First masked weight of layer 1; its f64 follows the 100 packed mask bytes.
  std::size_t slot = 0;
  while (m.layers[0].mask.active(slot)) ++slot;
  const std::size_t at = 12 + n + 100 + 8 * slot;
  const double v = 0.5;
  std::memcpy(&bytes[at], &v, 8);
  reseal(bytes);
  EXPECT_EQ(load_error(bytes), ErrorKind::kInvariantViolation);
}

TEST(Serialization, BadConfigJson) {
  auto bytes = serialize(build(config_with(0.5, 1)));
  bytes[12] = '[';
  reseal(bytes);
  EXPECT_EQ(load_error(bytes), ErrorKind::kInvalidConfig);
}

TEST(Serialization, MissingFile) {
  try {
    (void)load("/nonexistent/dir/model.snrs");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingFile);
  }
}

TEST(Describe, Counts) {
  const Sequencer m = build(config_with(0.5, 42));
  const ModelDescription d = describe(m);
  EXPECT_EQ(d.conv_parameters.dense, 77600u);
  EXPECT_EQ(d.conv_parameters.expected, 38800.0);
  EXPECT_EQ(d.conv_parameters.realized, 38785u);
  EXPECT_EQ(d.feature_len, 64u);
  EXPECT_EQ(d.head_parameters, 130u);
  EXPECT_EQ(d.conv_biases, 128u);
  ASSERT_EQ(d.layers.size(), 3u);
  EXPECT_EQ(d.layers[0].dense, 800u);
  EXPECT_EQ(d.layers[1].dense, 25600u);
  EXPECT_EQ(d.layers[2].dense, 51200u);
  const std::string text = format_description(d);
  EXPECT_NE(text.find("38785"), std::string::npos) << text;
  EXPECT_NE(text.find(d.id), std::string::npos) << text;
}

}  // namespace
}  // namespace snrs
