#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>

#include "snrs/dataset.hpp"
#include "snrs/error.hpp"
#include "snrs/evaluation.hpp"
#include "test_support.hpp"

namespace snrs {
namespace {

namespace fs = std::filesystem;

Tensor unit_patch(std::size_t h, std::size_t w, std::uint64_t seed) {
  Pcg32 rng(seed, 1);
  return test::random_tensor({1, h, w}, rng, 0.0, 1.0);
}

LesionSample lesion(const std::string& id, const std::string& patient, Label label) {
  return {id, patient, label, unit_patch(8, 8, id.size()), {id, 0.0}};
}

ErrorKind error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kInvalidArgument;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  ADD_FAILURE() << "no error raised";
  return {};
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

TEST(Labels, ParseAndName) {
  EXPECT_EQ(parse_label("benign"), Label::kBenign);
  EXPECT_EQ(parse_label("malignant"), Label::kMalignant);
  EXPECT_EQ(label_name(Label::kMalignant), "malignant");
  EXPECT_EQ(error_kind([] { parse_label("unknown"); }), ErrorKind::kBadLabel);
}

TEST(Rotation, ZeroIsBitIdentical) {
  const Tensor p = unit_patch(32, 32, 1);
  EXPECT_EQ(rotate_patch(p, 0.0), p);
  EXPECT_EQ(rotate_patch(p, 360.0), p);
}

TEST(Rotation, FourQuarterTurnsAreIdentity) {
  const Tensor p = unit_patch(32, 32, 2);
  Tensor r = p;
  for (int k = 0; k < 4; ++k) r = rotate_patch(r, 90.0);
  EXPECT_EQ(r, p);
  EXPECT_NE(rotate_patch(p, 90.0), p);
}

TEST(Rotation, QuarterTurnIsCounterclockwiseAsDisplayed) {
  Tensor p({1, 4, 4});
  p.at(0, 0, 3) = 1.0;  // top-right corner
  const Tensor r = rotate_patch(p, 90.0);
  EXPECT_EQ(r.at(0, 0, 0), 1.0);  // moves to top-left
  EXPECT_EQ(rotate_patch(p, 180.0).at(0, 3, 0), 1.0);
  EXPECT_EQ(rotate_patch(p, 270.0).at(0, 3, 3), 1.0);
  EXPECT_EQ(rotate_patch(p, -90.0), rotate_patch(p, 270.0));
}

TEST(Rotation, QuarterTurnAgreesWithInterpolatedPath) {
  // A hair off 90 degrees forces interpolation, which must agree with the
  // permutation's orientation.
  const Tensor sq = unit_patch(6, 6, 3);
  const Tensor viaPerm = rotate_patch(sq, 90.0);
  const Tensor viaInterp = rotate_patch(sq, 90.0 + 360.0 * 1e-13);
  EXPECT_LT(test::max_relative_error(viaPerm.data(), viaInterp.data(), 1e-6), 1e-9);
}

TEST(Rotation, FortyFiveDegreesMovesABlob) {
  // A small Gaussian blob is smooth enough for bilinear sampling to keep its
  // mass; its centroid must follow the point rotation exactly.
  const double c = 15.5, bx = 8.0, by = 8.0, sigma = 1.5;
  Tensor p({1, 32, 32});
  double mass0 = 0.0;
  for (std::size_t y = 0; y < 32; ++y) {
    for (std::size_t x = 0; x < 32; ++x) {
      const double dx = static_cast<double>(x) - bx, dy = static_cast<double>(y) - by;
      p.at(0, y, x) = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      mass0 += p.at(0, y, x);
    }
  }
  const Tensor r = rotate_patch(p, 45.0);
  double mass = 0.0, mx = 0.0, my = 0.0;
  for (std::size_t y = 0; y < 32; ++y) {
    for (std::size_t x = 0; x < 32; ++x) {
      mass += r.at(0, y, x);
      mx += r.at(0, y, x) * static_cast<double>(x);
      my += r.at(0, y, x) * static_cast<double>(y);
    }
  }
  EXPECT_NEAR(mass / mass0, 1.0, 0.05);

  const double a = std::numbers::pi / 4.0;
  const double ox = c + std::cos(a) * (bx - c) + std::sin(a) * (by - c);
  const double oy = c - std::sin(a) * (bx - c) + std::cos(a) * (by - c);
  EXPECT_NEAR(mx / mass, ox, 0.5);
  EXPECT_NEAR(my / mass, oy, 0.5);

  // Counterclockwise as displayed, with y pointing down.
  const double before = std::atan2(-(by - c), bx - c);
  const double after = std::atan2(-(my / mass - c), mx / mass - c);
  EXPECT_NEAR(std::remainder(after - before, 2 * std::numbers::pi) * 180.0 / std::numbers::pi, 45.0, 1.0);
}

TEST(Rotation, FortyFiveDegreesMovesAPointSourceCentroid) {
  Tensor p({1, 32, 32});
  p.at(0, 8, 8) = 1.0;
  const Tensor r = rotate_patch(p, 45.0);
  double mass = 0.0, mx = 0.0, my = 0.0;
  for (std::size_t y = 0; y < 32; ++y) {
    for (std::size_t x = 0; x < 32; ++x) {
      mass += r.at(0, y, x);
      mx += r.at(0, y, x) * static_cast<double>(x);
      my += r.at(0, y, x) * static_cast<double>(y);
    }
  }
  // Single-sample bilinear sampling does not conserve a lone pixel's mass;
  // the expected total is the sum of its tent weights over the rotated grid.
  double want_mass = 0.0;
  const double c = 15.5, k = std::sqrt(0.5);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const double sx = c + k * (x - c) - k * (y - c), sy = c + k * (x - c) + k * (y - c);
      want_mass += std::max(0.0, 1 - std::abs(sx - 8)) * std::max(0.0, 1 - std::abs(sy - 8));
    }
  }
  EXPECT_NEAR(mass, want_mass, 1e-12);
  EXPECT_NEAR(mx / mass, c - 7.5 * 2 * k, 0.5);
  EXPECT_NEAR(my / mass, c, 0.5);
}

TEST(Rotation, OutputStaysInUnitRange) {
  const Tensor r = rotate_patch(unit_patch(16, 16, 4), 33.0);
  for (double v : r.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Augment, MalignantAndBenignCounts) {
  AugmentPolicy policy;
  const auto m = augment(lesion("m1", "p1", Label::kMalignant), policy);
  const auto b = augment(lesion("b1", "p2", Label::kBenign), policy);
  EXPECT_EQ(m.size(), 8u);
  EXPECT_EQ(b.size(), 36u);
  EXPECT_EQ(m[1].id, "m1_r045");
  EXPECT_EQ(b.back().id, "b1_r350");
  EXPECT_EQ(m[3].provenance.source_id, "m1");
  EXPECT_EQ(m[3].provenance.rotation_deg, 135.0);
  for (const auto& s : b) {
    EXPECT_EQ(s.patient_id, "p2");
    EXPECT_EQ(s.label, Label::kBenign);
  }
  EXPECT_EQ(m[0].patch, lesion("m1", "p1", Label::kMalignant).patch);
}

TEST(Augment, DatasetCountFormula) {
  AugmentPolicy policy;
  std::size_t total = 0;
  const std::size_t mal = 3, ben = 5;
  for (std::size_t i = 0; i < mal; ++i) total += augment(lesion("m" + std::to_string(i), "p", Label::kMalignant), policy).size();
  for (std::size_t i = 0; i < ben; ++i) total += augment(lesion("b" + std::to_string(i), "p", Label::kBenign), policy).size();
  EXPECT_EQ(total, 8 * mal + 36 * ben);
}

TEST(Augment, PolicyValidation) {
  AugmentPolicy p;
  p.benign_step_deg = 7;
  EXPECT_THROW(validate(p), Error);
  p.benign_step_deg = 0;
  EXPECT_THROW(validate(p), Error);
  p = AugmentPolicy{};
  p.include_zero = false;
  EXPECT_EQ(augment_angles(Label::kMalignant, p).size(), 7u);
  EXPECT_EQ(augment_angles(Label::kMalignant, p).front(), 45);
}

TEST(PatchFile, HandEncodedGolden) {
  std::vector<std::uint8_t> bytes = {'L', 'P', 'C', 'H', 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0};
  for (float f : {0.0f, 0.25f, 0.5f, 1.0f}) {
    std::uint8_t b[4];
    std::memcpy(b, &f, 4);
    bytes.insert(bytes.end(), b, b + 4);
  }
  const Tensor t = decode_patch(bytes);
  EXPECT_EQ(t, Tensor({1, 2, 2}, {0.0, 0.25, 0.5, 1.0}));
  EXPECT_EQ(encode_patch(t), bytes);
}

TEST(PatchFile, RoundTripAtFloatGranularity) {
  const auto dir = test::scratch_dir("patch_roundtrip");
  const Tensor p = unit_patch(5, 7, 9);
  write_patch(p, dir / "a.lpch");
  const Tensor back = read_patch(dir / "a.lpch");
  ASSERT_EQ(back.shape(), p.shape());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(p[i])));
  write_patch(back, dir / "b.lpch");
  EXPECT_EQ(read_patch(dir / "b.lpch"), back);
}

TEST(PatchFile, Corruption) {
  auto bytes = encode_patch(Tensor({1, 2, 2}));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(error_kind([&] { decode_patch(bad); }), ErrorKind::kBadMagic);
  bad = bytes;
  bad[4] = 9;
  EXPECT_EQ(error_kind([&] { decode_patch(bad); }), ErrorKind::kUnsupportedVersion);
  bad = std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1);
  EXPECT_EQ(error_kind([&] { decode_patch(bad); }), ErrorKind::kTruncated);
  bad = bytes;
  bad.push_back(0);
  EXPECT_EQ(error_kind([&] { decode_patch(bad); }), ErrorKind::kDimensionMismatch);
}

TEST(Manifest, RoundTripAndRelativePaths) {
  const auto dir = test::scratch_dir("manifest");
  fs::create_directories(dir / "data" / "patches");
  write_patch(unit_patch(4, 4, 1), dir / "data" / "patches" / "a.lpch");
  write_patch(unit_patch(4, 4, 2), dir / "data" / "patches" / "b.lpch");
  write_text(dir / "data" / "manifest.csv",
             "id,patient_id,label,path\na,p1,benign,patches/a.lpch\nb,p2,malignant,patches/b.lpch\n");
  const Manifest m = read_manifest(dir / "data" / "manifest.csv");
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[1].label, Label::kMalignant);

  fs::create_directories(dir / "elsewhere");
  write_manifest(m, dir / "elsewhere" / "copy.csv");
  const Manifest copy = read_manifest(dir / "elsewhere" / "copy.csv");
  EXPECT_EQ(copy.records[0].path.generic_string(), "../data/patches/a.lpch");
  const auto samples = load_samples(copy);
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0].patch, read_patch(dir / "data" / "patches" / "a.lpch"));
}

TEST(Manifest, MissingFileNamesTheRow) {
  const auto dir = test::scratch_dir("manifest_missing");
  write_text(dir / "m.csv", "id,patient_id,label,path\nlesion_17,p1,benign,nope.lpch\n");
  const std::string msg = error_text([&] { read_manifest(dir / "m.csv"); });
  EXPECT_NE(msg.find("lesion_17"), std::string::npos) << msg;
  EXPECT_EQ(error_kind([&] { read_manifest(dir / "m.csv"); }), ErrorKind::kMissingFile);
}

TEST(Manifest, MalformedInput) {
  const auto dir = test::scratch_dir("manifest_bad");
  write_patch(unit_patch(4, 4, 1), dir / "a.lpch");
  write_text(dir / "h.csv", "id,label,path\n");
  EXPECT_EQ(error_kind([&] { read_manifest(dir / "h.csv"); }), ErrorKind::kBadManifest);
  write_text(dir / "f.csv", "id,patient_id,label,path\na,p1,benign\n");
  EXPECT_EQ(error_kind([&] { read_manifest(dir / "f.csv"); }), ErrorKind::kBadManifest);
  write_text(dir / "d.csv", "id,patient_id,label,path\na,p1,benign,a.lpch\na,p2,benign,a.lpch\n");
  EXPECT_EQ(error_kind([&] { read_manifest(dir / "d.csv"); }), ErrorKind::kBadManifest);
  write_text(dir / "l.csv", "id,patient_id,label,path\na,p1,maybe,a.lpch\n");
  EXPECT_EQ(error_kind([&] { read_manifest(dir / "l.csv"); }), ErrorKind::kBadLabel);
  EXPECT_EQ(error_kind([&] { read_manifest(dir / "absent.csv"); }), ErrorKind::kMissingFile);
}

TEST(Manifest, DimensionMismatch) {
  const auto dir = test::scratch_dir("manifest_dims");
  write_patch(unit_patch(4, 4, 1), dir / "a.lpch");
  write_patch(unit_patch(4, 5, 1), dir / "b.lpch");
  write_text(dir / "m.csv", "id,patient_id,label,path\na,p1,benign,a.lpch\nb,p1,benign,b.lpch\n");
  const Manifest m = read_manifest(dir / "m.csv");
  EXPECT_EQ(error_kind([&] { load_samples(m); }), ErrorKind::kDimensionMismatch);
  EXPECT_EQ(error_kind([&] { load_samples(m, std::pair<std::size_t, std::size_t>{3, 3}); }),
            ErrorKind::kDimensionMismatch);
  EXPECT_NE(error_text([&] { load_samples(m); }).find("'b'"), std::string::npos);
}

Manifest patients_manifest(std::size_t patients, std::size_t per_patient) {
  Manifest m{fs::path("/tmp"), {}};
  for (std::size_t p = 0; p < patients; ++p) {
    for (std::size_t k = 0; k < per_patient; ++k) {
      m.records.push_back({"s" + std::to_string(p) + "_" + std::to_string(k), "pt" + std::to_string(p),
                           p % 2 ? Label::kMalignant : Label::kBenign, "x.lpch"});
    }
  }
  return m;
}

std::set<std::string> patient_set(const Manifest& m) {
  std::set<std::string> s;
  for (const auto& r : m.records) s.insert(r.patient_id);
  return s;
}

TEST(Split, TenPatientsTwoHeldOut) {
  const auto [train, test] = split_by_patient(patients_manifest(10, 3), 0.2, 1);
  EXPECT_EQ(patient_set(test).size(), 2u);
  EXPECT_EQ(patient_set(train).size(), 8u);
  EXPECT_EQ(test.records.size(), 6u);
  EXPECT_EQ(train.records.size(), 24u);
}

TEST(Split, DisjointForEverySeed) {
  const Manifest m = patients_manifest(13, 2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto [train, test] = split_by_patient(m, 0.3, seed);
    const auto a = patient_set(train), b = patient_set(test);
    for (const auto& p : b) ASSERT_FALSE(a.contains(p)) << "seed " << seed;
    ASSERT_EQ(a.size() + b.size(), 13u);
    ASSERT_EQ(b.size(), 4u);
  }
}

TEST(Split, Deterministic) {
  const Manifest m = patients_manifest(20, 2);
  const auto a = split_by_patient(m, 0.2, 5);
  const auto b = split_by_patient(m, 0.2, 5);
  EXPECT_EQ(patient_set(a.second), patient_set(b.second));
  EXPECT_NE(patient_set(a.second), patient_set(split_by_patient(m, 0.2, 6).second));
}

TEST(Split, BadArguments) {
  EXPECT_THROW(split_by_patient(patients_manifest(10, 1), 0.0, 1), Error);
  EXPECT_THROW(split_by_patient(patients_manifest(10, 1), 1.0, 1), Error);
  EXPECT_THROW(split_by_patient(patients_manifest(1, 4), 0.5, 1), Error);
}

TEST(Synthetic, CountsAndLabels) {
  const auto dir = test::scratch_dir("synthetic_counts");
  const Manifest m = generate_synthetic(100, 32, 7, dir);
  EXPECT_EQ(m.records.size(), 200u);
  std::size_t mal = 0;
  for (const auto& r : m.records) mal += r.label == Label::kMalignant;
  EXPECT_EQ(mal, 100u);
  const Manifest back = read_manifest(dir / "manifest.csv");
  EXPECT_EQ(back.records.size(), 200u);
  for (const auto& s : load_samples(back)) {
    for (double v : s.patch.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Synthetic, SameSeedSameFiles) {
  const auto a = test::scratch_dir("synthetic_a"), b = test::scratch_dir("synthetic_b");
  const Manifest ma = generate_synthetic(5, 32, 11, a);
  generate_synthetic(5, 32, 11, b);
  EXPECT_EQ(test::file_bytes(a / "manifest.csv"), test::file_bytes(b / "manifest.csv"));
  for (const auto& r : ma.records) {
    EXPECT_EQ(test::file_bytes(a / r.path), test::file_bytes(b / r.path)) << r.id;
  }
  const auto c = synthesize_samples(5, 32, 12);
  EXPECT_NE(c[0].patch, synthesize_samples(5, 32, 11)[0].patch);
}

TEST(Synthetic, PatientsHoldSingleClass) {
  const auto samples = synthesize_samples(40, 32, 3);
  std::map<std::string, Label> label_of;
  for (const auto& s : samples) {
    auto [it, fresh] = label_of.emplace(s.patient_id, s.label);
    EXPECT_EQ(it->second, s.label) << s.patient_id;
  }
  EXPECT_GE(label_of.size(), 10u);
}

TEST(Synthetic, UntrainedModelIsNearChance) {
  const auto samples = synthesize_samples(100, 32, 7);
  double acc = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SequencerConfig c;
    c.seed = seed;
    acc += evaluate(build(c), samples).accuracy;
  }
  EXPECT_NEAR(acc / 5.0, 0.5, 0.1);
}

}  // namespace
}  // namespace snrs
