#include "snrs/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "byte_io.hpp"
#include "snrs/error.hpp"
#include "snrs/rng.hpp"

namespace snrs {

namespace fs = std::filesystem;

std::string_view label_name(Label label) {
  return label == Label::kMalignant ? "malignant" : "benign";
}

Label parse_label(std::string_view text) {
  if (text == "benign") return Label::kBenign;
  if (text == "malignant") return Label::kMalignant;
  throw Error(ErrorKind::kBadLabel, "label '" + std::string(text) + "' is not benign or malignant");
}

// ---------------------------------------------------------------------------
// Rotation

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Tensor rotate_patch(const Tensor& patch, double angle_deg) {
  if (patch.rank() != 3) throw Error(ErrorKind::kShapeMismatch, "patch must be [C,H,W]");
  const std::size_t ch = patch.dim(0), h = patch.dim(1), w = patch.dim(2);
  double a = std::fmod(angle_deg, 360.0);
  if (a < 0.0) a += 360.0;

  Tensor out(patch.shape());
  const bool square = h == w;
  if (a == 0.0 || a == 180.0 || (square && (a == 90.0 || a == 270.0))) {
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          std::size_t sy = y, sx = x;
          if (a == 90.0) {
            sy = x;
            sx = w - 1 - y;
          } else if (a == 180.0) {
            sy = h - 1 - y;
            sx = w - 1 - x;
          } else if (a == 270.0) {
            sy = h - 1 - x;
            sx = y;
          }
          out.at(c, y, x) = clamp01(patch.at(c, sy, sx));
        }
      }
    }
    return out;
  }

  // Positive angles turn content counterclockwise as displayed (y down).
  // Inverse map from destination to source:
  //   sx = cx + cos*dx - sin*dy,  sy = cy + sin*dx + cos*dy
  const double rad = a * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  for (std::size_t c = 0; c < ch; ++c) {
    auto sample = [&](long yy, long xx) {
      if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) return 0.0;
      return patch.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
    };
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        const double sx = cx + cs * dx - sn * dy;
        const double sy = cy + sn * dx + cs * dy;
        const double fx0 = std::floor(sx), fy0 = std::floor(sy);
        const double fx = sx - fx0, fy = sy - fy0;
        const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
        const double top = (1.0 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1);
        const double bottom = (1.0 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1);
        out.at(c, y, x) = clamp01((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

void validate(const AugmentPolicy& policy) {
  for (int step : {policy.malignant_step_deg, policy.benign_step_deg}) {
    if (step <= 0 || step > 360 || 360 % step != 0) {
      throw Error(ErrorKind::kInvalidArgument, "rotation step " + std::to_string(step) + " must divide 360");
    }
  }
}

std::vector<int> augment_angles(Label label, const AugmentPolicy& policy) {
  validate(policy);
  const int step = policy.step_for(label);
  std::vector<int> angles;
  for (int a = policy.include_zero ? 0 : step; a < 360; a += step) angles.push_back(a);
  return angles;
}

std::vector<LesionSample> augment(const LesionSample& sample, const AugmentPolicy& policy) {
  std::vector<LesionSample> out;
  for (int angle : augment_angles(sample.label, policy)) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_r%03d", angle);
    LesionSample s;
    s.id = sample.id + suffix;
    s.patient_id = sample.patient_id;
    s.label = sample.label;
    s.patch = rotate_patch(sample.patch, angle);
    s.provenance = {sample.id, static_cast<double>(angle)};
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

namespace {

constexpr std::string_view kManifestHeader = "id,patient_id,label,path";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

fs::path absolute_dir_of(const fs::path& file) {
  return fs::absolute(file).parent_path().lexically_normal();
}

}  // namespace

Manifest read_manifest(const fs::path& path) {
  const auto bytes = detail::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  Manifest m;
  m.root = absolute_dir_of(path);
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw Error(ErrorKind::kBadManifest, path.string() + ": header must be '" + std::string(kManifestHeader) + "'");
  }
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) {
      throw Error(ErrorKind::kBadManifest, path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    }
    if (f[0].empty()) throw Error(ErrorKind::kBadManifest, path.string() + ":" + std::to_string(lineno) + ": empty id");
    if (!seen.insert(f[0]).second) {
      throw Error(ErrorKind::kBadManifest, "duplicate id '" + f[0] + "'");
    }
    ManifestRecord r{f[0], f[1], parse_label(f[2]), fs::path(f[3])};
    if (!fs::is_regular_file(m.root / r.path)) {
      throw Error(ErrorKind::kMissingFile, "row '" + r.id + "' references missing file " + (m.root / r.path).string());
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  const fs::path dest_dir = absolute_dir_of(path);
  std::string text(kManifestHeader);
  text += '\n';
  for (const auto& r : manifest.records) {
    const fs::path rel = (manifest.root / r.path).lexically_normal().lexically_relative(dest_dir);
    text += r.id + ',' + r.patient_id + ',' + std::string(label_name(r.label)) + ',' + rel.generic_string() + '\n';
  }
  detail::write_text_file(path, text);
}

std::vector<std::uint8_t> encode_patch(const Tensor& patch) {
  if (patch.rank() != 3 || patch.dim(0) != 1) {
    if (patch.rank() != 2) throw Error(ErrorKind::kShapeMismatch, "patch must be [1,H,W] or [H,W]");
  }
  const std::size_t h = patch.dim(patch.rank() - 2), w = patch.dim(patch.rank() - 1);
  detail::ByteWriter out;
  out.text("LPCH");
  out.u32(kPatchFormatVersion);
  out.u32(static_cast<std::uint32_t>(h));
  out.u32(static_cast<std::uint32_t>(w));
  for (double v : patch.data()) out.f32(static_cast<float>(v));
  return out.take();
}

void write_patch(const Tensor& patch, const fs::path& path) { detail::write_file(path, encode_patch(patch)); }

Tensor decode_patch(std::span<const std::uint8_t> bytes, const std::string& what) {
  detail::ByteReader r(bytes, what);
  const auto magic = r.bytes(4);
  if (std::string(magic.begin(), magic.end()) != "LPCH") throw Error(ErrorKind::kBadMagic, what + " does not start with LPCH");
  const std::uint32_t version = r.u32();
  if (version != kPatchFormatVersion) {
    throw Error(ErrorKind::kUnsupportedVersion, what + " has patch format version " + std::to_string(version));
  }
  const std::size_t h = r.u32(), w = r.u32();
  if (h == 0 || w == 0) throw Error(ErrorKind::kDimensionMismatch, what + " declares an empty patch");
  Tensor t({1, h, w});
  for (double& v : t.data()) v = r.f32();
  if (r.remaining() != 0) throw Error(ErrorKind::kDimensionMismatch, what + " has trailing bytes after " +
                                                                         std::to_string(h) + "x" + std::to_string(w) + " values");
  return t;
}

Tensor read_patch(const fs::path& path) { return decode_patch(detail::read_file(path), path.string()); }

std::vector<LesionSample> load_samples(const Manifest& manifest,
                                       std::optional<std::pair<std::size_t, std::size_t>> expected_hw) {
  std::vector<LesionSample> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    Tensor patch;
    try {
      patch = read_patch(manifest.root / r.path);
    } catch (const Error& e) {
      throw Error(e.kind(), "row '" + r.id + "': " + e.what());
    }
    const std::pair<std::size_t, std::size_t> hw{patch.dim(1), patch.dim(2)};
    if (!expected_hw) expected_hw = hw;
    if (hw != *expected_hw) {
      throw Error(ErrorKind::kDimensionMismatch, "row '" + r.id + "' patch is " + std::to_string(hw.first) + "x" +
                                                     std::to_string(hw.second) + ", expected " +
                                                     std::to_string(expected_hw->first) + "x" +
                                                     std::to_string(expected_hw->second));
    }
    out.push_back({r.id, r.patient_id, r.label, std::move(patch), {r.id, 0.0}});
  }
  return out;
}

std::pair<Manifest, Manifest> split_by_patient(const Manifest& manifest, double test_fraction,
                                               std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "test fraction must lie strictly between 0 and 1");
  }
  std::set<std::string> ids;
  for (const auto& r : manifest.records) ids.insert(r.patient_id);
  const std::vector<std::string> patients(ids.begin(), ids.end());
  if (patients.size() < 2) {
    throw Error(ErrorKind::kInvalidArgument, "patient-level split needs at least 2 patients, found " +
                                                 std::to_string(patients.size()));
  }
  // The small tolerance keeps e.g. 0.3 * 10 from rounding up to 4.
  const double want = test_fraction * static_cast<double>(patients.size());
  std::size_t n_test = static_cast<std::size_t>(std::ceil(want - 1e-9));
  n_test = std::clamp<std::size_t>(n_test, 1, patients.size() - 1);

  Pcg32 rng = derive_stream(seed, purpose::kShuffle, 0);
  const auto order = shuffled_indices(patients.size(), rng);
  std::set<std::string> test_patients;
  for (std::size_t i = 0; i < n_test; ++i) test_patients.insert(patients[order[i]]);

  Manifest train{manifest.root, {}}, test{manifest.root, {}};
  for (const auto& r : manifest.records) {
    (test_patients.contains(r.patient_id) ? test : train).records.push_back(r);
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Synthetic lesions

namespace {

Tensor blob_patch(std::size_t n, Pcg32& rng) {
  const double radius = rng.uniform(4.0, 7.0);
  const double amplitude = rng.uniform(0.6, 1.0);
  const double sigma = radius / 2.0;
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  Tensor t({1, n, n});
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
      t.at(0, y, x) = amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  }
  return t;
}

Tensor ring_patch(std::size_t n, Pcg32& rng) {
  const double inner = rng.uniform(2.0, 4.0);
  const double thickness = rng.uniform(2.0, 3.0);
  const double amplitude = rng.uniform(0.6, 1.0);
  const int lobes = 3 + static_cast<int>(rng.below(3));
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double lobulation = rng.uniform(0.1, 0.25);
  const double mid = inner + thickness / 2.0;
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  Tensor t({1, n, n});
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
      const double d = std::hypot(dx, dy);
      const double theta = std::atan2(dy, dx);
      const double boundary = mid * (1.0 + lobulation * std::sin(lobes * theta + phase));
      // Flat-topped band with a one-pixel linear edge.
      t.at(0, y, x) = amplitude * std::clamp(thickness / 2.0 + 0.5 - std::abs(d - boundary), 0.0, 1.0);
    }
  }
  return t;
}

}  // namespace

std::vector<LesionSample> synthesize_samples(std::size_t n_per_class, std::size_t patch_size,
                                             std::uint64_t seed) {
  if (n_per_class == 0) throw Error(ErrorKind::kInvalidArgument, "n_per_class must be >= 1");
  if (patch_size == 0) throw Error(ErrorKind::kInvalidArgument, "patch_size must be >= 1");
  const std::size_t patients_per_class = (n_per_class + 4) / 5;
  std::vector<LesionSample> out;
  out.reserve(2 * n_per_class);
  for (std::size_t k = 0; k < 2 * n_per_class; ++k) {
    const Label label = k % 2 == 0 ? Label::kBenign : Label::kMalignant;
    const std::size_t q = k / 2;
    Pcg32 rng = derive_stream(seed, purpose::kSynth, k);
    Tensor patch = label == Label::kBenign ? blob_patch(patch_size, rng) : ring_patch(patch_size, rng);
    for (double& v : patch.data()) v = clamp01(v + 0.05 * rng.gaussian());
    char id[32], patient[32];
    std::snprintf(id, sizeof id, "s%05zu", k);
    std::snprintf(patient, sizeof patient, "%s%03zu", label == Label::kBenign ? "pb" : "pm", q % patients_per_class);
    out.push_back({id, patient, label, std::move(patch), {id, 0.0}});
  }
  return out;
}

Manifest write_samples(const std::vector<LesionSample>& samples, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir / "patches", ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + (out_dir / "patches").string() + ": " + ec.message());
  Manifest m;
  m.root = fs::absolute(out_dir).lexically_normal();
  for (const auto& s : samples) {
    const fs::path rel = fs::path("patches") / (s.id + ".lpch");
    write_patch(s.patch, out_dir / rel);
    m.records.push_back({s.id, s.patient_id, s.label, rel});
  }
  write_manifest(m, out_dir / "manifest.csv");
  return m;
}

Manifest generate_synthetic(std::size_t n_per_class, std::size_t patch_size, std::uint64_t seed,
                            const fs::path& out_dir) {
  return write_samples(synthesize_samples(n_per_class, patch_size, seed), out_dir);
}

}  // namespace snrs
