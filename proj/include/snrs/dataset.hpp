#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "snrs/tensor.hpp"

namespace snrs {

enum class Label : std::uint8_t { kBenign = 0, kMalignant = 1 };

std::string_view label_name(Label label);
Label parse_label(std::string_view text);  // throws kBadLabel
inline std::size_t class_index(Label label) { return static_cast<std::size_t>(label); }

struct Provenance {
  std::string source_id;
  double rotation_deg = 0.0;
};

struct LesionSample {
  std::string id;
  std::string patient_id;
  Label label = Label::kBenign;
  Tensor patch;  // [1, H, W], values in [0, 1]
  Provenance provenance;
};

/// Rotation about ((W-1)/2, (H-1)/2). Multiples of 90 degrees (square
/// patches) are exact index permutations; other angles sample the source by
/// inverse-mapped bilinear interpolation with zero outside the patch. The
/// result is clamped to [0, 1].
Tensor rotate_patch(const Tensor& patch, double angle_deg);

struct AugmentPolicy {
  int malignant_step_deg = 45;
  int benign_step_deg = 10;
  bool include_zero = true;

  int step_for(Label label) const {
    return label == Label::kMalignant ? malignant_step_deg : benign_step_deg;
  }
};

void validate(const AugmentPolicy& policy);
std::vector<int> augment_angles(Label label, const AugmentPolicy& policy);

/// One rotated copy per angle in {0, step, ..., 360 - step}; ids are
/// "<source>_r<angle>" with the angle zero-padded to three digits.
std::vector<LesionSample> augment(const LesionSample& sample, const AugmentPolicy& policy);

struct ManifestRecord {
  std::string id;
  std::string patient_id;
  Label label = Label::kBenign;
  std::filesystem::path path;  // relative to Manifest::root
};

struct Manifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;
};

// CSV, header "id,patient_id,label,path", LF line endings.
Manifest read_manifest(const std::filesystem::path& path);
/// Record paths are rewritten relative to the destination's directory.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Patch file, little-endian: "LPCH" | u32 version=1 | u32 height | u32 width
// | height*width float32, row-major.
inline constexpr std::uint32_t kPatchFormatVersion = 1;
Tensor read_patch(const std::filesystem::path& path);
Tensor decode_patch(std::span<const std::uint8_t> bytes, const std::string& what = "patch");
void write_patch(const Tensor& patch, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_patch(const Tensor& patch);

/// Reads every referenced patch. If `expected_hw` is set, patches of other
/// sizes are rejected with kDimensionMismatch; otherwise all patches must
/// match the first one.
std::vector<LesionSample> load_samples(
    const Manifest& manifest,
    std::optional<std::pair<std::size_t, std::size_t>> expected_hw = std::nullopt);

/// Patients are shuffled with stream (seed, "shuffle", 0); the first
/// ceil(test_fraction * P) form the test side.
std::pair<Manifest, Manifest> split_by_patient(const Manifest& manifest, double test_fraction,
                                               std::uint64_t seed);

/// Desk-scale stand-in for annotated CT lesions. Class 0 is a centered
/// Gaussian blob, class 1 a lobulated ring; both carry N(0, 0.05) noise.
/// Sample k uses stream (seed, "synth", k); samples alternate by class.
std::vector<LesionSample> synthesize_samples(std::size_t n_per_class, std::size_t patch_size,
                                             std::uint64_t seed);

/// synthesize_samples written as patches/<id>.lpch plus manifest.csv under
/// `out_dir`. Returns the manifest.
Manifest generate_synthetic(std::size_t n_per_class, std::size_t patch_size, std::uint64_t seed,
                            const std::filesystem::path& out_dir);

/// Writes the samples' patches under out_dir/patches and out_dir/manifest.csv.
Manifest write_samples(const std::vector<LesionSample>& samples, const std::filesystem::path& out_dir);

}  // namespace snrs
