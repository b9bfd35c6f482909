#include "snrs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "snrs/error.hpp"

namespace snrs {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw Error(ErrorKind::kShapeMismatch, "zero-length dimension in " + shape_to_string(shape_));
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  for (auto d : shape_) {
    if (d == 0) throw Error(ErrorKind::kShapeMismatch, "zero-length dimension in " + shape_to_string(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw Error(ErrorKind::kShapeMismatch,
                "shape " + shape_to_string(shape_) + " holds " + std::to_string(shape_size(shape_)) +
                    " values, got " + std::to_string(data_.size()));
  }
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kShapeMismatch: return "shape mismatch";
    case ErrorKind::kInvalidConfig: return "invalid config";
    case ErrorKind::kBadMagic: return "bad magic";
    case ErrorKind::kUnsupportedVersion: return "unsupported version";
    case ErrorKind::kTruncated: return "truncated file";
    case ErrorKind::kChecksumMismatch: return "checksum mismatch";
    case ErrorKind::kLayoutMismatch: return "mask/weight shape disagreement";
    case ErrorKind::kInvariantViolation: return "invariant violation";
    case ErrorKind::kMissingFile: return "missing file";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kDimensionMismatch: return "dimension mismatch";
    case ErrorKind::kBadLabel: return "bad label";
    case ErrorKind::kBadManifest: return "bad manifest";
    case ErrorKind::kEmptyDataset: return "empty dataset";
    case ErrorKind::kDivergence: return "training diverged";
  }
  return "unknown error";
}

}  // namespace snrs
