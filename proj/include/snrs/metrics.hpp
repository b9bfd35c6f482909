#pragma once

#include <cstddef>
#include <optional>
#include <string>

namespace snrs {

/// Binary confusion counts with malignant as the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  void add(bool actual_positive, bool predicted_positive);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Metrics with an undefined denominator are std::nullopt and render as
/// "N/A"; they are never reported as 0.
struct EvaluationReport {
  std::string model_id;
  ConfusionMatrix confusion;
  std::size_t samples = 0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  double accuracy = 0.0;
};

EvaluationReport make_report(const ConfusionMatrix& confusion, std::string model_id = {});

}  // namespace snrs
