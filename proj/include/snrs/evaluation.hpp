#pragma once

#include <span>
#include <string>

#include "snrs/dataset.hpp"
#include "snrs/metrics.hpp"
#include "snrs/sequencer.hpp"

namespace snrs {

EvaluationReport evaluate(const Sequencer& model, std::span<const LesionSample> samples);
EvaluationReport evaluate(const Sequencer& model, const Manifest& manifest);

enum class ReportFormat { kHuman, kJson, kCsv };

ReportFormat parse_report_format(const std::string& name);

// human: a sensitivity/specificity/accuracy table in 2-decimal percentages
// json:  counts plus fractions (null when undefined)
// csv:   header line plus one row
// Counts are authoritative; every format can be rebuilt from them.
std::string report_format(const EvaluationReport& report, ReportFormat format);

/// Rebuilds a report from report_format(..., kJson) output.
EvaluationReport report_from_json(const std::string& text);

}  // namespace snrs
