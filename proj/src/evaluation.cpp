#include "snrs/evaluation.hpp"

#include <cstdio>
#include <json.hpp>

#include "snrs/error.hpp"
#include "snrs/trainer.hpp"

namespace snrs {

using nlohmann::json;

EvaluationReport evaluate(const Sequencer& model, std::span<const LesionSample> samples) {
  if (samples.empty()) throw Error(ErrorKind::kEmptyDataset, "test set is empty");
  return make_report(confusion(model, samples), model_id(model));
}

EvaluationReport evaluate(const Sequencer& model, const Manifest& manifest) {
  if (manifest.records.empty()) throw Error(ErrorKind::kEmptyDataset, "test manifest is empty");
  const auto samples = load_samples(manifest, std::pair{model.config.input_height, model.config.input_width});
  return evaluate(model, samples);
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "human") return ReportFormat::kHuman;
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  throw Error(ErrorKind::kInvalidArgument, "unknown report format '" + name + "'");
}

namespace {

std::string percent(std::optional<double> v) {
  if (!v) return "N/A";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * *v);
  return buf;
}

std::string fraction(std::optional<double> v) {
  if (!v) return "N/A";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

json optional_json(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string report_format(const EvaluationReport& r, ReportFormat format) {
  if (r.samples == 0 || r.confusion.total() != r.samples) {
    throw Error(ErrorKind::kInvalidArgument, "report must cover at least one sample");
  }
  const ConfusionMatrix& cm = r.confusion;
  switch (format) {
    case ReportFormat::kHuman: {
      char buf[512];
      std::snprintf(buf, sizeof buf,
                    "model    %s\n"
                    "samples  %zu (tp %zu, fn %zu, tn %zu, fp %zu)\n"
                    "\n"
                    "      | Sensitivity | Specificity | Accuracy\n"
                    "------+-------------+-------------+---------\n"
                    "SNRS  | %11s | %11s | %8s\n",
                    r.model_id.empty() ? "-" : r.model_id.c_str(), r.samples, cm.tp, cm.fn, cm.tn, cm.fp,
                    percent(r.sensitivity).c_str(), percent(r.specificity).c_str(), percent(r.accuracy).c_str());
      return buf;
    }
    case ReportFormat::kJson: {
      json j;
      j["model"] = r.model_id;
      j["samples"] = r.samples;
      j["tp"] = cm.tp;
      j["fp"] = cm.fp;
      j["tn"] = cm.tn;
      j["fn"] = cm.fn;
      j["sensitivity"] = optional_json(r.sensitivity);
      j["specificity"] = optional_json(r.specificity);
      j["accuracy"] = r.accuracy;
      return j.dump(2) + "\n";
    }
    case ReportFormat::kCsv:
      return "model,samples,tp,fp,tn,fn,sensitivity,specificity,accuracy\n" + r.model_id + "," +
             std::to_string(r.samples) + "," + std::to_string(cm.tp) + "," + std::to_string(cm.fp) + "," +
             std::to_string(cm.tn) + "," + std::to_string(cm.fn) + "," + fraction(r.sensitivity) + "," +
             fraction(r.specificity) + "," + fraction(r.accuracy) + "\n";
  }
  return {};
}

EvaluationReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ConfusionMatrix cm;
    cm.tp = j.at("tp").get<std::size_t>();
    cm.fp = j.at("fp").get<std::size_t>();
    cm.tn = j.at("tn").get<std::size_t>();
    cm.fn = j.at("fn").get<std::size_t>();
    EvaluationReport r = make_report(cm, j.at("model").get<std::string>());
    if (j.at("samples").get<std::size_t>() != r.samples) {
      throw Error(ErrorKind::kInvalidArgument, "report sample count disagrees with its confusion counts");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, std::string("report JSON: ") + e.what());
  }
}

}  // namespace snrs
