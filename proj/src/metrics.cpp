#include "snrs/metrics.hpp"

#include "snrs/error.hpp"

namespace snrs {

void ConfusionMatrix::add(bool actual_positive, bool predicted_positive) {
  if (actual_positive) {
    ++(predicted_positive ? tp : fn);
  } else {
    ++(predicted_positive ? fp : tn);
  }
}

EvaluationReport make_report(const ConfusionMatrix& cm, std::string model_id) {
  if (cm.total() == 0) throw Error(ErrorKind::kEmptyDataset, "cannot report metrics over zero samples");
  EvaluationReport r;
  r.model_id = std::move(model_id);
  r.confusion = cm;
  r.samples = cm.total();
  if (cm.tp + cm.fn > 0) r.sensitivity = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  if (cm.tn + cm.fp > 0) r.specificity = static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  return r;
}

}  // namespace snrs
