#include "snrs/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "snrs/error.hpp"
#include "snrs/layers.hpp"
#include "snrs/rng.hpp"

namespace snrs {

void TrainConfig::validate(std::size_t num_classes) const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::kInvalidArgument, "learning_rate must be > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::kInvalidArgument, "momentum must lie in [0,1)");
  if (batch_size == 0) throw Error(ErrorKind::kInvalidArgument, "batch_size must be >= 1");
  if (!class_weights.empty()) {
    if (class_weights.size() != num_classes) {
      throw Error(ErrorKind::kInvalidArgument, "class_weights needs one entry per class");
    }
    for (double w : class_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::kInvalidArgument, "class weights must be finite and >= 0");
    }
  }
}

ParameterSet ParameterSet::zeros_like(const Sequencer& model) {
  ParameterSet p;
  for (const auto& layer : model.layers) {
    p.conv_weights.emplace_back(layer.weights.shape());
    p.conv_biases.emplace_back(layer.bias.shape());
  }
  p.head_weights = Tensor(model.head.weights.shape());
  p.head_bias = Tensor(model.head.bias.shape());
  return p;
}

void ParameterSet::add(const ParameterSet& other, double scale) {
  auto axpy = [scale](Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  };
  for (std::size_t l = 0; l < conv_weights.size(); ++l) {
    axpy(conv_weights[l], other.conv_weights[l]);
    axpy(conv_biases[l], other.conv_biases[l]);
  }
  axpy(head_weights, other.head_weights);
  axpy(head_bias, other.head_bias);
}

namespace {

struct Forward {
  double loss = 0.0;
  Tensor logits;
};

// Adds scale * (this patch's gradients) into acc.
Forward accumulate_gradients(const Sequencer& model, const Tensor& patch, std::size_t label, double scale,
                             ParameterSet& acc) {
  ForwardTrace trace = forward_traced(model, patch);
  LossResult lr = softmax_cross_entropy(trace.logits, label);

  DenseGradients head = fully_connected_backward(trace.features, model.head.weights, lr.grad_logits);
  for (std::size_t i = 0; i < head.weights.size(); ++i) acc.head_weights[i] += scale * head.weights[i];
  for (std::size_t i = 0; i < head.bias.size(); ++i) acc.head_bias[i] += scale * head.bias[i];

  // Gradient w.r.t. the last layer's (possibly pooled) output.
  const LayerTrace& last = trace.layers.back();
  Shape last_shape = last.activation.shape();
  if (!last.pool_argmax.empty()) last_shape = {last_shape[0], last_shape[1] / 2, last_shape[2] / 2};
  Tensor grad = head.input.reshaped(last_shape);

  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const LayerTrace& lt = trace.layers[l];
    const ConvLayer& layer = model.layers[l];
    if (!lt.pool_argmax.empty()) grad = maxpool2_backward(lt.activation.shape(), lt.pool_argmax, grad);
    grad = relu_backward(lt.pre_activation, grad);
    Tensor grad_input;
    if (l > 0) grad_input = Tensor(lt.input.shape());
    conv2d_masked_backward_accumulate(lt.input, layer.weights, layer.taps, grad, scale, acc.conv_weights[l],
                                      acc.conv_biases[l], l > 0 ? &grad_input : nullptr);
    grad = std::move(grad_input);
  }
  return {lr.loss, std::move(trace.logits)};
}

}  // namespace

SampleGradient backprop(const Sequencer& model, const Tensor& patch, std::size_t label) {
  SampleGradient out;
  out.grads = ParameterSet::zeros_like(model);
  Forward f = accumulate_gradients(model, patch, label, 1.0, out.grads);
  out.loss = f.loss;
  out.logits = std::move(f.logits);
  return out;
}

StepResult sgd_step(Sequencer& model, std::span<const LesionSample* const> batch, const TrainConfig& config,
                    ParameterSet& velocity) {
  if (batch.empty()) throw Error(ErrorKind::kEmptyDataset, "empty batch");
  config.validate(model.config.num_classes);

  ParameterSet sum = ParameterSet::zeros_like(model);
  double loss_sum = 0.0;
  StepResult result;
  for (const LesionSample* s : batch) {
    const std::size_t label = class_index(s->label);
    const double cw = config.class_weights.empty() ? 1.0 : config.class_weights.at(label);
    const Forward f = accumulate_gradients(model, s->patch, label, cw, sum);
    if (!std::isfinite(f.loss)) throw Error(ErrorKind::kDivergence, "non-finite loss on sample '" + s->id + "'");
    loss_sum += cw * f.loss;
    if (prediction_from_logits(f.logits).label == label) ++result.correct;
  }
  const double n = static_cast<double>(batch.size());
  const double lr = config.learning_rate, mu = config.momentum;

  auto update = [&](Tensor& w, Tensor& v, const Tensor& g, const ConnectivityMask* mask) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (mask && !mask->active(i)) continue;
      v[i] = mu * v[i] - lr * (g[i] / n);
      w[i] += v[i];
    }
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    ConvLayer& layer = model.layers[l];
    update(layer.weights, velocity.conv_weights[l], sum.conv_weights[l], &layer.mask);
    update(layer.bias, velocity.conv_biases[l], sum.conv_biases[l], nullptr);
  }
  update(model.head.weights, velocity.head_weights, sum.head_weights, nullptr);
  update(model.head.bias, velocity.head_bias, sum.head_bias, nullptr);

  result.loss = loss_sum / n;
  if (!std::isfinite(result.loss)) throw Error(ErrorKind::kDivergence, "non-finite batch loss");
  return result;
}

TrainHistory train(Sequencer& model, const std::vector<LesionSample>& train_set,
                   const std::vector<LesionSample>* val_set, const TrainConfig& config) {
  config.validate(model.config.num_classes);
  if (train_set.empty()) throw Error(ErrorKind::kEmptyDataset, "training set is empty");
  const Shape want = model.input_shape();
  for (const auto& s : train_set) {
    if (s.patch.shape() != want) {
      throw Error(ErrorKind::kShapeMismatch, "sample '" + s.id + "' has shape " + shape_to_string(s.patch.shape()) +
                                                 ", model expects " + shape_to_string(want));
    }
  }

  TrainHistory history;
  ParameterSet velocity = ParameterSet::zeros_like(model);
  std::vector<const LesionSample*> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Pcg32 rng = derive_stream(config.seed, purpose::kShuffle, epoch);
    const auto order = shuffled_indices(train_set.size(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      try {
        const StepResult step = sgd_step(model, batch, config, velocity);
        loss_sum += step.loss * static_cast<double>(batch.size());
        correct += step.correct;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kDivergence) throw;
        throw Error(ErrorKind::kDivergence, "epoch " + std::to_string(epoch + 1) + " batch " +
                                                std::to_string(batch_index + 1) + ": " + e.what());
      }
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (val_set && !val_set->empty()) rec.validation = make_report(confusion(model, *val_set));
    history.epochs.push_back(std::move(rec));
  }
  return history;
}

std::string history_csv(const TrainHistory& history) {
  bool with_val = false;
  for (const auto& e : history.epochs) with_val = with_val || e.validation.has_value();
  std::string out = with_val ? "epoch,loss,train_acc,val_sens,val_spec,val_acc\n" : "epoch,loss,train_acc\n";
  auto fmt = [](std::optional<double> v) {
    if (!v) return std::string("NA");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  for (const auto& e : history.epochs) {
    out += std::to_string(e.epoch) + "," + fmt(e.loss) + "," + fmt(e.train_accuracy);
    if (with_val) {
      if (e.validation) {
        out += "," + fmt(e.validation->sensitivity) + "," + fmt(e.validation->specificity) + "," +
               fmt(e.validation->accuracy);
      } else {
        out += ",NA,NA,NA";
      }
    }
    out += "\n";
  }
  return out;
}

Prediction prediction_from_logits(const Tensor& logits) {
  Prediction p;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[p.label]) p.label = k;
  }
  p.scores = softmax(logits).values();
  return p;
}

Prediction predict(const Sequencer& model, const Tensor& patch) {
  return prediction_from_logits(forward(model, patch));
}

std::vector<Prediction> predict(const Sequencer& model, std::span<const LesionSample> samples) {
  std::vector<Prediction> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(predict(model, s.patch));
  return out;
}

ConfusionMatrix confusion(const Sequencer& model, std::span<const LesionSample> samples) {
  ConfusionMatrix cm;
  for (const auto& s : samples) {
    const std::size_t predicted = predict(model, s.patch).label;
    cm.add(s.label == Label::kMalignant, predicted == class_index(Label::kMalignant));
  }
  return cm;
}

}  // namespace snrs
