#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snrs/dataset.hpp"
#include "snrs/metrics.hpp"
#include "snrs/sequencer.hpp"

namespace snrs {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::vector<double> class_weights;  // empty: every class weighs 1

  void validate(std::size_t num_classes) const;
};

/// Mirrors the trainable parameters of a Sequencer. Used for gradients and
/// for momentum buffers.
struct ParameterSet {
  std::vector<Tensor> conv_weights;
  std::vector<Tensor> conv_biases;
  Tensor head_weights;
  Tensor head_bias;

  static ParameterSet zeros_like(const Sequencer& model);
  void add(const ParameterSet& other, double scale = 1.0);
};

struct SampleGradient {
  double loss = 0.0;
  Tensor logits;
  ParameterSet grads;
};

/// Loss and exact gradients of softmax cross-entropy for one patch.
SampleGradient backprop(const Sequencer& model, const Tensor& patch, std::size_t label);

struct StepResult {
  double loss = 0.0;         // mean (class-weighted) batch loss
  std::size_t correct = 0;   // samples classified correctly before the update
};

/// One momentum-SGD step on the batch-averaged gradient:
///   v <- momentum * v - lr * g;  w <- w + v
/// applied to active conv weights, conv biases and the head. Masked slots
/// are skipped entirely so they stay exactly zero. Throws kDivergence on a
/// non-finite loss.
StepResult sgd_step(Sequencer& model, std::span<const LesionSample* const> batch, const TrainConfig& config,
                    ParameterSet& velocity);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // sample-weighted mean of the epoch's batch losses
  double train_accuracy = 0.0;  // running: each sample scored just before its batch update
  std::optional<EvaluationReport> validation;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

/// Each epoch shuffles with stream (seed, "shuffle", epoch index), walks
/// batches in order (the last one may be short) and records history.
TrainHistory train(Sequencer& model, const std::vector<LesionSample>& train_set,
                   const std::vector<LesionSample>* val_set, const TrainConfig& config);

/// "epoch,loss,train_acc[,val_sens,val_spec,val_acc]" with 6 decimals.
std::string history_csv(const TrainHistory& history);

struct Prediction {
  std::size_t label = 0;       // argmax; ties go to the lower index
  std::vector<double> scores;  // softmax probabilities
};

Prediction prediction_from_logits(const Tensor& logits);
Prediction predict(const Sequencer& model, const Tensor& patch);
std::vector<Prediction> predict(const Sequencer& model, std::span<const LesionSample> samples);

ConfusionMatrix confusion(const Sequencer& model, std::span<const LesionSample> samples);

}  // namespace snrs
