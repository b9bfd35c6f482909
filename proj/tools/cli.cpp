#include "snrs/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "snrs/dataset.hpp"
#include "snrs/error.hpp"
#include "snrs/evaluation.hpp"
#include "snrs/sequencer.hpp"
#include "snrs/trainer.hpp"

namespace snrs {
namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

struct GenerateArgs {
  std::string out;
  std::size_t per_class = 100;
  std::size_t patch_size = 32;
  std::uint64_t seed = 0;
};

struct AugmentArgs {
  std::string manifest, out;
  int malignant_step = 45;
  int benign_step = 10;
};

struct SplitArgs {
  std::string manifest, out_train, out_test;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string manifest, val_manifest, out_model, history;
  std::size_t epochs = 30;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch = 32;
  double connectivity_p = 0.5;
  std::uint64_t seed = 0;
};

struct EvaluateArgs {
  std::string model, manifest, out;
  std::string format = "human";
};

struct InferArgs {
  std::string model, patch, emit_sequence;
};

int do_generate(const GenerateArgs& a, std::ostream& out) {
  const Manifest m = generate_synthetic(a.per_class, a.patch_size, a.seed, a.out);
  out << "wrote " << m.records.size() << " synthetic lesions to " << (fs::path(a.out) / "manifest.csv").string()
      << "\n";
  return kExitOk;
}

int do_augment(const AugmentArgs& a, std::ostream& out) {
  AugmentPolicy policy;
  policy.malignant_step_deg = a.malignant_step;
  policy.benign_step_deg = a.benign_step;
  validate(policy);
  const Manifest m = read_manifest(a.manifest);
  const auto samples = load_samples(m);
  std::vector<LesionSample> augmented;
  for (const auto& s : samples) {
    auto copies = augment(s, policy);
    std::move(copies.begin(), copies.end(), std::back_inserter(augmented));
  }
  write_samples(augmented, a.out);
  out << "augmented " << samples.size() << " lesions into " << augmented.size() << " samples\n";
  return kExitOk;
}

int do_split(const SplitArgs& a, std::ostream& out) {
  const Manifest m = read_manifest(a.manifest);
  const auto [train, test] = split_by_patient(m, a.test_fraction, a.seed);
  write_manifest(train, a.out_train);
  write_manifest(test, a.out_test);
  out << "train " << train.records.size() << " samples, test " << test.records.size() << " samples\n";
  return kExitOk;
}

int do_train(const TrainArgs& a, std::ostream& out) {
  const Manifest m = read_manifest(a.manifest);
  if (m.records.empty()) throw Error(ErrorKind::kEmptyDataset, "empty dataset: " + a.manifest + " has no records");
  const auto samples = load_samples(m);

  SequencerConfig config;
  config.input_height = samples.front().patch.dim(1);
  config.input_width = samples.front().patch.dim(2);
  config.connectivity_p = a.connectivity_p;
  config.seed = a.seed;

  std::vector<LesionSample> val;
  if (!a.val_manifest.empty()) {
    val = load_samples(read_manifest(a.val_manifest), std::pair{config.input_height, config.input_width});
  }

  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.momentum = a.momentum;
  tc.batch_size = a.batch;
  tc.epochs = a.epochs;
  tc.seed = a.seed;

  Sequencer model = build(config);
  const TrainHistory history = train(model, samples, val.empty() ? nullptr : &val, tc);
  save(model, a.out_model);
  if (!a.history.empty()) write_text(a.history, history_csv(history));
  for (const auto& e : history.epochs) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch %3zu  loss %.6f  train_acc %.6f\n", e.epoch, e.loss, e.train_accuracy);
    out << line;
  }
  out << "saved " << model_id(model) << " to " << a.out_model << "\n";
  return kExitOk;
}

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const ReportFormat format = parse_report_format(a.format);
  const Sequencer model = load(a.model);
  const EvaluationReport report = evaluate(model, read_manifest(a.manifest));
  const std::string text = report_format(report, format);
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
  }
  return kExitOk;
}

int do_infer(const InferArgs& a, std::ostream& out) {
  const Sequencer model = load(a.model);
  const Tensor patch = read_patch(a.patch);
  const RadiomicSequence seq = extract_sequence(model, patch, fs::path(a.patch).stem().string());
  const Prediction p = prediction_from_logits(apply_head(model, seq.values));
  char line[128];
  out << "label " << label_name(static_cast<Label>(p.label)) << "\n";
  std::snprintf(line, sizeof line, "score_benign %.6f\nscore_malignant %.6f\n", p.scores[0], p.scores[1]);
  out << line;
  if (!a.emit_sequence.empty()) {
    std::string csv = "index,value\n";
    for (std::size_t i = 0; i < seq.values.size(); ++i) {
      std::snprintf(line, sizeof line, "%zu,%.17g\n", i, seq.values[i]);
      csv += line;
    }
    write_text(a.emit_sequence, csv);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"StochasticNet radiomic sequencer: discover, apply and evaluate", "snrs"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic lesion dataset");
  generate->add_option("--out", gen.out, "Output directory")->required();
  generate->add_option("--per-class", gen.per_class, "Lesions per class")->capture_default_str()->check(CLI::PositiveNumber);
  generate->add_option("--patch-size", gen.patch_size, "Patch side length in pixels")->capture_default_str()->check(CLI::PositiveNumber);
  generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();

  AugmentArgs aug;
  auto* augment_cmd = app.add_subcommand("augment", "Rotate every lesion by class-dependent increments");
  augment_cmd->add_option("--manifest", aug.manifest, "Input manifest")->required();
  augment_cmd->add_option("--out", aug.out, "Output directory")->required();
  augment_cmd->add_option("--malignant-step", aug.malignant_step, "Malignant rotation step (degrees)")->capture_default_str();
  augment_cmd->add_option("--benign-step", aug.benign_step, "Benign rotation step (degrees)")->capture_default_str();

  SplitArgs spl;
  auto* split = app.add_subcommand("split", "Patient-level train/test split");
  split->add_option("--manifest", spl.manifest, "Input manifest")->required();
  split->add_option("--test-fraction", spl.test_fraction, "Fraction of patients held out")->capture_default_str();
  split->add_option("--seed", spl.seed, "Random seed")->capture_default_str();
  split->add_option("--out-train", spl.out_train, "Train manifest to write")->required();
  split->add_option("--out-test", spl.out_test, "Test manifest to write")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Discover a radiomic sequencer");
  train_cmd->add_option("--manifest", tr.manifest, "Training manifest")->required();
  train_cmd->add_option("--val-manifest", tr.val_manifest, "Validation manifest");
  train_cmd->add_option("--out-model", tr.out_model, "Model file to write")->required();
  train_cmd->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", tr.momentum, "Momentum")->capture_default_str();
  train_cmd->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  train_cmd->add_option("--connectivity-p", tr.connectivity_p, "Neural connectivity probability")->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--history", tr.history, "Training history CSV to write");

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Sensitivity, specificity and accuracy on a manifest");
  evaluate_cmd->add_option("--model", ev.model, "Model file")->required();
  evaluate_cmd->add_option("--manifest", ev.manifest, "Test manifest")->required();
  evaluate_cmd->add_option("--format", ev.format, "human|json|csv")
      ->capture_default_str()
      ->check(CLI::IsMember({"human", "json", "csv"}));
  evaluate_cmd->add_option("--out", ev.out, "Write the report here instead of standard output");

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "Classify one patch and optionally emit its radiomic sequence");
  infer->add_option("--model", inf.model, "Model file")->required();
  infer->add_option("--patch", inf.patch, "Patch file")->required();
  infer->add_option("--emit-sequence", inf.emit_sequence, "Radiomic sequence CSV to write");

  std::string describe_model;
  auto* describe_cmd = app.add_subcommand("describe", "Connectivity, parameter and MAC accounting of a model");
  describe_cmd->add_option("--model", describe_model, "Model file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (generate->parsed()) return do_generate(gen, out);
    if (augment_cmd->parsed()) return do_augment(aug, out);
    if (split->parsed()) return do_split(spl, out);
    if (train_cmd->parsed()) return do_train(tr, out);
    if (evaluate_cmd->parsed()) return do_evaluate(ev, out);
    if (infer->parsed()) return do_infer(inf, out);
    if (describe_cmd->parsed()) {
      out << format_description(describe(load(describe_model)));
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kDivergence ? kExitDivergence : kExitDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace snrs
