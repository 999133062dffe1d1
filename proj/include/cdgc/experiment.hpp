#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdgc/dataset.hpp"
#include "cdgc/metrics.hpp"
#include "cdgc/model.hpp"
#include "cdgc/train.hpp"

namespace cdgc {

/// Everything one training run needs, readable from a flat key=value file.
struct ExperimentConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_classes = 3;
  std::size_t in_channels = 3;
  std::size_t feature_channels = 16;
  double noise = 0.35;
  std::size_t train_samples = 500;
  std::size_t eval_samples = 100;

  TrainSettings train;
  double lr = 0.01;
  double power = 0.9;
  double momentum = 0.9;
  double weight_decay = 0.0005;

  std::string variant = "class-ds:1.0";
  std::string fusion = "concat";
  std::uint64_t seed = 1;
  std::uint64_t eval_seed = 9000;  // shared across runs so scores are comparable
  std::filesystem::path out = "run";
  std::filesystem::path results;  // defaults to <out>/results.csv when empty

  BasicNetConfig net_config() const;
  void validate() const;
};

/// Parse `key=value` lines; '#' starts a comment, blank lines are skipped,
/// unknown keys are configuration errors.
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Apply one `key=value` assignment (shared by the file parser and tests).
void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value);

struct EvalResult {
  double coarse_miou = 0.0;
  double refined_miou = 0.0;
  std::vector<double> coarse_per_class;
  std::vector<double> refined_per_class;
};

/// Accumulate confusion over the split and report coarse and refined mIoU.
/// Under the coarse-only variant the refined numbers repeat the coarse ones.
EvalResult evaluate(SegModel<float>& model, const std::vector<SegSample>& samples);

struct ExperimentResult {
  EvalResult eval;
  std::filesystem::path out_dir;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path metrics_csv;
  std::filesystem::path results_csv;
};

/// Train per the config, evaluate on the held-out split, write metrics.csv
/// and a checkpoint under cfg.out, and append one
/// `variant,seed,coarse_miou,refined_miou` row to the results table.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace cdgc
