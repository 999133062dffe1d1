#pragma once

#include <iosfwd>
#include <vector>

#include "cdgc/dataset.hpp"
#include "cdgc/loss.hpp"
#include "cdgc/model.hpp"
#include "cdgc/optim.hpp"
#include "cdgc/params.hpp"
#include "cdgc/rng.hpp"

namespace cdgc {

/// Knobs of the training loop beyond the optimizer's own state.
struct TrainSettings {
  std::size_t steps = 2000;
  LossWeights weights;
  double ohem_threshold = 0.7;
  std::size_t ohem_min_kept_div = 16;  // min_kept = ceil(valid_pixels / this)

  void validate() const {
    weights.validate();
    if (steps == 0) throw ConfigError("training needs at least one step");
    if (ohem_min_kept_div == 0) throw ConfigError("ohem_min_kept_div must be positive");
  }
};

/// What one optimization step reports; mirrors the metrics CSV columns.
struct StepMetrics {
  std::size_t iter = 0;
  double lr = 0.0;
  double l_c = 0.0;
  double l_f = 0.0;
  double l_a = 0.0;
  double l_total = 0.0;
};

/// One sample through the pipeline: forward, the three losses, backward, SGD
/// update.  Returns the losses and the learning rate the update used.
StepMetrics train_step(SegModel<float>& model, ParamStore<float>& params,
                       OptimState<float>& optim, const SegSample& sample,
                       const TrainSettings& settings, Rng& rng);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const StepMetrics& row);

/// Run `settings.steps` single-sample steps over a uniformly drawn training
/// sample each time, optionally streaming metrics rows to `metrics_out`.
std::vector<StepMetrics> train_loop(SegModel<float>& model, ParamStore<float>& params,
                                    OptimState<float>& optim,
                                    const std::vector<SegSample>& dataset,
                                    const TrainSettings& settings, Rng& rng,
                                    std::ostream* metrics_out);

}  // namespace cdgc
