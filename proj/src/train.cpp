#include "cdgc/train.hpp"

#include <cstdio>
#include <ostream>

namespace cdgc {

namespace {

/// Fixed-width float formatting so metrics files are byte-stable.
void append_double(std::string& line, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  line += buf;
}

}  // namespace

StepMetrics train_step(SegModel<float>& model, ParamStore<float>& params,
                       OptimState<float>& optim, const SegSample& sample,
                       const TrainSettings& settings, Rng& rng) {
  settings.validate();
  params.zero_grads();

  PipelineOutput<float> out =
      forward_pipeline(model, sample.image, sample.labels, /*training=*/true, rng);

  TensorF l_c = cross_entropy(out.coarse_logits, sample.labels);
  TensorF l_a = cross_entropy(out.aux_logits, sample.labels);
  TensorF l_f = TensorF::zeros({1});
  if (out.refined_logits) {
    std::size_t valid = 0;
    for (std::int32_t y : sample.labels) {
      if (y != kIgnoreLabel) ++valid;
    }
    const std::size_t min_kept = (valid + settings.ohem_min_kept_div - 1) / settings.ohem_min_kept_div;
    l_f = ohem_loss(*out.refined_logits, sample.labels, settings.ohem_threshold, min_kept);
  }
  TensorF total = total_loss(l_c, l_f, l_a, settings.weights);

  StepMetrics metrics;
  metrics.iter = optim.iter;
  metrics.lr = poly_lr(optim);
  metrics.l_c = static_cast<double>(l_c.item());
  metrics.l_f = static_cast<double>(l_f.item());
  metrics.l_a = static_cast<double>(l_a.item());
  metrics.l_total = static_cast<double>(total.item());

  total.backward();
  sgd_step(params, optim);
  return metrics;
}

void write_metrics_header(std::ostream& out) { out << "iter,lr,l_c,l_f,l_a,l_total\n"; }

void write_metrics_row(std::ostream& out, const StepMetrics& row) {
  std::string line = std::to_string(row.iter);
  for (double v : {row.lr, row.l_c, row.l_f, row.l_a, row.l_total}) {
    line += ',';
    append_double(line, v);
  }
  line += '\n';
  out << line;
}

std::vector<StepMetrics> train_loop(SegModel<float>& model, ParamStore<float>& params,
                                    OptimState<float>& optim,
                                    const std::vector<SegSample>& dataset,
                                    const TrainSettings& settings, Rng& rng,
                                    std::ostream* metrics_out) {
  settings.validate();
  if (dataset.empty()) throw DataError("train_loop: empty training set");
  if (metrics_out) write_metrics_header(*metrics_out);

  std::vector<StepMetrics> history;
  history.reserve(settings.steps);
  for (std::size_t step = 0; step < settings.steps; ++step) {
    const std::size_t pick = static_cast<std::size_t>(rng.uniform_int(dataset.size()));
    StepMetrics row = train_step(model, params, optim, dataset[pick], settings, rng);
    if (metrics_out) write_metrics_row(*metrics_out, row);
    history.push_back(row);
  }
  return history;
}

}  // namespace cdgc
