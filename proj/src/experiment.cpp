#include "cdgc/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdgc/checkpoint.hpp"
#include "cdgc/graph.hpp"

namespace cdgc {

namespace {

std::size_t to_count(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " wants a non-negative integer, got '" + value + "'");
  }
}

double to_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " wants a number, got '" + value + "'");
  }
}

std::string format_miou(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

BasicNetConfig ExperimentConfig::net_config() const {
  BasicNetConfig net;
  net.in_channels = in_channels;
  net.feature_channels = feature_channels;
  net.num_classes = num_classes;
  net.trunk = BasicNetConfig::default_trunk(feature_channels);
  net.aux_tap = 2;
  return net;
}

void ExperimentConfig::validate() const {
  train.validate();
  net_config().validate();
  VariantSpec::parse(variant);
  parse_fusion(fusion);
  if (train_samples == 0 || eval_samples == 0) {
    throw ConfigError("config: train_samples and eval_samples must be positive");
  }
  if (lr <= 0.0) throw ConfigError("config: lr must be positive");
  if (out.empty()) throw ConfigError("config: out directory must be set");
}

void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "height") cfg.height = to_count(key, value);
  else if (key == "width") cfg.width = to_count(key, value);
  else if (key == "num_classes") cfg.num_classes = to_count(key, value);
  else if (key == "in_channels") cfg.in_channels = to_count(key, value);
  else if (key == "feature_channels") cfg.feature_channels = to_count(key, value);
  else if (key == "noise") cfg.noise = to_real(key, value);
  else if (key == "train_samples") cfg.train_samples = to_count(key, value);
  else if (key == "eval_samples") cfg.eval_samples = to_count(key, value);
  else if (key == "steps") cfg.train.steps = to_count(key, value);
  else if (key == "alpha") cfg.train.weights.alpha = to_real(key, value);
  else if (key == "beta") cfg.train.weights.beta = to_real(key, value);
  else if (key == "gamma") cfg.train.weights.gamma = to_real(key, value);
  else if (key == "ohem_threshold") cfg.train.ohem_threshold = to_real(key, value);
  else if (key == "ohem_min_kept_div") cfg.train.ohem_min_kept_div = to_count(key, value);
  else if (key == "lr") cfg.lr = to_real(key, value);
  else if (key == "power") cfg.power = to_real(key, value);
  else if (key == "momentum") cfg.momentum = to_real(key, value);
  else if (key == "weight_decay") cfg.weight_decay = to_real(key, value);
  else if (key == "variant") cfg.variant = value;
  else if (key == "fusion") cfg.fusion = value;
  else if (key == "seed") cfg.seed = to_count(key, value);
  else if (key == "eval_seed") cfg.eval_seed = to_count(key, value);
  else if (key == "out") cfg.out = value;
  else if (key == "results") cfg.results = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // Trim surrounding whitespace.
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(line_no) + " is not key=value: " + line);
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto kE = key.find_last_not_of(" \t");
    key = key.substr(0, kE == std::string::npos ? 0 : kE + 1);
    const auto vB = value.find_first_not_of(" \t");
    value = vB == std::string::npos ? "" : value.substr(vB);
    if (key.empty() || value.empty()) {
      throw ConfigError("config: line " + std::to_string(line_no) + " is missing a key or value");
    }
    apply_config_entry(cfg, key, value);
  }
  return cfg;
}

EvalResult evaluate(SegModel<float>& model, const std::vector<SegSample>& samples) {
  if (samples.empty()) throw DataError("evaluate: empty evaluation set");
  const std::size_t m = model.net_cfg.num_classes;
  ConfusionMatrix coarse_cm(m);
  ConfusionMatrix refined_cm(m);
  Rng unused(0);  // inference never draws from it
  for (const SegSample& sample : samples) {
    PipelineOutput<float> out =
        forward_pipeline(model, sample.image, sample.labels, /*training=*/false, unused);
    const std::vector<std::int32_t> coarse_pred = argmax_map(out.coarse_logits);
    coarse_cm.merge(confusion(coarse_pred, sample.labels, m));
    if (out.refined_logits) {
      refined_cm.merge(confusion(argmax_map(*out.refined_logits), sample.labels, m));
    } else {
      refined_cm.merge(confusion(coarse_pred, sample.labels, m));
    }
  }
  EvalResult result;
  MiouReport coarse = miou(coarse_cm);
  MiouReport refined = miou(refined_cm);
  result.coarse_miou = coarse.mean;
  result.refined_miou = refined.mean;
  result.coarse_per_class = std::move(coarse.per_class);
  result.refined_per_class = std::move(refined.per_class);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out);

  Rng rng(cfg.seed);
  const std::uint64_t data_seed = rng.next_u64();
  Rng model_rng = rng.split();
  Rng loop_rng = rng.split();

  std::vector<SegSample> train_data = generate_dataset(
      cfg.train_samples, cfg.height, cfg.width, cfg.num_classes, cfg.noise, data_seed);
  std::vector<SegSample> eval_data = generate_dataset(
      cfg.eval_samples, cfg.height, cfg.width, cfg.num_classes, cfg.noise, cfg.eval_seed);

  SegModel<float> model = make_model<float>(cfg.net_config(), VariantSpec::parse(cfg.variant),
                                            parse_fusion(cfg.fusion), model_rng);
  ParamStore<float> params;
  register_model_params(model, params);

  OptimState<float> optim;
  optim.lr_base = cfg.lr;
  optim.power = cfg.power;
  optim.momentum = cfg.momentum;
  optim.weight_decay = cfg.weight_decay;
  optim.max_iter = cfg.train.steps;

  ExperimentResult result;
  result.out_dir = cfg.out;
  result.metrics_csv = cfg.out / "metrics.csv";
  result.checkpoint_dir = cfg.out / "checkpoint";
  result.results_csv = cfg.results.empty() ? cfg.out / "results.csv" : cfg.results;

  std::ofstream metrics(result.metrics_csv, std::ios::trunc);
  if (!metrics) throw DataError("cannot write metrics file: " + result.metrics_csv.string());
  train_loop(model, params, optim, train_data, cfg.train, loop_rng, &metrics);
  if (!metrics.flush()) throw DataError("write failed: " + result.metrics_csv.string());

  result.eval = evaluate(model, eval_data);
  save_checkpoint(result.checkpoint_dir, model, params);

  const bool fresh = !std::filesystem::exists(result.results_csv);
  if (result.results_csv.has_parent_path()) {
    std::filesystem::create_directories(result.results_csv.parent_path());
  }
  std::ofstream results(result.results_csv, std::ios::app);
  if (!results) throw DataError("cannot append to results table: " + result.results_csv.string());
  if (fresh) results << "variant,seed,coarse_miou,refined_miou\n";
  results << cfg.variant << ',' << cfg.seed << ',' << format_miou(result.eval.coarse_miou) << ','
          << format_miou(result.eval.refined_miou) << "\n";
  if (!results.flush()) throw DataError("write failed: " + result.results_csv.string());
  return result;
}

}  // namespace cdgc
