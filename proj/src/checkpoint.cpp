#include "cdgc/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cdgc/tensor_io.hpp"

namespace cdgc {

namespace {

std::string shape_fields(const Shape& shape) {
  std::string out;
  for (std::size_t d : shape) {
    out += ' ';
    out += std::to_string(d);
  }
  return out;
}

std::vector<ConvSpec> parse_trunk(std::istringstream& line) {
  std::vector<ConvSpec> trunk;
  std::string item;
  while (line >> item) {
    ConvSpec spec;
    if (std::sscanf(item.c_str(), "%zux%zux%zu", &spec.channels, &spec.kernel, &spec.dilation) !=
        3) {
      throw DataError("checkpoint: bad trunk layer spec: " + item);
    }
    trunk.push_back(spec);
  }
  if (trunk.empty()) throw DataError("checkpoint: empty trunk spec");
  return trunk;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const SegModel<float>& model,
                     const ParamStore<float>& params) {
  std::filesystem::create_directories(dir);

  std::ofstream desc(dir / "model.txt", std::ios::trunc);
  if (!desc) throw DataError("cannot write model description in " + dir.string());
  const BasicNetConfig& cfg = model.net_cfg;
  desc << "in_channels " << cfg.in_channels << "\n";
  desc << "feature_channels " << cfg.feature_channels << "\n";
  desc << "num_classes " << cfg.num_classes << "\n";
  desc << "aux_tap " << cfg.aux_tap << "\n";
  desc << "fusion " << fusion_name(model.refine.fusion) << "\n";
  desc << "variant " << model.variant.str() << "\n";
  desc << "trunk";
  for (const ConvSpec& spec : cfg.trunk) {
    desc << ' ' << spec.channels << 'x' << spec.kernel << 'x' << spec.dilation;
  }
  desc << "\n";
  if (!desc.flush()) throw DataError("write failed: " + (dir / "model.txt").string());

  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw DataError("cannot write checkpoint manifest in " + dir.string());
  for (const auto& entry : params.entries()) {
    manifest << entry.name << shape_fields(entry.value.shape()) << "\n";
    save_tensor(dir / (entry.name + ".cdt1"), entry.value);
  }
  if (!manifest.flush()) throw DataError("write failed: " + (dir / "manifest.txt").string());
}

LoadedModel load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream desc(dir / "model.txt");
  if (!desc) throw DataError("missing model description in " + dir.string());

  BasicNetConfig cfg;
  cfg.trunk.clear();
  VariantSpec variant;
  FusionMode fusion = FusionMode::concat;
  std::string line;
  while (std::getline(desc, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "in_channels") {
      fields >> cfg.in_channels;
    } else if (key == "feature_channels") {
      fields >> cfg.feature_channels;
    } else if (key == "num_classes") {
      fields >> cfg.num_classes;
    } else if (key == "aux_tap") {
      fields >> cfg.aux_tap;
    } else if (key == "fusion") {
      std::string value;
      fields >> value;
      fusion = parse_fusion(value);
    } else if (key == "variant") {
      std::string value;
      fields >> value;
      variant = VariantSpec::parse(value);
    } else if (key == "trunk") {
      cfg.trunk = parse_trunk(fields);
      fields.clear();  // parse_trunk reads to end of line, leaving failbit set
    } else {
      throw DataError("checkpoint: unknown model key: " + key);
    }
    if (fields.fail()) throw DataError("checkpoint: bad model line: " + line);
  }

  LoadedModel loaded;
  // Fresh init only supplies the structure; every value is replaced below.
  Rng scratch_rng(0);
  loaded.model = make_model<float>(cfg, variant, fusion, scratch_rng);
  register_model_params(loaded.model, loaded.params);

  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("missing checkpoint manifest in " + dir.string());
  std::size_t listed = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name;
    fields >> name;
    Shape shape;
    std::size_t dim = 0;
    while (fields >> dim) shape.push_back(dim);
    TensorF& param = loaded.params.at(name);
    if (param.shape() != shape) {
      throw DataError("checkpoint: stored shape of " + name + " does not match the model");
    }
    TensorF stored = load_tensor(dir / (name + ".cdt1"));
    if (stored.shape() != shape) {
      throw DataError("checkpoint: tensor file of " + name + " does not match its manifest entry");
    }
    std::copy(stored.values().begin(), stored.values().end(), param.mutable_values().begin());
    ++listed;
  }
  if (listed != loaded.params.size()) {
    throw DataError("checkpoint: manifest lists " + std::to_string(listed) + " parameters, model has " +
                    std::to_string(loaded.params.size()));
  }
  return loaded;
}

}  // namespace cdgc
