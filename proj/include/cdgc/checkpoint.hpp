#pragma once

#include <filesystem>

#include "cdgc/model.hpp"
#include "cdgc/params.hpp"

namespace cdgc {

/// Write a model to `dir`: model.txt (architecture and variant), manifest.txt
/// (parameter names and shapes in registration order), and one CDT1 file per
/// parameter.  Reloading restores bit-identical values.
void save_checkpoint(const std::filesystem::path& dir, const SegModel<float>& model,
                     const ParamStore<float>& params);

struct LoadedModel {
  SegModel<float> model;
  ParamStore<float> params;  // handles alias the model's tensors
};

/// Rebuild the model described by `dir/model.txt` and load every parameter
/// listed in the manifest.  Missing files or shape drift raise DataError.
LoadedModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace cdgc
