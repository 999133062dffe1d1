#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cdgc/tensor.hpp"

namespace cdgc {

/// One synthetic segmentation example: an RGB image in [0,1] and a per-pixel
/// class label map (255 marks ignored pixels; the generator never emits it,
/// but loaders and losses accept it).
struct SegSample {
  TensorF image;  // [channels x H x W]
  std::vector<std::int32_t> labels;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Deterministic shape scenes: class 0 is the background, classes 1..M-1 are
/// rectangles or disks with class-specific colors, painted in class order so
/// later shapes occlude earlier ones.  Gaussian-free pipeline: colors get a
/// per-sample brightness jitter plus per-pixel uniform noise of half-width
/// `noise`, clamped to [0,1].  Every class is visible in every sample (scenes
/// that bury a class are redrawn).
std::vector<SegSample> generate_dataset(std::size_t n, std::size_t height, std::size_t width,
                                        std::size_t num_classes, double noise,
                                        std::uint64_t seed);

/// Write samples as CDT1 pairs (image_NNNN.cdt1, labels_NNNN.cdt1) plus a
/// manifest.txt describing counts and dimensions.
void save_dataset(const std::filesystem::path& dir, const std::vector<SegSample>& samples,
                  std::size_t num_classes);

/// Read back a directory written by save_dataset; returns the samples and the
/// class count recorded in the manifest.
std::vector<SegSample> load_dataset(const std::filesystem::path& dir, std::size_t& num_classes);

}  // namespace cdgc
