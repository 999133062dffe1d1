#include "cdgc/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>

#include "cdgc/rng.hpp"
#include "cdgc/tensor_io.hpp"

namespace cdgc {

namespace {

constexpr std::size_t kChannels = 3;
constexpr std::size_t kMinExtent = 8;
constexpr int kPlacementTries = 100;

/// Fixed, well-separated class colors: background is a dark slate, foreground
/// classes sit evenly around a color wheel.
std::array<float, kChannels> class_color(std::size_t klass, std::size_t num_classes) {
  if (klass == 0) return {0.20f, 0.20f, 0.26f};
  const double t =
      static_cast<double>(klass - 1) / static_cast<double>(std::max<std::size_t>(num_classes - 1, 1));
  std::array<float, kChannels> color{};
  for (std::size_t ch = 0; ch < kChannels; ++ch) {
    const double phase = 2.0 * std::numbers::pi * (t + static_cast<double>(ch) / 3.0);
    color[ch] = static_cast<float>(0.58 + 0.36 * std::sin(phase));
  }
  return color;
}

struct ShapeDraw {
  bool disk = false;
  std::size_t cx = 0, cy = 0;  // center
  std::size_t rx = 1, ry = 1;  // half extents
};

ShapeDraw draw_shape(std::size_t height, std::size_t width, Rng& rng) {
  const std::size_t min_dim = std::min(height, width);
  const std::size_t rmin = std::max<std::size_t>(2, min_dim / 8);
  const std::size_t rmax = std::max(rmin, min_dim / 4);
  ShapeDraw s;
  s.disk = (rng.next_u64() & 1) != 0;
  s.rx = rmin + static_cast<std::size_t>(rng.uniform_int(rmax - rmin + 1));
  s.ry = s.disk ? s.rx : rmin + static_cast<std::size_t>(rng.uniform_int(rmax - rmin + 1));
  s.cx = s.rx + static_cast<std::size_t>(rng.uniform_int(width - 2 * s.rx));
  s.cy = s.ry + static_cast<std::size_t>(rng.uniform_int(height - 2 * s.ry));
  return s;
}

void paint(const ShapeDraw& s, std::int32_t klass, std::size_t width,
           std::vector<std::int32_t>& labels) {
  for (std::size_t y = s.cy - s.ry; y <= s.cy + s.ry; ++y) {
    for (std::size_t x = s.cx - s.rx; x <= s.cx + s.rx; ++x) {
      if (s.disk) {
        const double dx = (static_cast<double>(x) - static_cast<double>(s.cx)) /
                          static_cast<double>(s.rx);
        const double dy = (static_cast<double>(y) - static_cast<double>(s.cy)) /
                          static_cast<double>(s.ry);
        if (dx * dx + dy * dy > 1.0) continue;
      }
      labels[y * width + x] = klass;
    }
  }
}

SegSample make_sample(std::size_t height, std::size_t width, std::size_t num_classes, double noise,
                      Rng& rng) {
  const std::size_t pixels = height * width;
  std::vector<std::int32_t> labels;
  for (int attempt = 0; attempt < kPlacementTries; ++attempt) {
    labels.assign(pixels, 0);
    for (std::size_t m = 1; m < num_classes; ++m) {
      paint(draw_shape(height, width, rng), static_cast<std::int32_t>(m), width, labels);
    }
    std::vector<std::size_t> count(num_classes, 0);
    for (std::int32_t y : labels) ++count[static_cast<std::size_t>(y)];
    if (std::all_of(count.begin(), count.end(), [](std::size_t c) { return c > 0; })) break;
    if (attempt + 1 == kPlacementTries) {
      throw DataError("generate_dataset: could not place every class visibly");
    }
  }

  std::array<float, kChannels> jitter{};
  for (float& j : jitter) j = static_cast<float>(rng.uniform(-0.06, 0.06));

  std::vector<float> image(kChannels * pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    const auto color = class_color(static_cast<std::size_t>(labels[p]), num_classes);
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      const float v = color[ch] + jitter[ch] + static_cast<float>(rng.uniform(-noise, noise));
      image[ch * pixels + p] = std::clamp(v, 0.0f, 1.0f);
    }
  }

  SegSample sample;
  sample.image = TensorF::from({kChannels, height, width}, std::move(image));
  sample.labels = std::move(labels);
  sample.height = height;
  sample.width = width;
  return sample;
}

std::string sample_file(const char* stem, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%05zu.cdt1", stem, index);
  return buf;
}

}  // namespace

std::vector<SegSample> generate_dataset(std::size_t n, std::size_t height, std::size_t width,
                                        std::size_t num_classes, double noise,
                                        std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("generate_dataset: need at least two classes");
  if (std::min(height, width) < kMinExtent) {
    throw ConfigError("generate_dataset: image smaller than the smallest shape footprint");
  }
  if (!(noise >= 0.0 && noise <= 1.0)) {
    throw ConfigError("generate_dataset: noise must lie in [0, 1]");
  }
  Rng rng(seed);
  std::vector<SegSample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng sample_rng = rng.split();
    samples.push_back(make_sample(height, width, num_classes, noise, sample_rng));
  }
  return samples;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<SegSample>& samples,
                  std::size_t num_classes) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw DataError("cannot write dataset manifest in " + dir.string());
  manifest << "samples " << samples.size() << "\n";
  manifest << "classes " << num_classes << "\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SegSample& s = samples[i];
    save_tensor(dir / sample_file("image", i), s.image);
    std::vector<float> label_f(s.labels.begin(), s.labels.end());
    save_tensor(dir / sample_file("labels", i),
                TensorF::from({s.height, s.width}, std::move(label_f)));
  }
}

std::vector<SegSample> load_dataset(const std::filesystem::path& dir, std::size_t& num_classes) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("missing dataset manifest in " + dir.string());
  std::size_t count = 0;
  num_classes = 0;
  std::string key;
  while (manifest >> key) {
    if (key == "samples") {
      manifest >> count;
    } else if (key == "classes") {
      manifest >> num_classes;
    } else {
      throw DataError("unknown dataset manifest key: " + key);
    }
  }
  if (num_classes < 2) throw DataError("dataset manifest lacks a valid class count");

  std::vector<SegSample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SegSample s;
    s.image = load_tensor(dir / sample_file("image", i));
    if (s.image.rank() != 3) throw DataError("dataset image is not [C x H x W]");
    s.height = s.image.shape()[1];
    s.width = s.image.shape()[2];
    TensorF labels = load_tensor(dir / sample_file("labels", i));
    if (labels.shape() != Shape{s.height, s.width}) {
      throw DataError("dataset labels do not match image dimensions");
    }
    s.labels.reserve(labels.numel());
    for (float v : labels.values()) {
      const std::int32_t y = static_cast<std::int32_t>(v);
      if (static_cast<float>(y) != v) throw DataError("dataset labels must be integral");
      s.labels.push_back(y);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace cdgc
