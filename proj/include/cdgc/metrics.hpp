#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cdgc/errors.hpp"

namespace cdgc {

/// Pixel counts indexed by [ground truth class][predicted class].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes)
      : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {
    if (num_classes == 0) throw UsageError("ConfusionMatrix: class count must be positive");
  }

  std::size_t num_classes() const { return num_classes_; }

  std::uint64_t at(std::size_t truth, std::size_t pred) const {
    return counts_[truth * num_classes_ + pred];
  }

  void bump(std::size_t truth, std::size_t pred) { ++counts_[truth * num_classes_ + pred]; }

  void merge(const ConfusionMatrix& other) {
    if (other.num_classes_ != num_classes_) throw UsageError("ConfusionMatrix: size mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  }

  std::uint64_t total() const {
    std::uint64_t sum = 0;
    for (std::uint64_t c : counts_) sum += c;
    return sum;
  }

 private:
  std::size_t num_classes_;
  std::vector<std::uint64_t> counts_;
};

/// Accumulate prediction-vs-truth counts over a label map; 255 pixels are
/// skipped.  Out-of-range classes raise DataError.
ConfusionMatrix confusion(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                          std::size_t num_classes, std::int32_t ignore_index = 255);

/// Mean intersection-over-union plus the per-class breakdown; classes that
/// appear in neither truth nor prediction are excluded from the mean (their
/// entry is -1).  Raises DataError when every class is empty.
struct MiouReport {
  double mean = 0.0;
  std::vector<double> per_class;
};

MiouReport miou(const ConfusionMatrix& cm);

}  // namespace cdgc
