#include "cdgc/metrics.hpp"

#include <string>

namespace cdgc {

ConfusionMatrix confusion(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                          std::size_t num_classes, std::int32_t ignore_index) {
  if (pred.size() != truth.size()) {
    throw ShapeError("confusion: prediction and truth maps differ in size");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::int32_t t = truth[i];
    if (t == ignore_index) continue;
    const std::int32_t p = pred[i];
    if (t < 0 || static_cast<std::size_t>(t) >= num_classes) {
      throw DataError("confusion: truth class " + std::to_string(t) + " out of range");
    }
    if (p < 0 || static_cast<std::size_t>(p) >= num_classes) {
      throw DataError("confusion: predicted class " + std::to_string(p) + " out of range");
    }
    cm.bump(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

MiouReport miou(const ConfusionMatrix& cm) {
  const std::size_t m = cm.num_classes();
  MiouReport report;
  report.per_class.assign(m, -1.0);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < m; ++k) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < m; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const std::uint64_t inter = cm.at(k, k);
    const std::uint64_t uni = row + col - inter;
    if (uni == 0) continue;  // class absent from both maps: excluded
    report.per_class[k] = static_cast<double>(inter) / static_cast<double>(uni);
    sum += report.per_class[k];
    ++counted;
  }
  if (counted == 0) throw DataError("miou: no class has any pixels");
  report.mean = sum / static_cast<double>(counted);
  return report;
}

}  // namespace cdgc
