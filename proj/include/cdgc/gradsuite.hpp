#pragma once

#include <string>
#include <vector>

#include "cdgc/grad_check.hpp"

namespace cdgc {

constexpr double kGradTolerance = 1e-4;

struct GradSuiteEntry {
  std::string name;
  GradCheckReport report;
  bool passed = false;
};

/// Run the 64-bit finite-difference suite: every differentiable operation on
/// seeded random instances, the graph-reasoning block end to end, and the full
/// pipeline loss on a small two-class scene with its sampled set held fixed.
std::vector<GradSuiteEntry> run_gradient_suite();

}  // namespace cdgc
