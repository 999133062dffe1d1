#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cdgc/params.hpp"
#include "cdgc/tensor.hpp"

namespace cdgc {

/// SGD hyperparameters, the poly schedule position, and per-parameter momentum
/// buffers (created on first step).
template <typename T>
struct OptimState {
  double lr_base = 0.01;
  double power = 0.9;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t iter = 0;
  std::size_t max_iter = 1;
  std::vector<std::vector<T>> velocity;
};

/// Poly schedule: lr_base * (1 - iter/max_iter)^power.
template <typename T>
double poly_lr(const OptimState<T>& state) {
  if (state.max_iter == 0) throw ConfigError("poly_lr: max_iter must be positive");
  if (state.iter > state.max_iter) throw UsageError("poly_lr: iter beyond max_iter");
  const double frac = 1.0 - static_cast<double>(state.iter) / static_cast<double>(state.max_iter);
  return state.lr_base * std::pow(frac, state.power);
}

/// One SGD update over every parameter:
///   v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v
/// with lr from the poly schedule at the current iteration, which is then
/// advanced.  A non-finite gradient aborts with the parameter's name.
template <typename T>
void sgd_step(ParamStore<T>& params, OptimState<T>& state) {
  const T lr = static_cast<T>(poly_lr(state));
  const T momentum = static_cast<T>(state.momentum);
  const T decay = static_cast<T>(state.weight_decay);
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const auto& entry : params.entries()) {
      state.velocity.emplace_back(entry.value.numel(), T(0));
    }
  }
  if (state.velocity.size() != params.size()) {
    throw UsageError("sgd_step: optimizer state does not match the parameter set");
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& entry = params.entries()[i];
    std::span<const T> grad = entry.value.grad();
    std::vector<T>& vel = state.velocity[i];
    if (vel.size() != entry.value.numel()) {
      throw UsageError("sgd_step: velocity size mismatch for " + entry.name);
    }
    if (!grad.empty() && grad.size() != vel.size()) {
      throw UsageError("sgd_step: gradient size mismatch for " + entry.name);
    }
    for (T g : grad) {
      if (!std::isfinite(g)) {
        throw NumericError("sgd_step: non-finite gradient in parameter " + entry.name);
      }
    }
    auto values = entry.value.mutable_values();
    // A parameter untouched by backward carries no gradient buffer; it still
    // sees momentum and weight decay, exactly as with an all-zero gradient.
    for (std::size_t j = 0; j < vel.size(); ++j) {
      const T g = grad.empty() ? T(0) : grad[j];
      vel[j] = momentum * vel[j] + g + decay * values[j];
      values[j] -= lr * vel[j];
    }
  }
  ++state.iter;
}

}  // namespace cdgc
