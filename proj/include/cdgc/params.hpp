#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdgc/tensor.hpp"

namespace cdgc {

/// Named collection of trainable tensors in registration order.  Handles are
/// shared: tensors returned here alias the model's parameters, so the
/// optimizer and checkpoint code mutate the same storage the model reads.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  Tensor<T>& add(std::string name, Tensor<T> value) {
    if (find(name) != nullptr) throw UsageError("parameter registered twice: " + name);
    value.set_requires_grad(true);
    entries_.push_back(Entry{std::move(name), std::move(value)});
    return entries_.back().value;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  Tensor<T>& at(std::string_view name) {
    if (Entry* e = find(name)) return e->value;
    throw UsageError("unknown parameter: " + std::string(name));
  }

  const Tensor<T>& at(std::string_view name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }

  /// Shared handles to every parameter, in registration order.
  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(entries_.size());
    for (const Entry& e : entries_) out.push_back(e.value);
    return out;
  }

  void zero_grads() {
    for (Entry& e : entries_) e.value.zero_grad();
  }

 private:
  Entry* find(std::string_view name) {
    for (Entry& e : entries_) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  std::vector<Entry> entries_;
};

}  // namespace cdgc
