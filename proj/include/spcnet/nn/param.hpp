#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spcnet/tensor.hpp"

namespace spc {

/// One learnable tensor with its gradient accumulator, registered under a
/// hierarchical path such as "stack0.enc64.0.conv2.weight".
template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

/// Flat view over a module tree's parameters. Modules register into this
/// with a path prefix; the optimizer and the checkpoint writer walk it.
template <typename T>
class ParamRegistry {
 public:
  void add(const std::string& name, Tensor<T>* value, Tensor<T>* grad) {
    entries_.push_back({name, value, grad});
  }

  std::vector<ParamEntry<T>>& entries() { return entries_; }
  const std::vector<ParamEntry<T>>& entries() const { return entries_; }

  size_t size() const { return entries_.size(); }

  ParamEntry<T>* find(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  void zero_grads() {
    for (auto& e : entries_) e.grad->zero();
  }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value->numel();
    return n;
  }

 private:
  std::vector<ParamEntry<T>> entries_;
};

/// Forward-pass context. `training` selects batch statistics in
/// normalization layers; `record` makes layers cache what backward needs.
struct Context {
  bool training = true;
  bool record = true;

  static Context train() { return {true, true}; }
  static Context eval() { return {false, false}; }
  // eval-statistics forward that still supports backward (used by probes)
  static Context eval_with_grad() { return {false, true}; }
};

}  // namespace spc
