#pragma once

#include "spcnet/nn/param.hpp"

namespace spc {

/// RMSProp: per-parameter mean-square accumulator, update
/// p -= lr * g / (sqrt(ms) + eps).
template <typename T>
class RMSProp {
 public:
  RMSProp() = default;

  RMSProp(ParamRegistry<T>* params, double alpha = 0.99, double eps = 1e-8)
      : params_(params), alpha_(T(alpha)), eps_(T(eps)) {
    for (auto& e : params_->entries()) mean_square_.emplace_back(e.value->shape());
  }

  void step(double lr) {
    auto& entries = params_->entries();
    for (size_t i = 0; i < entries.size(); ++i) {
      Tensor<T>& p = *entries[i].value;
      const Tensor<T>& g = *entries[i].grad;
      Tensor<T>& ms = mean_square_[i];
      for (int64_t k = 0; k < p.numel(); ++k) {
        ms[k] = alpha_ * ms[k] + (T(1) - alpha_) * g[k] * g[k];
        p[k] -= T(lr) * g[k] / (std::sqrt(ms[k]) + eps_);
      }
    }
  }

  /// Exposes accumulators for checkpointing, keyed alongside parameters.
  std::vector<Tensor<T>>& state() { return mean_square_; }
  const ParamRegistry<T>& params() const { return *params_; }

 private:
  ParamRegistry<T>* params_ = nullptr;
  T alpha_ = T(0.99), eps_ = T(1e-8);
  std::vector<Tensor<T>> mean_square_;
};

}  // namespace spc
