#pragma once

#include "spcnet/nn/param.hpp"
#include "spcnet/tensor.hpp"

namespace spc {

/// Per-channel batch normalization over (B,H,W). Training mode normalizes
/// with batch statistics and updates running estimates; eval mode uses the
/// running estimates. Backward handles both cases.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;

  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5)
      : channels_(channels), momentum_(T(momentum)), eps_(T(eps)) {
    gamma_ = Tensor<T>::full({channels}, T(1));
    beta_ = Tensor<T>({channels});
    gamma_grad_ = Tensor<T>({channels});
    beta_grad_ = Tensor<T>({channels});
    running_mean_ = Tensor<T>({channels});
    running_var_ = Tensor<T>::full({channels}, T(1));
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".gamma", &gamma_, &gamma_grad_);
    reg.add(prefix + ".beta", &beta_, &beta_grad_);
  }

  // running stats travel with checkpoints but are not optimized
  void register_buffers(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".running_mean", &running_mean_, &running_mean_);
    reg.add(prefix + ".running_var", &running_var_, &running_var_);
  }

  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) {
    SPC_CHECK(x.rank() == 4 && x.dim(1) == channels_, "BatchNorm2d: bad input shape");
    const int batch = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int64_t plane = int64_t(h) * w;
    const int64_t n = int64_t(batch) * plane;

    Tensor<T> y(x.shape());
    if (ctx.record) {
      xhat_ = Tensor<T>(x.shape());
      invstd_ = Tensor<T>({channels_});
      trained_forward_ = ctx.training;
    }

    for (int c = 0; c < channels_; ++c) {
      T mean, invstd;
      if (ctx.training) {
        T sum = 0, sumsq = 0;
        for (int b = 0; b < batch; ++b) {
          const T* p = x.data() + (int64_t(b) * channels_ + c) * plane;
          for (int64_t i = 0; i < plane; ++i) {
            sum += p[i];
            sumsq += p[i] * p[i];
          }
        }
        mean = sum / T(n);
        T var = sumsq / T(n) - mean * mean;
        if (var < T(0)) var = T(0);
        invstd = T(1) / std::sqrt(var + eps_);
        running_mean_[c] = (T(1) - momentum_) * running_mean_[c] + momentum_ * mean;
        // unbiased running variance, matching the usual convention
        const T unbiased = n > 1 ? var * T(n) / T(n - 1) : var;
        running_var_[c] = (T(1) - momentum_) * running_var_[c] + momentum_ * unbiased;
      } else {
        mean = running_mean_[c];
        invstd = T(1) / std::sqrt(running_var_[c] + eps_);
      }
      const T g = gamma_[c], bt = beta_[c];
      for (int b = 0; b < batch; ++b) {
        const T* p = x.data() + (int64_t(b) * channels_ + c) * plane;
        T* q = y.data() + (int64_t(b) * channels_ + c) * plane;
        T* xh = ctx.record ? xhat_.data() + (int64_t(b) * channels_ + c) * plane : nullptr;
        for (int64_t i = 0; i < plane; ++i) {
          const T xn = (p[i] - mean) * invstd;
          if (xh) xh[i] = xn;
          q[i] = g * xn + bt;
        }
      }
      if (ctx.record) invstd_[c] = invstd;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    SPC_CHECK(xhat_.numel() > 0, "BatchNorm2d: backward without recorded forward");
    const int batch = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const int64_t plane = int64_t(h) * w;
    const int64_t n = int64_t(batch) * plane;
    Tensor<T> dx(dy.shape());

    for (int c = 0; c < channels_; ++c) {
      T dg = 0, db = 0;
      for (int b = 0; b < batch; ++b) {
        const T* dyp = dy.data() + (int64_t(b) * channels_ + c) * plane;
        const T* xh = xhat_.data() + (int64_t(b) * channels_ + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          dg += dyp[i] * xh[i];
          db += dyp[i];
        }
      }
      gamma_grad_[c] += dg;
      beta_grad_[c] += db;

      const T g = gamma_[c], invstd = invstd_[c];
      if (trained_forward_) {
        const T k = g * invstd / T(n);
        for (int b = 0; b < batch; ++b) {
          const T* dyp = dy.data() + (int64_t(b) * channels_ + c) * plane;
          const T* xh = xhat_.data() + (int64_t(b) * channels_ + c) * plane;
          T* dxp = dx.data() + (int64_t(b) * channels_ + c) * plane;
          for (int64_t i = 0; i < plane; ++i)
            dxp[i] = k * (T(n) * dyp[i] - db - xh[i] * dg);
        }
      } else {
        const T k = g * invstd;  // running stats are constants
        for (int b = 0; b < batch; ++b) {
          const T* dyp = dy.data() + (int64_t(b) * channels_ + c) * plane;
          T* dxp = dx.data() + (int64_t(b) * channels_ + c) * plane;
          for (int64_t i = 0; i < plane; ++i) dxp[i] = k * dyp[i];
        }
      }
    }
    return dx;
  }

 private:
  int channels_ = 0;
  T momentum_ = T(0.1), eps_ = T(1e-5);
  Tensor<T> gamma_, beta_, gamma_grad_, beta_grad_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> xhat_, invstd_;
  bool trained_forward_ = true;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) {
    Tensor<T> y(x.shape());
    if (ctx.record) mask_.assign(size_t(x.numel()), 0);
    for (int64_t i = 0; i < x.numel(); ++i) {
      const bool pos = x[i] > T(0);
      y[i] = pos ? x[i] : T(0);
      if (ctx.record) mask_[size_t(i)] = pos;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    SPC_CHECK(mask_.size() == size_t(dy.numel()), "ReLU: backward without recorded forward");
    Tensor<T> dx(dy.shape());
    for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = mask_[size_t(i)] ? dy[i] : T(0);
    return dx;
  }

 private:
  std::vector<uint8_t> mask_;
};

}  // namespace spc
