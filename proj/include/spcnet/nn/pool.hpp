#pragma once

#include "spcnet/nn/param.hpp"
#include "spcnet/tensor.hpp"

namespace spc {

/// 2x2 stride-2 max pooling. Ties resolve to the first element in scan
/// order so backward routing is deterministic.
template <typename T>
class MaxPool2d {
 public:
  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) {
    SPC_CHECK(x.rank() == 4, "MaxPool2d: expected BCHW input");
    SPC_CHECK(x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0, "MaxPool2d: odd input size");
    const int batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h / 2, ow = w / 2;
    Tensor<T> y({batch, ch, oh, ow});
    if (ctx.record) {
      argmax_.assign(size_t(y.numel()), 0);
      in_shape_ = x.shape();
    }
    int64_t oi = 0;
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < ch; ++c) {
        const T* plane = x.data() + (int64_t(b) * ch + c) * h * w;
        for (int i = 0; i < oh; ++i)
          for (int j = 0; j < ow; ++j, ++oi) {
            const int64_t base = int64_t(2 * i) * w + 2 * j;
            int64_t best = base;
            T bv = plane[base];
            const int64_t cands[3] = {base + 1, base + w, base + w + 1};
            for (int64_t cand : cands)
              if (plane[cand] > bv) {
                bv = plane[cand];
                best = cand;
              }
            y[oi] = bv;
            if (ctx.record) argmax_[size_t(oi)] = (int64_t(b) * ch + c) * h * w + best;
          }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    SPC_CHECK(argmax_.size() == size_t(dy.numel()), "MaxPool2d: backward without recorded forward");
    Tensor<T> dx(in_shape_);
    for (int64_t i = 0; i < dy.numel(); ++i) dx[argmax_[size_t(i)]] += dy[i];
    return dx;
  }

 private:
  std::vector<int64_t> argmax_;
  std::vector<int> in_shape_;
};

/// Nearest-neighbor upsampling by an integer factor.
template <typename T>
class UpsampleNearest {
 public:
  UpsampleNearest() = default;
  explicit UpsampleNearest(int factor) : factor_(factor) {
    SPC_CHECK(factor >= 1, "UpsampleNearest: factor must be >= 1");
  }

  int factor() const { return factor_; }

  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) {
    SPC_CHECK(x.rank() == 4, "UpsampleNearest: expected BCHW input");
    if (ctx.record) in_shape_ = x.shape();
    if (factor_ == 1) return x;
    const int batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y({batch, ch, h * factor_, w * factor_});
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < ch; ++c) {
        const T* src = x.data() + (int64_t(b) * ch + c) * h * w;
        T* dst = y.data() + (int64_t(b) * ch + c) * h * w * factor_ * factor_;
        for (int i = 0; i < h * factor_; ++i) {
          const T* srow = src + int64_t(i / factor_) * w;
          T* drow = dst + int64_t(i) * w * factor_;
          for (int j = 0; j < w * factor_; ++j) drow[j] = srow[j / factor_];
        }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    if (factor_ == 1) return dy;
    const int batch = in_shape_[0], ch = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    Tensor<T> dx(in_shape_);
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < ch; ++c) {
        const T* src = dy.data() + (int64_t(b) * ch + c) * h * w * factor_ * factor_;
        T* dst = dx.data() + (int64_t(b) * ch + c) * h * w;
        for (int i = 0; i < h * factor_; ++i) {
          const T* srow = src + int64_t(i) * w * factor_;
          T* drow = dst + int64_t(i / factor_) * w;
          for (int j = 0; j < w * factor_; ++j) drow[j / factor_] += srow[j];
        }
      }
    return dx;
  }

 private:
  int factor_ = 2;
  std::vector<int> in_shape_;
};

}  // namespace spc
