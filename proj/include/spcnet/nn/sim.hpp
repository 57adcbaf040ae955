#pragma once

#include <memory>

#include "spcnet/nn/conv.hpp"
#include "spcnet/nn/norm_act.hpp"
#include "spcnet/nn/pool.hpp"
#include "spcnet/nn/stack_module.hpp"

namespace spc {

/// Per-pixel softmax across channels with max subtraction. For a 4-channel
/// squeeze map this yields the fusion weight maps: every pixel's weights
/// are non-negative and sum to one.
template <typename T>
Tensor<T> channel_softmax(const Tensor<T>& m) {
  SPC_CHECK(m.rank() == 3 || m.rank() == 4, "channel_softmax: expected CHW or BCHW");
  if (!m.all_finite()) throw NumericError("channel_softmax: non-finite input");
  const bool batched = m.rank() == 4;
  const int batch = batched ? m.dim(0) : 1;
  const int ch = batched ? m.dim(1) : m.dim(0);
  const int h = batched ? m.dim(2) : m.dim(1);
  const int w = batched ? m.dim(3) : m.dim(2);
  const int64_t plane = int64_t(h) * w;
  Tensor<T> a(m.shape());
  for (int b = 0; b < batch; ++b) {
    const T* src = m.data() + int64_t(b) * ch * plane;
    T* dst = a.data() + int64_t(b) * ch * plane;
    for (int64_t p = 0; p < plane; ++p) {
      T mx = src[p];
      for (int c = 1; c < ch; ++c) mx = std::max(mx, src[c * plane + p]);
      T denom = 0;
      for (int c = 0; c < ch; ++c) {
        const T e = std::exp(src[c * plane + p] - mx);
        dst[c * plane + p] = e;
        denom += e;
      }
      for (int c = 0; c < ch; ++c) dst[c * plane + p] /= denom;
    }
  }
  return a;
}

/// Spec-named alias: squeeze map in, per-pixel simplex weights out.
template <typename T>
Tensor<T> fusion_weights(const Tensor<T>& squeeze_map) {
  return channel_softmax(squeeze_map);
}

/// Weighted per-pixel blend: out[c,i,j] = sum_n weights[n,i,j] * levels[n][c,i,j].
template <typename T>
Tensor<T> fuse_weighted(const std::array<Tensor<T>, 4>& levels, const Tensor<T>& weights) {
  const bool batched = weights.rank() == 4;
  const int batch = batched ? weights.dim(0) : 1;
  const int h = batched ? weights.dim(2) : weights.dim(1);
  const int w = batched ? weights.dim(3) : weights.dim(2);
  const int ch = batched ? levels[0].dim(1) : levels[0].dim(0);
  const int64_t plane = int64_t(h) * w;
  Tensor<T> out(levels[0].shape());
  for (int b = 0; b < batch; ++b)
    for (int n = 0; n < 4; ++n) {
      const T* wp = weights.data() + (int64_t(b) * 4 + n) * plane;
      for (int c = 0; c < ch; ++c) {
        const T* xp = levels[size_t(n)].data() + (int64_t(b) * ch + c) * plane;
        T* op = out.data() + (int64_t(b) * ch + c) * plane;
        for (int64_t p = 0; p < plane; ++p) op[p] += wp[p] * xp[p];
      }
    }
  return out;
}

/// Information Collection: for each of the four levels, concatenate that
/// level's features across all stacks, squeeze channels back with a 1x1
/// convolution, BN + ReLU, and upsample everything to the heatmap
/// resolution.
template <typename T>
class InfoCollect {
 public:
  InfoCollect() = default;

  InfoCollect(int stack_count, int channels, std::array<int, 4> feature_strides)
      : stack_count_(stack_count), channels_(channels), strides_(feature_strides) {
    SPC_CHECK(stack_count >= 1, "InfoCollect: need at least one stack");
    for (int l = 0; l < 4; ++l) {
      conv_[l] = Conv2d<T>({stack_count * channels, channels, 1, 1, 0, 1, false});
      bn_[l] = BatchNorm2d<T>(channels);
      up_[l] = UpsampleNearest<T>(strides_[size_t(l)]);
    }
  }

  void init(Rng& rng) {
    for (int l = 0; l < 4; ++l) conv_[l].init(rng);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    for (int l = 0; l < 4; ++l) {
      conv_[l].register_params(reg, prefix + ".level" + std::to_string(l));
      bn_[l].register_params(reg, prefix + ".level" + std::to_string(l) + "_bn");
    }
  }

  void register_buffers(ParamRegistry<T>& reg, const std::string& prefix) {
    for (int l = 0; l < 4; ++l)
      bn_[l].register_buffers(reg, prefix + ".level" + std::to_string(l) + "_bn");
  }

  std::array<Tensor<T>, 4> forward(const std::vector<MultiLevelFeatureSet<T>>& stacks,
                                   const Context& ctx) {
    SPC_CHECK(int(stacks.size()) == stack_count_, "InfoCollect: expected ", stack_count_,
              " feature sets, got ", stacks.size());
    std::array<Tensor<T>, 4> out;
    for (int l = 0; l < 4; ++l) {
      const Tensor<T>& first = stacks[0][size_t(l)];
      const int batch = first.dim(0), h = first.dim(2), w = first.dim(3);
      Tensor<T> cat({batch, stack_count_ * channels_, h, w});
      const int64_t plane = int64_t(h) * w;
      for (int s = 0; s < stack_count_; ++s) {
        const Tensor<T>& f = stacks[size_t(s)][size_t(l)];
        SPC_CHECK(f.dim(0) == batch && f.dim(1) == channels_ && f.dim(2) == h && f.dim(3) == w,
                  "InfoCollect: inconsistent feature shapes across stacks");
        for (int b = 0; b < batch; ++b)
          std::copy(f.data() + int64_t(b) * channels_ * plane,
                    f.data() + int64_t(b + 1) * channels_ * plane,
                    cat.data() + (int64_t(b) * stack_count_ + s) * channels_ * plane);
      }
      Tensor<T> x = relu_[l].forward(bn_[l].forward(conv_[l].forward(cat, ctx), ctx), ctx);
      out[size_t(l)] = up_[l].forward(x, ctx);
    }
    return out;
  }

  std::vector<MultiLevelFeatureSet<T>> backward(const std::array<Tensor<T>, 4>& dout,
                                                int batch) {
    std::vector<MultiLevelFeatureSet<T>> dstacks(static_cast<size_t>(stack_count_));
    for (int l = 0; l < 4; ++l) {
      Tensor<T> d = up_[l].backward(dout[size_t(l)]);
      d = conv_[l].backward(bn_[l].backward(relu_[l].backward(d)));
      const int h = d.dim(2), w = d.dim(3);
      const int64_t plane = int64_t(h) * w;
      for (int s = 0; s < stack_count_; ++s) {
        Tensor<T> ds({batch, channels_, h, w});
        for (int b = 0; b < batch; ++b)
          std::copy(d.data() + (int64_t(b) * stack_count_ + s) * channels_ * plane,
                    d.data() + (int64_t(b) * stack_count_ + s + 1) * channels_ * plane,
                    ds.data() + int64_t(b) * channels_ * plane);
        dstacks[size_t(s)][size_t(l)] = std::move(ds);
      }
    }
    return dstacks;
  }

 private:
  int stack_count_ = 0, channels_ = 0;
  std::array<int, 4> strides_{};
  std::array<Conv2d<T>, 4> conv_;
  std::array<BatchNorm2d<T>, 4> bn_;
  std::array<ReLU<T>, 4> relu_;
  std::array<UpsampleNearest<T>, 4> up_;
};

/// How the four collected levels are reduced to one fused map.
enum class FusionKind { SIM, Sum, Concat };

template <typename T>
class IFusion {
 public:
  virtual ~IFusion() = default;
  virtual void init(Rng& rng) {}
  virtual void register_params(ParamRegistry<T>&, const std::string&) {}
  virtual Tensor<T> forward(const std::array<Tensor<T>, 4>& x, const Context& ctx) = 0;
  virtual std::array<Tensor<T>, 4> backward(const Tensor<T>& df) = 0;
};

/// Information Distribution: squeeze the summed levels to four channels,
/// softmax per pixel, and blend the levels with the resulting weights.
template <typename T>
class SIMDistribute : public IFusion<T> {
 public:
  explicit SIMDistribute(int channels) : channels_(channels) {
    squeeze_ = Conv2d<T>({channels, 4, 1, 1, 0, 1, true});
  }

  void init(Rng& rng) override { squeeze_.init(rng); }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) override {
    squeeze_.register_params(reg, prefix + ".squeeze");
  }

  Tensor<T> forward(const std::array<Tensor<T>, 4>& x, const Context& ctx) override {
    for (int n = 1; n < 4; ++n)
      SPC_CHECK(x[size_t(n)].same_shape(x[0]), "SIMDistribute: level shape mismatch");
    Tensor<T> s = x[0];
    for (int n = 1; n < 4; ++n) s.add_(x[size_t(n)]);
    Tensor<T> m = squeeze_.forward(s, ctx);
    weights_ = channel_softmax(m);
    if (ctx.record) x_cache_ = x;
    return fuse_weighted(x, weights_);
  }

  std::array<Tensor<T>, 4> backward(const Tensor<T>& df) override {
    const int batch = df.dim(0), ch = df.dim(1), h = df.dim(2), w = df.dim(3);
    const int64_t plane = int64_t(h) * w;

    std::array<Tensor<T>, 4> dx;
    Tensor<T> da({batch, 4, h, w});
    for (int n = 0; n < 4; ++n) {
      dx[size_t(n)] = Tensor<T>(df.shape());
      for (int b = 0; b < batch; ++b) {
        const T* wp = weights_.data() + (int64_t(b) * 4 + n) * plane;
        T* dap = da.data() + (int64_t(b) * 4 + n) * plane;
        for (int c = 0; c < ch; ++c) {
          const T* dfp = df.data() + (int64_t(b) * ch + c) * plane;
          const T* xp = x_cache_[size_t(n)].data() + (int64_t(b) * ch + c) * plane;
          T* dxp = dx[size_t(n)].data() + (int64_t(b) * ch + c) * plane;
          for (int64_t p = 0; p < plane; ++p) {
            dxp[p] = wp[p] * dfp[p];
            dap[p] += dfp[p] * xp[p];
          }
        }
      }
    }

    // softmax backward: dm_n = a_n * (da_n - sum_k a_k da_k)
    Tensor<T> dm(da.shape());
    for (int b = 0; b < batch; ++b) {
      const T* ap = weights_.data() + int64_t(b) * 4 * plane;
      const T* dap = da.data() + int64_t(b) * 4 * plane;
      T* dmp = dm.data() + int64_t(b) * 4 * plane;
      for (int64_t p = 0; p < plane; ++p) {
        T dot = 0;
        for (int n = 0; n < 4; ++n) dot += ap[n * plane + p] * dap[n * plane + p];
        for (int n = 0; n < 4; ++n)
          dmp[n * plane + p] = ap[n * plane + p] * (dap[n * plane + p] - dot);
      }
    }

    Tensor<T> ds = squeeze_.backward(dm);
    for (int n = 0; n < 4; ++n) dx[size_t(n)].add_(ds);
    return dx;
  }

  /// Fusion weight maps from the most recent forward, exposed for tests
  /// and diagnostics.
  const Tensor<T>& last_weights() const { return weights_; }

 private:
  int channels_ = 0;
  Conv2d<T> squeeze_;
  Tensor<T> weights_;
  std::array<Tensor<T>, 4> x_cache_;
};

/// Plain element-wise summation of the four levels (ablation).
template <typename T>
class SumFusion : public IFusion<T> {
 public:
  Tensor<T> forward(const std::array<Tensor<T>, 4>& x, const Context&) override {
    Tensor<T> s = x[0];
    for (int n = 1; n < 4; ++n) s.add_(x[size_t(n)]);
    return s;
  }
  std::array<Tensor<T>, 4> backward(const Tensor<T>& df) override {
    return {df, df, df, df};
  }
};

/// Channel concatenation followed by a 1x1 squeeze (ablation).
template <typename T>
class ConcatFusion : public IFusion<T> {
 public:
  explicit ConcatFusion(int channels) : channels_(channels) {
    conv_ = Conv2d<T>({4 * channels, channels, 1, 1, 0, 1, true});
  }

  void init(Rng& rng) override { conv_.init(rng); }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) override {
    conv_.register_params(reg, prefix + ".concat");
  }

  Tensor<T> forward(const std::array<Tensor<T>, 4>& x, const Context& ctx) override {
    const int batch = x[0].dim(0), h = x[0].dim(2), w = x[0].dim(3);
    const int64_t plane = int64_t(h) * w;
    Tensor<T> cat({batch, 4 * channels_, h, w});
    for (int n = 0; n < 4; ++n)
      for (int b = 0; b < batch; ++b)
        std::copy(x[size_t(n)].data() + int64_t(b) * channels_ * plane,
                  x[size_t(n)].data() + int64_t(b + 1) * channels_ * plane,
                  cat.data() + (int64_t(b) * 4 + n) * channels_ * plane);
    return conv_.forward(cat, ctx);
  }

  std::array<Tensor<T>, 4> backward(const Tensor<T>& df) override {
    Tensor<T> dcat = conv_.backward(df);
    const int batch = df.dim(0), h = dcat.dim(2), w = dcat.dim(3);
    const int64_t plane = int64_t(h) * w;
    std::array<Tensor<T>, 4> dx;
    for (int n = 0; n < 4; ++n) {
      dx[size_t(n)] = Tensor<T>({batch, channels_, h, w});
      for (int b = 0; b < batch; ++b)
        std::copy(dcat.data() + (int64_t(b) * 4 + n) * channels_ * plane,
                  dcat.data() + (int64_t(b) * 4 + n + 1) * channels_ * plane,
                  dx[size_t(n)].data() + int64_t(b) * channels_ * plane);
    }
    return dx;
  }

 private:
  int channels_ = 0;
  Conv2d<T> conv_;
};

}  // namespace spc
