#pragma once

#include <Eigen/Core>

#include "spcnet/nn/param.hpp"
#include "spcnet/tensor.hpp"

namespace spc {

/// Kernel footprint of a dilated kernel: K + (K-1)(R-1).
inline int effective_extent(int kernel_size, int dilation) {
  SPC_CHECK(kernel_size % 2 == 1, "effective_extent: kernel size must be odd");
  SPC_CHECK(dilation >= 1, "effective_extent: dilation must be >= 1");
  return kernel_size + (kernel_size - 1) * (dilation - 1);
}

/// Geometry of one dilated 2-D convolution.
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int dilation = 1;
  bool bias = true;

  int out_size(int in) const {
    return (in + 2 * pad - effective_extent(kernel, dilation)) / stride + 1;
  }
};

template <typename T>
using EigenMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<EigenMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const EigenMatrix<T>>;

namespace detail {

// Expands one sample [C,H,W] into columns [C*K*K, OH*OW] with zero padding
// and dilated taps at i*stride + R*m - pad.
template <typename T>
void im2col(const T* src, int ch, int h, int w, const ConvSpec& s, int oh, int ow, T* col) {
  const int kk = s.kernel;
  for (int c = 0; c < ch; ++c) {
    for (int m = 0; m < kk; ++m) {
      for (int n = 0; n < kk; ++n) {
        T* dst = col + ((int64_t(c) * kk + m) * kk + n) * oh * ow;
        const int row_off = s.dilation * m - s.pad;
        const int col_off = s.dilation * n - s.pad;
        for (int i = 0; i < oh; ++i) {
          const int src_i = i * s.stride + row_off;
          if (src_i < 0 || src_i >= h) {
            std::fill(dst, dst + ow, T(0));
            dst += ow;
            continue;
          }
          const T* src_row = src + (int64_t(c) * h + src_i) * w;
          for (int j = 0; j < ow; ++j) {
            const int src_j = j * s.stride + col_off;
            *dst++ = (src_j < 0 || src_j >= w) ? T(0) : src_row[src_j];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int ch, int h, int w, const ConvSpec& s, int oh, int ow, T* dst) {
  const int kk = s.kernel;
  for (int c = 0; c < ch; ++c) {
    for (int m = 0; m < kk; ++m) {
      for (int n = 0; n < kk; ++n) {
        const T* src = col + ((int64_t(c) * kk + m) * kk + n) * oh * ow;
        const int row_off = s.dilation * m - s.pad;
        const int col_off = s.dilation * n - s.pad;
        for (int i = 0; i < oh; ++i) {
          const int dst_i = i * s.stride + row_off;
          if (dst_i < 0 || dst_i >= h) {
            src += ow;
            continue;
          }
          T* dst_row = dst + (int64_t(c) * h + dst_i) * w;
          for (int j = 0; j < ow; ++j) {
            const int dst_j = j * s.stride + col_off;
            if (dst_j >= 0 && dst_j < w) dst_row[dst_j] += *src;
            ++src;
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D convolution with dilation, implemented as im2col plus a GEMM.
/// out[c,i,j] = sum_{ci,m,n} in[ci, i*S + R*m - P, j*S + R*n - P] * W[c,ci,m,n] + b[c]
/// 1x1 stride-1 convolutions skip the im2col and multiply the input directly.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;

  Conv2d(ConvSpec spec) : spec_(spec) {
    weight_ = Tensor<T>({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
    weight_grad_ = Tensor<T>(weight_.shape());
    if (spec.bias) {
      bias_ = Tensor<T>({spec.out_channels});
      bias_grad_ = Tensor<T>({spec.out_channels});
    }
  }

  const ConvSpec& spec() const { return spec_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

  void init(Rng& rng, double gain = 1.0) {
    const double fan_in = double(spec_.in_channels) * spec_.kernel * spec_.kernel;
    weight_.fill_normal(rng, 0.0, gain * std::sqrt(2.0 / fan_in));
    if (spec_.bias) bias_.zero();
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".weight", &weight_, &weight_grad_);
    if (spec_.bias) reg.add(prefix + ".bias", &bias_, &bias_grad_);
  }

  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) {
    SPC_CHECK(x.rank() == 4, "Conv2d: expected BCHW input");
    SPC_CHECK(x.dim(1) == spec_.in_channels, "Conv2d: channel mismatch, got ", x.dim(1),
              " expected ", spec_.in_channels);
    const int batch = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = spec_.out_size(h), ow = spec_.out_size(w);
    SPC_CHECK(oh > 0 && ow > 0, "Conv2d: input ", h, "x", w, " too small for kernel footprint");

    Tensor<T> y({batch, spec_.out_channels, oh, ow});
    const int64_t xplane = int64_t(spec_.in_channels) * h * w;
    const int64_t yplane = int64_t(spec_.out_channels) * oh * ow;
    ConstMatMap<T> wmat(weight_.data(), spec_.out_channels,
                        int64_t(spec_.in_channels) * spec_.kernel * spec_.kernel);

    if (is_pointwise()) {
      for (int b = 0; b < batch; ++b) {
        ConstMatMap<T> xb(x.data() + b * xplane, spec_.in_channels, int64_t(h) * w);
        MatMap<T> yb(y.data() + b * yplane, spec_.out_channels, int64_t(oh) * ow);
        yb.noalias() = wmat * xb;
      }
      if (ctx.record) input_cache_ = x;
    } else {
      const int64_t colrows = int64_t(spec_.in_channels) * spec_.kernel * spec_.kernel;
      const int64_t colcols = int64_t(oh) * ow;
      col_cache_ = Tensor<T>({batch, int(colrows), int(colcols)});
      for (int b = 0; b < batch; ++b) {
        T* colb = col_cache_.data() + b * colrows * colcols;
        detail::im2col(x.data() + b * xplane, spec_.in_channels, h, w, spec_, oh, ow, colb);
        ConstMatMap<T> cb(colb, colrows, colcols);
        MatMap<T> yb(y.data() + b * yplane, spec_.out_channels, colcols);
        yb.noalias() = wmat * cb;
      }
      if (!ctx.record) col_cache_ = Tensor<T>();
    }

    if (spec_.bias) {
      for (int b = 0; b < batch; ++b)
        for (int c = 0; c < spec_.out_channels; ++c) {
          T* p = y.data() + (int64_t(b) * spec_.out_channels + c) * oh * ow;
          const T bv = bias_[c];
          for (int64_t i = 0; i < int64_t(oh) * ow; ++i) p[i] += bv;
        }
    }
    if (ctx.record) in_shape_ = x.shape();
    return y;
  }

  /// Accumulates weight/bias grads and returns the input gradient.
  Tensor<T> backward(const Tensor<T>& dy) {
    const int batch = dy.dim(0), oh = dy.dim(2), ow = dy.dim(3);
    const int h = in_shape_[2], w = in_shape_[3];
    Tensor<T> dx(in_shape_);
    const int64_t xplane = int64_t(spec_.in_channels) * h * w;
    const int64_t yplane = int64_t(spec_.out_channels) * oh * ow;
    const int64_t colrows = int64_t(spec_.in_channels) * spec_.kernel * spec_.kernel;
    const int64_t colcols = int64_t(oh) * ow;

    MatMap<T> wgrad(weight_grad_.data(), spec_.out_channels, colrows);
    ConstMatMap<T> wmat(weight_.data(), spec_.out_channels, colrows);

    if (spec_.bias) {
      for (int b = 0; b < batch; ++b)
        for (int c = 0; c < spec_.out_channels; ++c) {
          const T* p = dy.data() + (int64_t(b) * spec_.out_channels + c) * oh * ow;
          T s = 0;
          for (int64_t i = 0; i < colcols; ++i) s += p[i];
          bias_grad_[c] += s;
        }
    }

    if (is_pointwise()) {
      for (int b = 0; b < batch; ++b) {
        ConstMatMap<T> dyb(dy.data() + b * yplane, spec_.out_channels, colcols);
        ConstMatMap<T> xb(input_cache_.data() + b * xplane, spec_.in_channels, colcols);
        MatMap<T> dxb(dx.data() + b * xplane, spec_.in_channels, colcols);
        wgrad.noalias() += dyb * xb.transpose();
        dxb.noalias() = wmat.transpose() * dyb;
      }
      return dx;
    }

    SPC_CHECK(col_cache_.numel() > 0, "Conv2d: backward without recorded forward");
    Tensor<T> dcol({int(colrows), int(colcols)});
    for (int b = 0; b < batch; ++b) {
      ConstMatMap<T> dyb(dy.data() + b * yplane, spec_.out_channels, colcols);
      ConstMatMap<T> cb(col_cache_.data() + b * colrows * colcols, colrows, colcols);
      wgrad.noalias() += dyb * cb.transpose();
      MatMap<T> dc(dcol.data(), colrows, colcols);
      dc.noalias() = wmat.transpose() * dyb;
      detail::col2im(dcol.data(), spec_.in_channels, h, w, spec_, oh, ow,
                     dx.data() + b * xplane);
    }
    return dx;
  }

  void release_cache() {
    col_cache_ = Tensor<T>();
    input_cache_ = Tensor<T>();
  }

 private:
  bool is_pointwise() const {
    return spec_.kernel == 1 && spec_.stride == 1 && spec_.pad == 0 && spec_.dilation == 1;
  }

  ConvSpec spec_;
  Tensor<T> weight_, weight_grad_;
  Tensor<T> bias_, bias_grad_;
  Tensor<T> col_cache_;    // [B, C*K*K, OH*OW], kept only when recording
  Tensor<T> input_cache_;  // pointwise path
  std::vector<int> in_shape_;
};

/// Free-function dilated convolution over a single sample [C,H,W]; thin
/// wrapper used where no learnable layer state is wanted.
template <typename T>
Tensor<T> dilated_conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                         std::type_identity_t<const Tensor<T>*> bias, int stride, int pad,
                         int dilation) {
  SPC_CHECK(input.rank() == 3, "dilated_conv2d: expected CHW input");
  SPC_CHECK(weight.rank() == 4, "dilated_conv2d: expected OIKK weight");
  SPC_CHECK(weight.dim(1) == input.dim(0), "dilated_conv2d: channel mismatch, input has ",
            input.dim(0), " channels, weight expects ", weight.dim(1));
  ConvSpec spec;
  spec.in_channels = input.dim(0);
  spec.out_channels = weight.dim(0);
  spec.kernel = weight.dim(2);
  spec.stride = stride;
  spec.pad = pad;
  spec.dilation = dilation;
  spec.bias = bias != nullptr;
  Conv2d<T> conv(spec);
  conv.weight() = weight;
  if (bias) conv.bias() = *bias;
  Tensor<T> x4({1, input.dim(0), input.dim(1), input.dim(2)});
  std::copy(input.data(), input.data() + input.numel(), x4.data());
  Tensor<T> y4 = conv.forward(x4, Context::eval());
  Tensor<T> y({y4.dim(1), y4.dim(2), y4.dim(3)});
  std::copy(y4.data(), y4.data() + y4.numel(), y.data());
  return y;
}

}  // namespace spc
