#pragma once

#include "spcnet/nn/conv.hpp"
#include "spcnet/nn/norm_act.hpp"

namespace spc {

enum class BottleneckKind { Conventional, DilatedA, DilatedB };

inline const char* to_string(BottleneckKind k) {
  switch (k) {
    case BottleneckKind::Conventional: return "conventional";
    case BottleneckKind::DilatedA: return "dilated_a";
    case BottleneckKind::DilatedB: return "dilated_b";
  }
  return "?";
}

/// Residual bottleneck: 1x1 reduce -> 3x3 (dilated for the dilated kinds)
/// -> 1x1 expand, BN after each conv, ReLU after the first two, then
/// skip addition and a final ReLU. dilated_a carries a projection skip,
/// dilated_b an identity skip; the conventional kind projects only on a
/// channel change.
template <typename T>
class Bottleneck {
 public:
  Bottleneck() = default;

  Bottleneck(BottleneckKind kind, int in_ch, int out_ch, int dilation)
      : kind_(kind), in_ch_(in_ch), out_ch_(out_ch) {
    const int mid = std::max(1, out_ch / 2);
    const int r = (kind == BottleneckKind::Conventional) ? 1 : dilation;
    SPC_CHECK(r >= 1, "Bottleneck: dilation must be >= 1");
    dilation_ = r;
    // biases are redundant in front of the batch norms
    conv1_ = Conv2d<T>({in_ch, mid, 1, 1, 0, 1, false});
    bn1_ = BatchNorm2d<T>(mid);
    conv2_ = Conv2d<T>({mid, mid, 3, 1, r, r, false});
    bn2_ = BatchNorm2d<T>(mid);
    conv3_ = Conv2d<T>({mid, out_ch, 1, 1, 0, 1, false});
    bn3_ = BatchNorm2d<T>(out_ch);
    project_ = (kind == BottleneckKind::DilatedA) ||
               (kind == BottleneckKind::Conventional && in_ch != out_ch);
    SPC_CHECK(project_ || in_ch == out_ch,
              "Bottleneck: identity skip requires matching channels");
    if (project_) {
      proj_ = Conv2d<T>({in_ch, out_ch, 1, 1, 0, 1, false});
      bnp_ = BatchNorm2d<T>(out_ch);
    }
  }

  BottleneckKind kind() const { return kind_; }
  int dilation() const { return dilation_; }
  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    if (project_) proj_.init(rng);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    conv1_.register_params(reg, prefix + ".conv1");
    bn1_.register_params(reg, prefix + ".bn1");
    conv2_.register_params(reg, prefix + ".conv2");
    bn2_.register_params(reg, prefix + ".bn2");
    conv3_.register_params(reg, prefix + ".conv3");
    bn3_.register_params(reg, prefix + ".bn3");
    if (project_) {
      proj_.register_params(reg, prefix + ".proj");
      bnp_.register_params(reg, prefix + ".bnp");
    }
  }

  void register_buffers(ParamRegistry<T>& reg, const std::string& prefix) {
    bn1_.register_buffers(reg, prefix + ".bn1");
    bn2_.register_buffers(reg, prefix + ".bn2");
    bn3_.register_buffers(reg, prefix + ".bn3");
    if (project_) bnp_.register_buffers(reg, prefix + ".bnp");
  }

  Tensor<T> forward(const Tensor<T>& x, const Context& ctx) {
    SPC_CHECK(x.dim(1) == in_ch_, "Bottleneck: channel mismatch, got ", x.dim(1),
              " expected ", in_ch_);
    Tensor<T> b = relu1_.forward(bn1_.forward(conv1_.forward(x, ctx), ctx), ctx);
    b = relu2_.forward(bn2_.forward(conv2_.forward(b, ctx), ctx), ctx);
    b = bn3_.forward(conv3_.forward(b, ctx), ctx);
    if (project_)
      b.add_(bnp_.forward(proj_.forward(x, ctx), ctx));
    else
      b.add_(x);
    return relu_out_.forward(b, ctx);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dsum = relu_out_.backward(dy);
    Tensor<T> dx = project_ ? proj_.backward(bnp_.backward(dsum)) : dsum;
    Tensor<T> db = conv3_.backward(bn3_.backward(dsum));
    db = conv2_.backward(bn2_.backward(relu2_.backward(db)));
    db = conv1_.backward(bn1_.backward(relu1_.backward(db)));
    dx.add_(db);
    return dx;
  }

 private:
  BottleneckKind kind_ = BottleneckKind::Conventional;
  int in_ch_ = 0, out_ch_ = 0, dilation_ = 1;
  bool project_ = false;
  Conv2d<T> conv1_, conv2_, conv3_, proj_;
  BatchNorm2d<T> bn1_, bn2_, bn3_, bnp_;
  ReLU<T> relu1_, relu2_, relu_out_;
};

}  // namespace spc
