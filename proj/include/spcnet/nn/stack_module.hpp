#pragma once

#include <array>
#include <memory>

#include "spcnet/nn/bottleneck.hpp"
#include "spcnet/nn/pool.hpp"

namespace spc {

/// The four decoder feature maps emitted by one stack module, coarsest
/// first. The last member doubles as the module output.
template <typename T>
using MultiLevelFeatureSet = std::array<Tensor<T>, 4>;

struct DHMConfig {
  int base_channels = 256;
  int input_resolution = 64;
  int dilation = 2;
  int dilated_block_count = 3;
  int encoder_blocks = 1;
  int decoder_refine_blocks = 1;
};

/// Common interface for the stack building block (DHM or the conventional
/// 4-downsample hourglass used as the ablation baseline).
template <typename T>
class IStackModule {
 public:
  virtual ~IStackModule() = default;
  virtual void init(Rng& rng) = 0;
  virtual void register_params(ParamRegistry<T>& reg, const std::string& prefix) = 0;
  virtual void register_buffers(ParamRegistry<T>& reg, const std::string& prefix) = 0;
  /// Returns the four decoder features; features[3] is the module output.
  virtual MultiLevelFeatureSet<T> forward(const Tensor<T>& x, const Context& ctx) = 0;
  /// Gradients for all four features (the caller folds the output gradient
  /// into dfeatures[3]); returns the input gradient.
  virtual Tensor<T> backward(MultiLevelFeatureSet<T>& dfeatures) = 0;
  /// Feature resolutions as fractions of the input resolution.
  virtual std::array<int, 4> feature_strides() const = 0;
  virtual int min_resolution_seen() const = 0;
};

/// Dilated Hourglass Module: two downsamplings, a dilated bottleneck chain
/// at quarter resolution, and a two-step decoder. Emits features at
/// strides (4, 4, 2, 1) relative to the input, i.e. 16, 16, 32 and 64 px
/// for the standard 64 px input.
template <typename T>
class DHM : public IStackModule<T> {
 public:
  explicit DHM(const DHMConfig& cfg) : cfg_(cfg) {
    SPC_CHECK(cfg.input_resolution % 4 == 0, "DHM: input resolution must be divisible by 4");
    SPC_CHECK(cfg.dilated_block_count >= 0, "DHM: negative dilated block count");
    const int c = cfg.base_channels;
    for (int i = 0; i < cfg.encoder_blocks; ++i) {
      enc_full_.emplace_back(BottleneckKind::Conventional, c, c, 1);
      enc_half_.emplace_back(BottleneckKind::Conventional, c, c, 1);
    }
    for (int i = 0; i < cfg.dilated_block_count; ++i)
      dilated_.emplace_back(i % 2 == 0 ? BottleneckKind::DilatedA : BottleneckKind::DilatedB,
                            c, c, cfg.dilation);
    d2_block_ = Bottleneck<T>(BottleneckKind::DilatedB, c, c, cfg.dilation);
    for (int i = 0; i < cfg.decoder_refine_blocks; ++i) {
      dec_half_.emplace_back(BottleneckKind::Conventional, c, c, 1);
      dec_full_.emplace_back(BottleneckKind::Conventional, c, c, 1);
    }
    up_half_ = UpsampleNearest<T>(2);
    up_full_ = UpsampleNearest<T>(2);
  }

  void init(Rng& rng) override {
    for (auto& b : enc_full_) b.init(rng);
    for (auto& b : enc_half_) b.init(rng);
    for (auto& b : dilated_) b.init(rng);
    d2_block_.init(rng);
    for (auto& b : dec_half_) b.init(rng);
    for (auto& b : dec_full_) b.init(rng);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) override {
    for (size_t i = 0; i < enc_full_.size(); ++i)
      enc_full_[i].register_params(reg, prefix + ".enc_full." + std::to_string(i));
    for (size_t i = 0; i < enc_half_.size(); ++i)
      enc_half_[i].register_params(reg, prefix + ".enc_half." + std::to_string(i));
    for (size_t i = 0; i < dilated_.size(); ++i)
      dilated_[i].register_params(reg, prefix + ".dilated." + std::to_string(i));
    d2_block_.register_params(reg, prefix + ".d2");
    for (size_t i = 0; i < dec_half_.size(); ++i)
      dec_half_[i].register_params(reg, prefix + ".dec_half." + std::to_string(i));
    for (size_t i = 0; i < dec_full_.size(); ++i)
      dec_full_[i].register_params(reg, prefix + ".dec_full." + std::to_string(i));
  }

  void register_buffers(ParamRegistry<T>& reg, const std::string& prefix) override {
    for (size_t i = 0; i < enc_full_.size(); ++i)
      enc_full_[i].register_buffers(reg, prefix + ".enc_full." + std::to_string(i));
    for (size_t i = 0; i < enc_half_.size(); ++i)
      enc_half_[i].register_buffers(reg, prefix + ".enc_half." + std::to_string(i));
    for (size_t i = 0; i < dilated_.size(); ++i)
      dilated_[i].register_buffers(reg, prefix + ".dilated." + std::to_string(i));
    d2_block_.register_buffers(reg, prefix + ".d2");
    for (size_t i = 0; i < dec_half_.size(); ++i)
      dec_half_[i].register_buffers(reg, prefix + ".dec_half." + std::to_string(i));
    for (size_t i = 0; i < dec_full_.size(); ++i)
      dec_full_[i].register_buffers(reg, prefix + ".dec_full." + std::to_string(i));
  }

  MultiLevelFeatureSet<T> forward(const Tensor<T>& x, const Context& ctx) override {
    SPC_CHECK(x.dim(1) == cfg_.base_channels && x.dim(2) == x.dim(3),
              "DHM: bad input shape");
    min_res_seen_ = x.dim(2);
    Tensor<T> e1 = x;
    for (auto& b : enc_full_) e1 = b.forward(e1, ctx);
    Tensor<T> e2 = pool1_.forward(e1, ctx);
    note_res(e2.dim(2));
    for (auto& b : enc_half_) e2 = b.forward(e2, ctx);
    Tensor<T> d = pool2_.forward(e2, ctx);
    note_res(d.dim(2));
    for (auto& b : dilated_) d = b.forward(d, ctx);

    MultiLevelFeatureSet<T> f;
    f[0] = d;                          // D1, deepest 16x16 feature
    f[1] = d2_block_.forward(d, ctx);  // D2, one further bottleneck at 16x16
    Tensor<T> u = up_half_.forward(f[1], ctx);
    u.add_(e2);
    for (auto& b : dec_half_) u = b.forward(u, ctx);
    f[2] = u;  // D3 at 32x32
    Tensor<T> v = up_full_.forward(u, ctx);
    v.add_(e1);
    for (auto& b : dec_full_) v = b.forward(v, ctx);
    f[3] = v;  // D4 at 64x64, also the module output
    return f;
  }

  Tensor<T> backward(MultiLevelFeatureSet<T>& df) override {
    Tensor<T> g = df[3];
    for (int i = int(dec_full_.size()) - 1; i >= 0; --i) g = dec_full_[size_t(i)].backward(g);
    Tensor<T> de1 = g;  // skip into the full-resolution sum
    Tensor<T> du = up_full_.backward(g);
    du.add_(df[2]);
    for (int i = int(dec_half_.size()) - 1; i >= 0; --i) du = dec_half_[size_t(i)].backward(du);
    Tensor<T> de2 = du;  // skip into the half-resolution sum
    Tensor<T> dd2 = up_half_.backward(du);
    dd2.add_(df[1]);
    Tensor<T> dd = d2_block_.backward(dd2);
    dd.add_(df[0]);
    for (int i = int(dilated_.size()) - 1; i >= 0; --i) dd = dilated_[size_t(i)].backward(dd);
    de2.add_(pool2_.backward(dd));
    for (int i = int(enc_half_.size()) - 1; i >= 0; --i) de2 = enc_half_[size_t(i)].backward(de2);
    de1.add_(pool1_.backward(de2));
    for (int i = int(enc_full_.size()) - 1; i >= 0; --i) de1 = enc_full_[size_t(i)].backward(de1);
    return de1;
  }

  std::array<int, 4> feature_strides() const override { return {4, 4, 2, 1}; }
  int min_resolution_seen() const override { return min_res_seen_; }

 private:
  void note_res(int r) { min_res_seen_ = std::min(min_res_seen_, r); }

  DHMConfig cfg_;
  std::vector<Bottleneck<T>> enc_full_, enc_half_, dilated_, dec_half_, dec_full_;
  Bottleneck<T> d2_block_;
  MaxPool2d<T> pool1_, pool2_;
  UpsampleNearest<T> up_half_, up_full_;
  int min_res_seen_ = 0;
};

/// Conventional hourglass with four downsamplings (64 -> 4 px), the
/// ablation baseline. Decoder features come out at strides (8, 4, 2, 1).
template <typename T>
class ConventionalHourglass : public IStackModule<T> {
 public:
  explicit ConventionalHourglass(int channels, int input_resolution) : channels_(channels) {
    SPC_CHECK(input_resolution % 16 == 0,
              "ConventionalHourglass: input resolution must be divisible by 16");
    for (int l = 0; l < kLevels; ++l) {
      enc_[l] = Bottleneck<T>(BottleneckKind::Conventional, channels, channels, 1);
      dec_[l] = Bottleneck<T>(BottleneckKind::Conventional, channels, channels, 1);
      ups_[l] = UpsampleNearest<T>(2);
    }
    bottom_ = Bottleneck<T>(BottleneckKind::Conventional, channels, channels, 1);
  }

  void init(Rng& rng) override {
    for (int l = 0; l < kLevels; ++l) {
      enc_[l].init(rng);
      dec_[l].init(rng);
    }
    bottom_.init(rng);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) override {
    for (int l = 0; l < kLevels; ++l) {
      enc_[l].register_params(reg, prefix + ".enc." + std::to_string(l));
      dec_[l].register_params(reg, prefix + ".dec." + std::to_string(l));
    }
    bottom_.register_params(reg, prefix + ".bottom");
  }

  void register_buffers(ParamRegistry<T>& reg, const std::string& prefix) override {
    for (int l = 0; l < kLevels; ++l) {
      enc_[l].register_buffers(reg, prefix + ".enc." + std::to_string(l));
      dec_[l].register_buffers(reg, prefix + ".dec." + std::to_string(l));
    }
    bottom_.register_buffers(reg, prefix + ".bottom");
  }

  MultiLevelFeatureSet<T> forward(const Tensor<T>& x, const Context& ctx) override {
    min_res_seen_ = x.dim(2);
    Tensor<T> cur = x;
    for (int l = 0; l < kLevels; ++l) {
      skips_[l] = enc_[l].forward(cur, ctx);
      cur = pools_[l].forward(skips_[l], ctx);
      note_res(cur.dim(2));
    }
    cur = bottom_.forward(cur, ctx);
    MultiLevelFeatureSet<T> f;
    for (int l = kLevels - 1; l >= 0; --l) {
      Tensor<T> u = ups_[l].forward(cur, ctx);
      u.add_(skips_[l]);
      cur = dec_[l].forward(u, ctx);
      f[kLevels - 1 - l] = cur;
    }
    return f;
  }

  Tensor<T> backward(MultiLevelFeatureSet<T>& df) override {
    Tensor<T> dcur;
    for (int l = 0; l < kLevels; ++l) {
      Tensor<T> d = df[kLevels - 1 - l];
      if (l > 0) d.add_(dcur);
      Tensor<T> du = dec_[l].backward(d);
      dskips_[l] = du;
      dcur = ups_[l].backward(du);
    }
    dcur = bottom_.backward(dcur);
    for (int l = kLevels - 1; l >= 0; --l) {
      Tensor<T> d = pools_[l].backward(dcur);
      d.add_(dskips_[l]);
      dcur = enc_[l].backward(d);
    }
    return dcur;
  }

  std::array<int, 4> feature_strides() const override { return {8, 4, 2, 1}; }
  int min_resolution_seen() const override { return min_res_seen_; }

 private:
  void note_res(int r) { min_res_seen_ = std::min(min_res_seen_, r); }

  static constexpr int kLevels = 4;
  int channels_ = 0;
  std::array<Bottleneck<T>, kLevels> enc_, dec_;
  Bottleneck<T> bottom_;
  std::array<MaxPool2d<T>, kLevels> pools_;
  std::array<UpsampleNearest<T>, kLevels> ups_;
  std::array<Tensor<T>, kLevels> skips_, dskips_;
  int min_res_seen_ = 0;
};

}  // namespace spc
