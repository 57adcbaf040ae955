#pragma once

#include <memory>
#include <numeric>

#include "spcnet/codec.hpp"
#include "spcnet/nn/sim.hpp"
#include "spcnet/nn/stack_module.hpp"

namespace spc {

enum class ModuleKind { DHM, Hourglass };

struct SPCNetConfig {
  int stack_count = 8;
  int joint_count = 16;
  int base_channels = 256;
  int dilation = 2;
  int dilated_block_count = 3;
  int encoder_blocks = 1;
  int decoder_refine_blocks = 1;
  ModuleKind module_kind = ModuleKind::DHM;
  FusionKind fusion_kind = FusionKind::SIM;
  CodecConfig codec;

  int feature_resolution() const { return codec.heatmap_size; }

  void validate() const {
    SPC_CHECK(stack_count >= 1, "SPCNetConfig: stack_count must be >= 1");
    SPC_CHECK(joint_count >= 1, "SPCNetConfig: joint_count must be >= 1");
    SPC_CHECK(base_channels % 4 == 0, "SPCNetConfig: base_channels must be divisible by 4");
    codec.validate();
  }
};

/// All supervised outputs of one forward pass: one heatmap stack per DHM
/// plus the fused final stack.
template <typename T>
struct PredictionBundle {
  std::vector<Tensor<T>> intermediate;  // stack_count entries, [B,N,h,w]
  Tensor<T> final;                      // [B,N,h,w]

  int term_count() const { return int(intermediate.size()) + 1; }
};

template <typename T>
struct LossReport {
  std::vector<T> per_term;   // stack_count + 1 entries
  std::vector<T> weighting;  // same length, defaults to all ones
  T total = T(0);
};

/// Stacked network: stem, stack_count DHMs with intermediate heads and
/// hourglass-style remapping, information collection across stacks, and a
/// fusion head producing the final heatmaps.
template <typename T>
class SPCNet {
 public:
  explicit SPCNet(const SPCNetConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int c = cfg.base_channels;
    const int c4 = std::max(1, c / 4), c2 = std::max(1, c / 2);
    stem_conv_ = Conv2d<T>({3, c4, 7, 2, 3, 1, false});
    stem_bn_ = BatchNorm2d<T>(c4);
    stem_b1_ = Bottleneck<T>(BottleneckKind::Conventional, c4, c2, 1);
    stem_b2_ = Bottleneck<T>(BottleneckKind::Conventional, c2, c2, 1);
    stem_b3_ = Bottleneck<T>(BottleneckKind::Conventional, c2, c, 1);

    const int res = cfg.feature_resolution();
    for (int s = 0; s < cfg.stack_count; ++s) {
      if (cfg.module_kind == ModuleKind::DHM) {
        DHMConfig mc;
        mc.base_channels = c;
        mc.input_resolution = res;
        mc.dilation = cfg.dilation;
        mc.dilated_block_count = cfg.dilated_block_count;
        mc.encoder_blocks = cfg.encoder_blocks;
        mc.decoder_refine_blocks = cfg.decoder_refine_blocks;
        stacks_.push_back(std::make_unique<DHM<T>>(mc));
      } else {
        stacks_.push_back(std::make_unique<ConventionalHourglass<T>>(c, res));
      }
      heads_.emplace_back(ConvSpec{c, cfg.joint_count, 1, 1, 0, 1, true});
      if (s < cfg.stack_count - 1)
        remaps_.emplace_back(ConvSpec{cfg.joint_count, c, 1, 1, 0, 1, true});
    }

    collect_ = InfoCollect<T>(cfg.stack_count, c, stacks_[0]->feature_strides());
    switch (cfg.fusion_kind) {
      case FusionKind::SIM: fusion_ = std::make_unique<SIMDistribute<T>>(c); break;
      case FusionKind::Sum: fusion_ = std::make_unique<SumFusion<T>>(); break;
      case FusionKind::Concat: fusion_ = std::make_unique<ConcatFusion<T>>(c); break;
    }
    final_head_ = Conv2d<T>({c, cfg.joint_count, 1, 1, 0, 1, true});
  }

  const SPCNetConfig& config() const { return cfg_; }

  void init(Rng& rng) {
    stem_conv_.init(rng);
    stem_b1_.init(rng);
    stem_b2_.init(rng);
    stem_b3_.init(rng);
    for (auto& s : stacks_) s->init(rng);
    // heatmap heads start near zero so initial predictions are flat
    for (auto& h : heads_) h.init(rng, 0.01);
    for (auto& r : remaps_) r.init(rng);
    collect_.init(rng);
    fusion_->init(rng);
    final_head_.init(rng, 0.01);
  }

  void register_params(ParamRegistry<T>& reg) {
    stem_conv_.register_params(reg, "stem.conv");
    stem_bn_.register_params(reg, "stem.bn");
    stem_b1_.register_params(reg, "stem.b1");
    stem_b2_.register_params(reg, "stem.b2");
    stem_b3_.register_params(reg, "stem.b3");
    for (size_t s = 0; s < stacks_.size(); ++s)
      stacks_[s]->register_params(reg, "stack" + std::to_string(s));
    for (size_t s = 0; s < heads_.size(); ++s)
      heads_[s].register_params(reg, "head" + std::to_string(s));
    for (size_t s = 0; s < remaps_.size(); ++s)
      remaps_[s].register_params(reg, "remap" + std::to_string(s));
    collect_.register_params(reg, "collect");
    fusion_->register_params(reg, "fusion");
    final_head_.register_params(reg, "final_head");
  }

  void register_buffers(ParamRegistry<T>& reg) {
    stem_bn_.register_buffers(reg, "stem.bn");
    stem_b1_.register_buffers(reg, "stem.b1");
    stem_b2_.register_buffers(reg, "stem.b2");
    stem_b3_.register_buffers(reg, "stem.b3");
    for (size_t s = 0; s < stacks_.size(); ++s)
      stacks_[s]->register_buffers(reg, "stack" + std::to_string(s));
    collect_.register_buffers(reg, "collect");
  }

  Tensor<T> stem_forward(const Tensor<T>& images, const Context& ctx) {
    SPC_CHECK(images.rank() == 4 && images.dim(1) == 3 &&
                  images.dim(2) == cfg_.codec.input_size &&
                  images.dim(3) == cfg_.codec.input_size,
              "SPCNet: expected Bx3x", cfg_.codec.input_size, "x", cfg_.codec.input_size,
              " input");
    Tensor<T> x = stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(images, ctx), ctx), ctx);
    x = stem_b1_.forward(x, ctx);
    x = stem_pool_.forward(x, ctx);
    x = stem_b2_.forward(x, ctx);
    return stem_b3_.forward(x, ctx);
  }

  PredictionBundle<T> forward(const Tensor<T>& images, const Context& ctx) {
    Tensor<T> x = stem_forward(images, ctx);
    const int stack_count = cfg_.stack_count;
    features_.assign(size_t(stack_count), MultiLevelFeatureSet<T>{});
    PredictionBundle<T> bundle;
    bundle.intermediate.reserve(size_t(stack_count));
    for (int s = 0; s < stack_count; ++s) {
      features_[size_t(s)] = stacks_[size_t(s)]->forward(x, ctx);
      const Tensor<T>& out = features_[size_t(s)][3];
      Tensor<T> hm = heads_[size_t(s)].forward(out, ctx);
      if (s < stack_count - 1) {
        Tensor<T> next = remaps_[size_t(s)].forward(hm, ctx);
        next.add_(out);
        next.add_(x);
        x = std::move(next);
      }
      bundle.intermediate.push_back(std::move(hm));
    }
    fused_levels_ = collect_.forward(features_, ctx);
    Tensor<T> fused = fusion_->forward(fused_levels_, ctx);
    bundle.final = final_head_.forward(fused, ctx);
    if (!ctx.record) features_.clear();
    return bundle;
  }

  /// Backward through the whole network given per-head output gradients.
  void backward(const std::vector<Tensor<T>>& d_intermediate, const Tensor<T>& d_final) {
    SPC_CHECK(d_intermediate.size() == stacks_.size(), "SPCNet: gradient arity mismatch");
    const int stack_count = cfg_.stack_count;
    Tensor<T> dfused = final_head_.backward(d_final);
    std::array<Tensor<T>, 4> dlevels = fusion_->backward(dfused);
    std::vector<MultiLevelFeatureSet<T>> dfeats =
        collect_.backward(dlevels, d_final.dim(0));

    Tensor<T> dx_next;  // gradient w.r.t. the next stack's input
    for (int s = stack_count - 1; s >= 0; --s) {
      Tensor<T> dhm = d_intermediate[size_t(s)];
      if (s < stack_count - 1) dhm.add_(remaps_[size_t(s)].backward(dx_next));
      Tensor<T> dout = heads_[size_t(s)].backward(dhm);
      dout.add_(dfeats[size_t(s)][3]);
      if (s < stack_count - 1) dout.add_(dx_next);
      dfeats[size_t(s)][3] = std::move(dout);
      Tensor<T> dx = stacks_[size_t(s)]->backward(dfeats[size_t(s)]);
      if (s < stack_count - 1) dx.add_(dx_next);
      dx_next = std::move(dx);
    }

    Tensor<T> d = stem_b3_.backward(dx_next);
    d = stem_b2_.backward(d);
    d = stem_pool_.backward(d);
    d = stem_b1_.backward(d);
    stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(d)));
  }

  /// Per-stack decoder features from the most recent recorded forward.
  const std::vector<MultiLevelFeatureSet<T>>& last_features() const { return features_; }

  /// SIM fusion weight maps (only when fusion_kind == SIM).
  const Tensor<T>* last_fusion_weights() const {
    auto* sim = dynamic_cast<const SIMDistribute<T>*>(fusion_.get());
    return sim ? &sim->last_weights() : nullptr;
  }

  IStackModule<T>& stack(int s) { return *stacks_[size_t(s)]; }

 private:
  SPCNetConfig cfg_;
  Conv2d<T> stem_conv_;
  BatchNorm2d<T> stem_bn_;
  ReLU<T> stem_relu_;
  Bottleneck<T> stem_b1_, stem_b2_, stem_b3_;
  MaxPool2d<T> stem_pool_;
  std::vector<std::unique_ptr<IStackModule<T>>> stacks_;
  std::vector<Conv2d<T>> heads_, remaps_;
  InfoCollect<T> collect_;
  std::unique_ptr<IFusion<T>> fusion_;
  Conv2d<T> final_head_;
  std::vector<MultiLevelFeatureSet<T>> features_;
  std::array<Tensor<T>, 4> fused_levels_;
};

/// Squared-error heatmap loss: each term is 1/2 * mean over the batch of
/// the summed squared residual over the masked joints' pixels. One term
/// per stack plus one for the fused head.
template <typename T>
LossReport<T> compute_loss(const PredictionBundle<T>& pred, const Tensor<T>& target,
                           const std::vector<uint8_t>& mask,
                           const std::vector<T>& weighting = {}) {
  const int terms = pred.term_count();
  SPC_CHECK(int(weighting.size()) == 0 || int(weighting.size()) == terms,
            "compute_loss: weight arity mismatch");
  const int batch = target.dim(0), joints = target.dim(1);
  SPC_CHECK(int(mask.size()) == batch * joints, "compute_loss: mask size mismatch");
  LossReport<T> report;
  report.weighting = weighting.empty() ? std::vector<T>(size_t(terms), T(1)) : weighting;

  auto term_of = [&](const Tensor<T>& y) {
    SPC_CHECK(y.same_shape(target), "compute_loss: prediction/target shape mismatch");
    const int64_t plane = int64_t(y.dim(2)) * y.dim(3);
    T acc = 0;
    for (int b = 0; b < batch; ++b)
      for (int n = 0; n < joints; ++n) {
        if (!mask[size_t(b * joints + n)]) continue;
        const T* yp = y.data() + (int64_t(b) * joints + n) * plane;
        const T* tp = target.data() + (int64_t(b) * joints + n) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const T d = tp[i] - yp[i];
          acc += d * d;
        }
      }
    return acc / (T(2) * T(batch));
  };

  for (const auto& hm : pred.intermediate) report.per_term.push_back(term_of(hm));
  report.per_term.push_back(term_of(pred.final));
  report.total = T(0);
  for (int t = 0; t < terms; ++t)
    report.total += report.weighting[size_t(t)] * report.per_term[size_t(t)];
  return report;
}

/// Gradients of the weighted total loss with respect to each head output.
template <typename T>
std::pair<std::vector<Tensor<T>>, Tensor<T>> compute_loss_grads(
    const PredictionBundle<T>& pred, const Tensor<T>& target,
    const std::vector<uint8_t>& mask, const std::vector<T>& weighting = {}) {
  const int terms = pred.term_count();
  std::vector<T> w = weighting.empty() ? std::vector<T>(size_t(terms), T(1)) : weighting;
  const int batch = target.dim(0), joints = target.dim(1);
  const int64_t plane = int64_t(target.dim(2)) * target.dim(3);

  auto grad_of = [&](const Tensor<T>& y, T wt) {
    Tensor<T> g(y.shape());
    for (int b = 0; b < batch; ++b)
      for (int n = 0; n < joints; ++n) {
        if (!mask[size_t(b * joints + n)]) continue;
        const T* yp = y.data() + (int64_t(b) * joints + n) * plane;
        const T* tp = target.data() + (int64_t(b) * joints + n) * plane;
        T* gp = g.data() + (int64_t(b) * joints + n) * plane;
        const T k = wt / T(batch);
        for (int64_t i = 0; i < plane; ++i) gp[i] = k * (yp[i] - tp[i]);
      }
    return g;
  };

  std::vector<Tensor<T>> d_inter;
  for (size_t s = 0; s < pred.intermediate.size(); ++s)
    d_inter.push_back(grad_of(pred.intermediate[s], w[s]));
  Tensor<T> d_final = grad_of(pred.final, w[size_t(terms - 1)]);
  return {std::move(d_inter), std::move(d_final)};
}

namespace detail {

template <typename T>
T bilinear_at(const T* plane, int h, int w, double y, double x) {
  if (x <= -1 || y <= -1 || x >= w || y >= h) return T(0);
  const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto v = [&](int yy, int xx) -> double {
    if (xx < 0 || yy < 0 || xx >= w || yy >= h) return 0.0;
    return double(plane[int64_t(yy) * w + xx]);
  };
  return T((1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x0 + 1)) +
           fy * ((1 - fx) * v(y0 + 1, x0) + fx * v(y0 + 1, x0 + 1)));
}

}  // namespace detail

/// Resamples [C,H,W] so content is zoomed by `factor` about the grid
/// center, bilinear with zero fill. factor == 1 is an exact copy.
template <typename T>
Tensor<T> zoom_about_center(const Tensor<T>& t, double factor) {
  if (factor == 1.0) return t;
  const int ch = t.dim(0), h = t.dim(1), w = t.dim(2);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  Tensor<T> out(t.shape());
  for (int c = 0; c < ch; ++c) {
    const T* src = t.data() + int64_t(c) * h * w;
    T* dst = out.data() + int64_t(c) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[int64_t(y) * w + x] =
            detail::bilinear_at(src, h, w, cy + (y - cy) / factor, cx + (x - cx) / factor);
  }
  return out;
}

template <typename T>
Tensor<T> hflip_image(const Tensor<T>& t) {
  const int ch = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor<T> out(t.shape());
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = t.at(c, y, w - 1 - x);
  return out;
}

/// Mirrors a heatmap stack back into the unflipped frame: horizontal
/// mirror plus left/right channel swap.
template <typename T>
Tensor<T> unflip_heatmaps(const Tensor<T>& hm,
                          const std::vector<std::pair<int, int>>& flip_pairs) {
  const int n = hm.dim(0);
  for (auto [l, r] : flip_pairs)
    SPC_CHECK(l >= 0 && l < n && r >= 0 && r < n && l != r,
              "unflip_heatmaps: invalid flip pair (", l, ",", r, ")");
  Tensor<T> out = hflip_image(hm);
  const int64_t plane = int64_t(hm.dim(1)) * hm.dim(2);
  for (auto [l, r] : flip_pairs)
    for (int64_t i = 0; i < plane; ++i)
      std::swap(out[int64_t(l) * plane + i], out[int64_t(r) * plane + i]);
  return out;
}

template <typename T>
Tensor<T> squeeze_batch(const Tensor<T>& t) {
  Tensor<T> out({t.dim(1), t.dim(2), t.dim(3)});
  std::copy(t.data(), t.data() + t.numel(), out.data());
  return out;
}

template <typename T>
Tensor<T> unsqueeze_batch(const Tensor<T>& t) {
  Tensor<T> out({1, t.dim(0), t.dim(1), t.dim(2)});
  std::copy(t.data(), t.data() + t.numel(), out.data());
  return out;
}

/// Single-crop inference: final fused heatmaps for one [3,S,S] crop.
template <typename T>
Tensor<T> infer_heatmaps(SPCNet<T>& net, const Tensor<T>& crop) {
  PredictionBundle<T> bundle = net.forward(unsqueeze_batch(crop), Context::eval());
  return squeeze_batch(bundle.final);
}

/// Flip-ensembled inference: average of the plain forward and the
/// mirrored forward mapped back through the left/right pairing.
template <typename T>
Tensor<T> infer_flip(SPCNet<T>& net, const Tensor<T>& crop,
                     const std::vector<std::pair<int, int>>& flip_pairs) {
  Tensor<T> h1 = infer_heatmaps(net, crop);
  Tensor<T> h2 = unflip_heatmaps(infer_heatmaps(net, hflip_image(crop)), flip_pairs);
  h1.add_(h2);
  h1.scale_(T(0.5));
  return h1;
}

/// Image-pyramid inference: forward each rescaled crop, map heatmaps back
/// to the base frame, and average.
template <typename T>
Tensor<T> infer_multiscale(SPCNet<T>& net, const Tensor<T>& crop,
                           const std::vector<double>& scales, bool flip,
                           const std::vector<std::pair<int, int>>& flip_pairs = {}) {
  SPC_CHECK(!scales.empty(), "infer_multiscale: empty scale list");
  for (double s : scales) SPC_CHECK(s > 0, "infer_multiscale: scales must be positive");
  Tensor<T> acc;
  for (double s : scales) {
    Tensor<T> crop_s = zoom_about_center(crop, s);
    Tensor<T> hm = flip ? infer_flip(net, crop_s, flip_pairs) : infer_heatmaps(net, crop_s);
    Tensor<T> back = zoom_about_center(hm, 1.0 / s);
    if (acc.numel() == 0)
      acc = std::move(back);
    else
      acc.add_(back);
  }
  acc.scale_(T(1.0 / double(scales.size())));
  return acc;
}

inline std::vector<double> default_pyramid_scales() {
  return {0.7, 0.8, 0.9, 1.0, 1.1, 1.2};
}

/// Decoded keypoints in the original image frame, plus the final heatmaps.
template <typename T>
std::pair<KeypointSet, Tensor<T>> infer_single(SPCNet<T>& net, const Tensor<T>& crop,
                                               const CropTransform& t) {
  Tensor<T> hm = infer_heatmaps(net, crop);
  KeypointSet kps = decode_heatmaps(hm, net.config().codec);
  KeypointSet in_crop = to_crop_frame(kps, net.config().codec);
  KeypointSet in_image = transform_keypoints(in_crop, t, MapDirection::Inverse, {});
  return {std::move(in_image), std::move(hm)};
}

}  // namespace spc
