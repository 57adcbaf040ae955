#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "spcnet/joints.hpp"
#include "spcnet/tensor.hpp"

namespace spc {

enum class Frame { Image, Crop, Heatmap };
enum class Visibility { Visible, Occluded, Absent };

struct Point2 {
  double x = 0, y = 0;
};

/// N keypoints in a declared coordinate frame. Absent joints are stored as
/// (-1,-1) and ignored by all consumers.
struct KeypointSet {
  std::vector<Point2> coords;
  std::vector<Visibility> visibility;
  Frame frame = Frame::Image;

  int size() const { return int(coords.size()); }

  bool absent(int j) const { return visibility[size_t(j)] == Visibility::Absent; }

  void set_absent(int j) {
    visibility[size_t(j)] = Visibility::Absent;
    coords[size_t(j)] = {-1.0, -1.0};
  }

  static KeypointSet make(int n, Frame frame) {
    KeypointSet k;
    k.coords.assign(size_t(n), {-1.0, -1.0});
    k.visibility.assign(size_t(n), Visibility::Absent);
    k.frame = frame;
    return k;
  }
};

/// Codec geometry: network input crop, heatmap grid, Gaussian target shape.
struct CodecConfig {
  int input_size = 256;
  int heatmap_size = 64;
  double sigma = 1.0;            // heatmap pixels; the paper leaves this open
  double truncate_radius = 3.0;  // in multiples of sigma
  bool subpixel_refine = false;  // optional quarter-offset decode, off by default

  int stride() const { return input_size / heatmap_size; }

  void validate() const {
    SPC_CHECK(heatmap_size > 0 && input_size > 0, "CodecConfig: sizes must be positive");
    SPC_CHECK(input_size % heatmap_size == 0 && input_size == stride() * heatmap_size,
              "CodecConfig: input_size must be stride * heatmap_size");
    SPC_CHECK(sigma > 0, "CodecConfig: sigma must be positive");
    SPC_CHECK(truncate_radius >= 1, "CodecConfig: truncate_radius must be >= 1");
  }
};

/// Invertible 2x3 affine map.
struct Affine {
  // row-major [a b c; d e f]: (x,y) -> (a x + b y + c, d x + e y + f)
  std::array<double, 6> m{1, 0, 0, 0, 1, 0};

  static Affine identity() { return {}; }

  static Affine translation(double tx, double ty) { return {{1, 0, tx, 0, 1, ty}}; }

  static Affine scaling(double s) { return {{s, 0, 0, 0, s, 0}}; }

  static Affine rotation_deg(double deg) {
    const double r = deg * M_PI / 180.0;
    return {{std::cos(r), -std::sin(r), 0, std::sin(r), std::cos(r), 0}};
  }

  // reflection about the vertical axis x = (width-1)/2
  static Affine hflip(int width) { return {{-1, 0, double(width - 1), 0, 1, 0}}; }

  Point2 apply(Point2 p) const {
    return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
  }

  Affine compose(const Affine& inner) const {  // this ∘ inner
    Affine r;
    r.m[0] = m[0] * inner.m[0] + m[1] * inner.m[3];
    r.m[1] = m[0] * inner.m[1] + m[1] * inner.m[4];
    r.m[2] = m[0] * inner.m[2] + m[1] * inner.m[5] + m[2];
    r.m[3] = m[3] * inner.m[0] + m[4] * inner.m[3];
    r.m[4] = m[3] * inner.m[1] + m[4] * inner.m[4];
    r.m[5] = m[3] * inner.m[2] + m[4] * inner.m[5] + m[5];
    return r;
  }

  Affine inverse() const {
    const double det = m[0] * m[4] - m[1] * m[3];
    SPC_CHECK(std::abs(det) > 1e-12, "Affine: singular transform");
    Affine r;
    r.m[0] = m[4] / det;
    r.m[1] = -m[1] / det;
    r.m[3] = -m[3] / det;
    r.m[4] = m[0] / det;
    r.m[2] = -(r.m[0] * m[2] + r.m[1] * m[5]);
    r.m[5] = -(r.m[3] * m[2] + r.m[4] * m[5]);
    return r;
  }
};

/// Crop geometry: image coordinates -> network crop coordinates.
/// A person scale of 1.0 corresponds to a 200 px body height; the crop
/// zoom maps that span onto the output size.
struct CropTransform {
  Point2 center;
  double scale = 1.0;
  double rotation_deg = 0.0;
  bool flip = false;
  int output_size = 256;
  Affine forward_map;

  Point2 to_crop(Point2 p) const { return forward_map.apply(p); }
  Point2 to_image(Point2 p) const { return forward_map.inverse().apply(p); }
};

struct AugmentParams {
  double rotation_deg = 0.0;
  double scale_jitter = 1.0;
  bool flip = false;
};

inline CropTransform build_crop_transform(Point2 center, double scale,
                                          const AugmentParams& aug, int output_size) {
  SPC_CHECK_DATA(scale > 0, "build_crop_transform: non-positive scale ", scale);
  SPC_CHECK_DATA(aug.scale_jitter > 0, "build_crop_transform: non-positive scale jitter");
  CropTransform t;
  t.center = center;
  t.scale = scale * aug.scale_jitter;
  t.rotation_deg = aug.rotation_deg;
  t.flip = aug.flip;
  t.output_size = output_size;
  const double zoom = double(output_size) / (200.0 * t.scale);
  Affine map = Affine::translation(output_size / 2.0, output_size / 2.0)
                   .compose(Affine::rotation_deg(aug.rotation_deg))
                   .compose(Affine::scaling(zoom))
                   .compose(Affine::translation(-center.x, -center.y));
  if (aug.flip) map = Affine::hflip(output_size).compose(map);
  t.forward_map = map;
  return t;
}

enum class MapDirection { Forward, Inverse };

/// Maps keypoints between image and crop frames. Forward mapping demotes
/// joints that land outside the crop to absent; a flip also swaps the
/// left/right joint indices.
inline KeypointSet transform_keypoints(const KeypointSet& kps, const CropTransform& t,
                                       MapDirection dir,
                                       const std::vector<std::pair<int, int>>& flip_pairs) {
  if (dir == MapDirection::Forward)
    SPC_CHECK(kps.frame == Frame::Image, "transform_keypoints: forward expects image frame");
  else
    SPC_CHECK(kps.frame == Frame::Crop, "transform_keypoints: inverse expects crop frame");

  KeypointSet out = kps;
  const Affine map = dir == MapDirection::Forward ? t.forward_map : t.forward_map.inverse();
  for (int j = 0; j < kps.size(); ++j) {
    if (kps.absent(j)) continue;
    Point2 p = map.apply(kps.coords[size_t(j)]);
    if (dir == MapDirection::Forward &&
        (p.x < 0 || p.y < 0 || p.x >= t.output_size || p.y >= t.output_size)) {
      out.set_absent(j);
      continue;
    }
    out.coords[size_t(j)] = p;
  }
  if (t.flip) {
    for (auto [l, r] : flip_pairs) {
      std::swap(out.coords[size_t(l)], out.coords[size_t(r)]);
      std::swap(out.visibility[size_t(l)], out.visibility[size_t(r)]);
    }
  }
  out.frame = dir == MapDirection::Forward ? Frame::Crop : Frame::Image;
  return out;
}

/// Crop frame -> heatmap frame (divide by stride). No demotion here;
/// encode_heatmaps applies its own bounds rule after rounding.
inline KeypointSet to_heatmap_frame(const KeypointSet& kps, const CodecConfig& cfg) {
  SPC_CHECK(kps.frame == Frame::Crop, "to_heatmap_frame: expected crop frame");
  KeypointSet out = kps;
  const double s = cfg.stride();
  for (int j = 0; j < kps.size(); ++j) {
    if (kps.absent(j)) continue;
    out.coords[size_t(j)] = {kps.coords[size_t(j)].x / s, kps.coords[size_t(j)].y / s};
  }
  out.frame = Frame::Heatmap;
  return out;
}

inline KeypointSet to_crop_frame(const KeypointSet& kps, const CodecConfig& cfg) {
  SPC_CHECK(kps.frame == Frame::Heatmap, "to_crop_frame: expected heatmap frame");
  KeypointSet out = kps;
  const double s = cfg.stride();
  for (int j = 0; j < kps.size(); ++j) {
    if (kps.absent(j)) continue;
    out.coords[size_t(j)] = {kps.coords[size_t(j)].x * s, kps.coords[size_t(j)].y * s};
  }
  out.frame = Frame::Crop;
  return out;
}

/// Gaussian score-map targets: channel n peaks at exactly 1 on the joint's
/// quantized pixel and falls off as exp(-d^2 / (2 sigma^2)) inside a ball
/// of radius truncate_radius * sigma; zero outside. Joints that round
/// outside the grid are demoted to absent (their channel stays zero);
/// the returned mask flags the joints that were actually encoded.
template <typename T = float>
Tensor<T> encode_heatmaps(const KeypointSet& kps, const CodecConfig& cfg,
                          std::vector<uint8_t>* mask_out = nullptr) {
  SPC_CHECK(kps.frame == Frame::Heatmap, "encode_heatmaps: expected heatmap frame");
  cfg.validate();
  const int n = kps.size(), hw = cfg.heatmap_size;
  SPC_CHECK(n >= 1, "encode_heatmaps: empty keypoint set");
  Tensor<T> hm({n, hw, hw});
  if (mask_out) mask_out->assign(size_t(n), 0);
  const double radius = cfg.truncate_radius * cfg.sigma;
  const double inv2s2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  for (int j = 0; j < n; ++j) {
    if (kps.absent(j)) continue;
    const int cx = int(std::lround(kps.coords[size_t(j)].x));
    const int cy = int(std::lround(kps.coords[size_t(j)].y));
    if (cx < 0 || cy < 0 || cx >= hw || cy >= hw) continue;  // out-of-grid -> absent
    if (mask_out) (*mask_out)[size_t(j)] = 1;
    const int r = int(std::ceil(radius));
    for (int y = std::max(0, cy - r); y <= std::min(hw - 1, cy + r); ++y)
      for (int x = std::max(0, cx - r); x <= std::min(hw - 1, cx + r); ++x) {
        const double d2 = double(x - cx) * (x - cx) + double(y - cy) * (y - cy);
        if (d2 > radius * radius) continue;
        hm.at(j, y, x) = T(std::exp(-d2 * inv2s2));
      }
  }
  return hm;
}

/// Argmax decode. Ties break to the first occurrence in row-major order;
/// channels whose maximum is <= 0 decode to absent joints. The optional
/// quarter-offset refinement nudges the peak toward the larger neighbor.
template <typename T>
KeypointSet decode_heatmaps(const Tensor<T>& hm, const CodecConfig& cfg) {
  SPC_CHECK(hm.rank() == 3 && hm.numel() > 0, "decode_heatmaps: empty stack");
  SPC_CHECK(hm.dim(1) == cfg.heatmap_size && hm.dim(2) == cfg.heatmap_size,
            "decode_heatmaps: resolution mismatch");
  const int n = hm.dim(0), hs = hm.dim(1), ws = hm.dim(2);
  KeypointSet out = KeypointSet::make(n, Frame::Heatmap);
  for (int j = 0; j < n; ++j) {
    const T* p = hm.data() + int64_t(j) * hs * ws;
    int64_t best = 0;
    for (int64_t i = 1; i < int64_t(hs) * ws; ++i)
      if (p[i] > p[best]) best = i;
    if (!(p[best] > T(0))) continue;
    double x = double(best % ws), y = double(best / ws);
    if (cfg.subpixel_refine) {
      const int ix = int(best % ws), iy = int(best / ws);
      if (ix > 0 && ix < ws - 1) x += 0.25 * (p[iy * ws + ix + 1] > p[iy * ws + ix - 1] ? 1 : -1);
      if (iy > 0 && iy < hs - 1) y += 0.25 * (p[(iy + 1) * ws + ix] > p[(iy - 1) * ws + ix] ? 1 : -1);
    }
    out.coords[size_t(j)] = {x, y};
    out.visibility[size_t(j)] = Visibility::Visible;
  }
  return out;
}

}  // namespace spc
