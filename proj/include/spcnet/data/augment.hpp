#pragma once

#include "spcnet/data/annotations.hpp"
#include "spcnet/data/image.hpp"
#include "spcnet/joints.hpp"

namespace spc {

/// Training-time augmentation ranges: rotation (-60, 60) degrees, scale
/// (0.75, 1.25), flip probability 0.5.
struct AugmentConfig {
  double rotation_range = 60.0;
  double scale_low = 0.75;
  double scale_high = 1.25;
  double flip_prob = 0.5;
  bool enabled = true;
};

inline AugmentParams sample_augment_params(Rng& rng, const AugmentConfig& cfg) {
  if (!cfg.enabled) return {};
  AugmentParams p;
  p.rotation_deg = rng.uniform(-cfg.rotation_range, cfg.rotation_range);
  p.scale_jitter = rng.uniform(cfg.scale_low, cfg.scale_high);
  p.flip = rng.bernoulli(cfg.flip_prob);
  return p;
}

/// One network-ready training sample.
template <typename T = float>
struct TrainSample {
  Tensor<T> image;         // [3,S,S], normalized
  KeypointSet kps_crop;    // crop frame, augmentation applied
  Tensor<T> target;        // [N,h,h] Gaussian score maps
  std::vector<uint8_t> mask;  // per-joint supervision flags
  CropTransform transform;
};

/// Crops around the annotated center/scale with the given augmentation,
/// warps pixels bilinearly, maps the joints through the same transform and
/// encodes the Gaussian targets. Joints pushed out of the crop are demoted
/// to absent and masked out of the loss.
template <typename T = float>
TrainSample<T> crop_and_augment(const cv::Mat& image, const AnnotationRecord& rec,
                                const AugmentParams& aug, const CodecConfig& codec,
                                const JointMap& joints, const NormalizeParams& norm = {},
                                bool supervise_occluded = true) {
  SPC_CHECK_DATA(rec.scale > 0, "crop_and_augment: non-positive scale");
  TrainSample<T> sample;
  sample.transform = build_crop_transform(rec.center, rec.scale, aug, codec.input_size);
  cv::Mat crop = warp_to_crop(image, sample.transform);
  sample.image = tensor_from_mat<T>(crop, norm);
  sample.kps_crop =
      transform_keypoints(rec.joints, sample.transform, MapDirection::Forward, joints.flip_pairs);
  KeypointSet hm_kps = to_heatmap_frame(sample.kps_crop, codec);
  sample.target = encode_heatmaps<T>(hm_kps, codec, &sample.mask);
  if (!supervise_occluded)
    for (int j = 0; j < sample.kps_crop.size(); ++j)
      if (sample.kps_crop.visibility[size_t(j)] == Visibility::Occluded)
        sample.mask[size_t(j)] = 0;
  return sample;
}

}  // namespace spc
