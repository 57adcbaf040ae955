#pragma once

#include "spcnet/data/image.hpp"
#include "spcnet/joints.hpp"
#include "spcnet/nn/spcnet.hpp"

namespace spc {

/// Channel-max heatmap composite blended over the image, with the decoded
/// skeleton drawn on top. Writes a PNG.
template <typename T>
void render_heatmap_overlay(const cv::Mat& image, const Tensor<T>& heatmaps,
                            const KeypointSet& kps_image, const JointMap& joints,
                            const std::string& out_path) {
  SPC_CHECK(heatmaps.rank() == 3, "render_heatmap_overlay: expected [N,h,w] heatmaps");
  const int hs = heatmaps.dim(1), ws = heatmaps.dim(2);
  cv::Mat composite(hs, ws, CV_32F, cv::Scalar(0));
  for (int j = 0; j < heatmaps.dim(0); ++j)
    for (int y = 0; y < hs; ++y)
      for (int x = 0; x < ws; ++x)
        composite.at<float>(y, x) =
            std::max(composite.at<float>(y, x),
                     std::clamp(float(heatmaps.at(j, y, x)), 0.0f, 1.0f));

  cv::Mat heat8, heat_color, heat_big;
  composite.convertTo(heat8, CV_8U, 255.0);
  cv::applyColorMap(heat8, heat_color, cv::COLORMAP_JET);
  cv::resize(heat_color, heat_big, image.size(), 0, 0, cv::INTER_LINEAR);

  cv::Mat blended;
  cv::addWeighted(image, 0.55, heat_big, 0.45, 0.0, blended);

  for (int j = 0; j < kps_image.size(); ++j) {
    if (kps_image.absent(j)) continue;
    const Point2 p = kps_image.coords[size_t(j)];
    const int parent = j < int(joints.parents.size()) ? joints.parents[size_t(j)] : -1;
    if (parent >= 0 && !kps_image.absent(parent)) {
      const Point2 q = kps_image.coords[size_t(parent)];
      cv::line(blended, cv::Point(int(p.x), int(p.y)), cv::Point(int(q.x), int(q.y)),
               cv::Scalar(255, 255, 255), 2, cv::LINE_AA);
    }
  }
  for (int j = 0; j < kps_image.size(); ++j) {
    if (kps_image.absent(j)) continue;
    const Point2 p = kps_image.coords[size_t(j)];
    cv::circle(blended, cv::Point(int(p.x), int(p.y)), 3, cv::Scalar(0, 255, 0), -1,
               cv::LINE_AA);
  }
  save_image(out_path, blended);
}

/// Per-level fusion weight maps as grayscale PNGs (diagnostic output).
template <typename T>
void export_fusion_weight_maps(const Tensor<T>& weights, const std::string& path_prefix) {
  SPC_CHECK(weights.rank() == 3 || weights.rank() == 4,
            "export_fusion_weight_maps: expected [4,h,w] or [B,4,h,w]");
  const Tensor<T> w = weights.rank() == 4 ? squeeze_batch(weights) : weights;
  for (int n = 0; n < w.dim(0); ++n) {
    cv::Mat img(w.dim(1), w.dim(2), CV_8U);
    for (int y = 0; y < w.dim(1); ++y)
      for (int x = 0; x < w.dim(2); ++x)
        img.at<uchar>(y, x) = cv::saturate_cast<uchar>(double(w.at(n, y, x)) * 255.0);
    save_image(path_prefix + "_level" + std::to_string(n + 1) + ".png", img);
  }
}

}  // namespace spc
