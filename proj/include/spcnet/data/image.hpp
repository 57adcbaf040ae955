#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "spcnet/codec.hpp"
#include "spcnet/tensor.hpp"

namespace spc {

/// Per-channel normalization constants applied to [0,1] RGB values.
struct NormalizeParams {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.5, 0.5, 0.5};
};

/// BGR byte image -> normalized planar RGB float tensor [3,H,W].
template <typename T = float>
Tensor<T> tensor_from_mat(const cv::Mat& bgr, const NormalizeParams& norm = {}) {
  SPC_CHECK_DATA(bgr.type() == CV_8UC3, "tensor_from_mat: expected 8-bit BGR image");
  const int h = bgr.rows, w = bgr.cols;
  Tensor<T> t({3, h, w});
  for (int y = 0; y < h; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = row[x][2 - c] / 255.0;  // BGR -> RGB
        t.at(c, y, x) = T((v - norm.mean[size_t(c)]) / norm.stddev[size_t(c)]);
      }
  }
  return t;
}

template <typename T>
cv::Mat mat_from_tensor(const Tensor<T>& rgb, const NormalizeParams& norm = {}) {
  SPC_CHECK(rgb.rank() == 3 && rgb.dim(0) == 3, "mat_from_tensor: expected [3,H,W]");
  const int h = rgb.dim(1), w = rgb.dim(2);
  cv::Mat out(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    cv::Vec3b* row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = double(rgb.at(c, y, x)) * norm.stddev[size_t(c)] + norm.mean[size_t(c)];
        row[x][2 - c] = cv::saturate_cast<uchar>(v * 255.0);
      }
  }
  return out;
}

inline cv::Mat affine_to_mat(const Affine& a) {
  cv::Mat m(2, 3, CV_64F);
  for (int i = 0; i < 6; ++i) m.at<double>(i / 3, i % 3) = a.m[size_t(i)];
  return m;
}

/// Warps pixels image -> crop with the crop transform, bilinear with zero
/// border fill.
inline cv::Mat warp_to_crop(const cv::Mat& image, const CropTransform& t) {
  cv::Mat out;
  cv::warpAffine(image, out, affine_to_mat(t.forward_map),
                 cv::Size(t.output_size, t.output_size), cv::INTER_LINEAR,
                 cv::BORDER_CONSTANT, cv::Scalar(0, 0, 0));
  return out;
}

inline cv::Mat load_image(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw IoError("failed to read image: " + path);
  return img;
}

inline void save_image(const std::string& path, const cv::Mat& img) {
  if (!cv::imwrite(path, img)) throw IoError("failed to write image: " + path);
}

}  // namespace spc
