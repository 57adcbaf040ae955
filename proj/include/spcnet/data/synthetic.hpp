#pragma once

#include <filesystem>

#include "spcnet/data/annotations.hpp"
#include "spcnet/data/image.hpp"
#include "spcnet/joints.hpp"

namespace spc {

/// Stick-figure scene generator. Poses are sampled around a canonical
/// skeleton; joints carry distinct saturated marker colors so tests can
/// read marker positions back out of the rendered pixels.
struct SyntheticSceneSpec {
  JointMap joints = JointMap::mpii16();
  int canvas_size = 256;
  double marker_radius = 4.0;
  double limb_width = 3.0;
  double figure_scale_low = 0.42;   // figure unit as a fraction of canvas
  double figure_scale_high = 0.52;
  double rotation_range_deg = 25.0;
  double joint_jitter = 0.012;      // fraction of canvas, per-joint
  double translate_range = 0.08;    // fraction of canvas
  Split split = Split::Train;

  void validate() const {
    joints.validate();
    SPC_CHECK(canvas_size >= 32, "SyntheticSceneSpec: canvas too small");
    // the skeleton template below is a single-rooted tree; only the MPII
    // joint count is supported
    SPC_CHECK(joints.joint_count == 16, "SyntheticSceneSpec: template has 16 joints");
  }
};

namespace synth_detail {

// canonical MPII-16 pose, unit coordinates, y down
inline const std::array<Point2, 16>& template_pose() {
  static const std::array<Point2, 16> tpl = {{
      {-0.15, 0.55},   // 0 r_ankle
      {-0.14, 0.28},   // 1 r_knee
      {-0.12, 0.00},   // 2 r_hip
      {0.12, 0.00},    // 3 l_hip
      {0.14, 0.28},    // 4 l_knee
      {0.15, 0.55},    // 5 l_ankle
      {0.00, 0.00},    // 6 pelvis
      {0.00, -0.26},   // 7 thorax
      {0.00, -0.38},   // 8 upper_neck
      {0.00, -0.55},   // 9 head_top
      {-0.33, 0.18},   // 10 r_wrist
      {-0.30, -0.06},  // 11 r_elbow
      {-0.20, -0.28},  // 12 r_shoulder
      {0.20, -0.28},   // 13 l_shoulder
      {0.30, -0.06},   // 14 l_elbow
      {0.33, 0.18},    // 15 l_wrist
  }};
  return tpl;
}

inline cv::Vec3b palette_color(int j, int n) {
  // evenly spaced hues with alternating brightness so neighboring entries
  // stay far apart in RGB; deterministic HSV -> RGB
  const double h = 360.0 * j / n;
  const double s = j % 2 == 0 ? 0.9 : 1.0;
  const double v = j % 2 == 0 ? 1.0 : 0.62;
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return cv::Vec3b(uchar(std::lround((b + m) * 255)), uchar(std::lround((g + m) * 255)),
                   uchar(std::lround((r + m) * 255)));  // BGR
}

// analytic-coverage disc: alpha = clamp(radius + 0.5 - dist, 0, 1)
inline void draw_disc(cv::Mat& img, Point2 c, double radius, cv::Vec3b color) {
  const int x0 = std::max(0, int(std::floor(c.x - radius - 1)));
  const int x1 = std::min(img.cols - 1, int(std::ceil(c.x + radius + 1)));
  const int y0 = std::max(0, int(std::floor(c.y - radius - 1)));
  const int y1 = std::min(img.rows - 1, int(std::ceil(c.y + radius + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(x - c.x, y - c.y);
      const double a = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      if (a <= 0) continue;
      cv::Vec3b& px = img.at<cv::Vec3b>(y, x);
      for (int k = 0; k < 3; ++k)
        px[k] = uchar(std::lround(a * color[k] + (1.0 - a) * px[k]));
    }
}

inline void draw_segment(cv::Mat& img, Point2 a, Point2 b, double width, cv::Vec3b color) {
  const double half = width / 2.0;
  const int x0 = std::max(0, int(std::floor(std::min(a.x, b.x) - half - 1)));
  const int x1 = std::min(img.cols - 1, int(std::ceil(std::max(a.x, b.x) + half + 1)));
  const int y0 = std::max(0, int(std::floor(std::min(a.y, b.y) - half - 1)));
  const int y1 = std::min(img.rows - 1, int(std::ceil(std::max(a.y, b.y) + half + 1)));
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double t = len2 > 0 ? ((x - a.x) * dx + (y - a.y) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double d = std::hypot(x - (a.x + t * dx), y - (a.y + t * dy));
      const double alpha = std::clamp(half + 0.5 - d, 0.0, 1.0);
      if (alpha <= 0) continue;
      cv::Vec3b& px = img.at<cv::Vec3b>(y, x);
      for (int k = 0; k < 3; ++k)
        px[k] = uchar(std::lround(alpha * color[k] + (1.0 - alpha) * px[k]));
    }
}

}  // namespace synth_detail

struct SyntheticScene {
  cv::Mat image;  // BGR
  AnnotationRecord record;
};

/// Samples one stick-figure scene. All joints are visible by construction
/// and the annotation coordinates are exactly the rendered marker centers.
inline SyntheticScene sample_synthetic_scene(const SyntheticSceneSpec& spec, Rng& rng) {
  spec.validate();
  const int n = spec.joints.joint_count;
  const double canvas = spec.canvas_size;
  const double unit = canvas * rng.uniform(spec.figure_scale_low, spec.figure_scale_high);
  const Affine rot = Affine::rotation_deg(rng.uniform(-spec.rotation_range_deg,
                                                      spec.rotation_range_deg));
  const Point2 center{canvas / 2.0 + canvas * rng.uniform(-spec.translate_range, spec.translate_range),
                      canvas / 2.0 + canvas * rng.uniform(-spec.translate_range, spec.translate_range)};

  std::vector<Point2> pts(static_cast<size_t>(n));
  const double margin = spec.marker_radius + 2.0;
  for (int j = 0; j < n; ++j) {
    Point2 p = rot.apply(synth_detail::template_pose()[size_t(j)]);
    p = {center.x + unit * p.x + canvas * spec.joint_jitter * rng.normal(),
         center.y + unit * p.y + canvas * spec.joint_jitter * rng.normal()};
    p.x = std::clamp(p.x, margin, canvas - 1 - margin);
    p.y = std::clamp(p.y, margin, canvas - 1 - margin);
    pts[size_t(j)] = p;
  }

  cv::Mat img(spec.canvas_size, spec.canvas_size, CV_8UC3, cv::Scalar(26, 26, 30));
  for (int j = 0; j < n; ++j) {
    const int parent = spec.joints.parents[size_t(j)];
    if (parent < 0) continue;
    // stop limbs short of the marker discs so each marker sits on clean
    // background and its rendered centroid stays on the joint coordinate
    Point2 a = pts[size_t(j)], b = pts[size_t(parent)];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const double trim = spec.marker_radius + 2.0;
    if (len <= 2 * trim + 1) continue;
    const Point2 dir{(b.x - a.x) / len, (b.y - a.y) / len};
    a = {a.x + trim * dir.x, a.y + trim * dir.y};
    b = {b.x - trim * dir.x, b.y - trim * dir.y};
    synth_detail::draw_segment(img, a, b, spec.limb_width, cv::Vec3b(86, 86, 86));
  }
  for (int j = 0; j < n; ++j)
    synth_detail::draw_disc(img, pts[size_t(j)], spec.marker_radius,
                            synth_detail::palette_color(j, n));

  SyntheticScene scene;
  scene.image = img;
  scene.record.image_ref = "";
  scene.record.center = {canvas / 2.0, canvas / 2.0};
  scene.record.scale = canvas / 200.0;  // identity crop for a canvas-sized input
  scene.record.joints = KeypointSet::make(n, Frame::Image);
  for (int j = 0; j < n; ++j) {
    scene.record.joints.coords[size_t(j)] = pts[size_t(j)];
    scene.record.joints.visibility[size_t(j)] = Visibility::Visible;
  }
  // head box around the head segment, torso pair across the trunk
  const Point2 head = pts[9], neck = pts[8];
  const Point2 mid{(head.x + neck.x) / 2.0, (head.y + neck.y) / 2.0};
  const double half = std::max(4.0, 0.9 * std::hypot(head.x - neck.x, head.y - neck.y));
  scene.record.head_box = {{mid.x - half, mid.y - half, mid.x + half, mid.y + half}};
  scene.record.torso_pair = {{12, 3}};  // r_shoulder <-> l_hip
  scene.record.split = spec.split;
  return scene;
}

/// Generates `count` scenes, writes PNGs plus annotations.json under
/// out_dir, and returns the records. Deterministic for a fixed seed.
inline std::vector<AnnotationRecord> generate_synthetic_dataset(
    const SyntheticSceneSpec& spec, int count, uint64_t seed, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "imgs");
  std::vector<AnnotationRecord> records;
  records.reserve(size_t(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(substream_seed(seed, uint64_t(i)));
    SyntheticScene scene = sample_synthetic_scene(spec, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "imgs/%06d.png", i);
    scene.record.image_ref = name;
    save_image((fs::path(out_dir) / name).string(), scene.image);
    records.push_back(std::move(scene.record));
  }
  save_annotations((fs::path(out_dir) / "annotations.json").string(), records);
  return records;
}

/// In-memory variant for tests: images stay as Mats, nothing touches disk.
inline std::vector<SyntheticScene> generate_synthetic_scenes(const SyntheticSceneSpec& spec,
                                                             int count, uint64_t seed) {
  std::vector<SyntheticScene> out;
  out.reserve(size_t(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(substream_seed(seed, uint64_t(i)));
    out.push_back(sample_synthetic_scene(spec, rng));
  }
  return out;
}

/// Color-match weighted centroid of one joint's marker; used by tests to
/// verify rendered markers sit on the annotated coordinates. Each pixel is
/// classified against the full palette (plus limb and background colors)
/// and contributes only when the requested joint's color is the nearest
/// match; the weight approximates the coverage alpha so edge pixels pull
/// the centroid onto the sub-pixel center.
inline std::optional<Point2> marker_centroid(const cv::Mat& img, int joint, int joint_count) {
  std::vector<cv::Vec3b> refs;
  for (int j = 0; j < joint_count; ++j) refs.push_back(synth_detail::palette_color(j, joint_count));
  refs.push_back(cv::Vec3b(86, 86, 86));  // limbs
  refs.push_back(cv::Vec3b(26, 26, 30));  // background
  auto l1 = [](const cv::Vec3b& a, const cv::Vec3b& b) {
    return std::abs(int(a[0]) - int(b[0])) + std::abs(int(a[1]) - int(b[1])) +
           std::abs(int(a[2]) - int(b[2]));
  };
  double wsum = 0, xsum = 0, ysum = 0;
  for (int y = 0; y < img.rows; ++y) {
    const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      int best = 0, best_dist = l1(row[x], refs[0]);
      for (size_t r = 1; r < refs.size(); ++r) {
        const int d = l1(row[x], refs[r]);
        if (d < best_dist) {
          best_dist = d;
          best = int(r);
        }
      }
      // cap the distance so half-blended edges of other markers, which
      // wander through color space, can never contribute
      if (best != joint || best_dist > 45) continue;
      const double w = std::clamp(1.0 - best_dist / 250.0, 0.0, 1.0);
      if (w <= 0) continue;
      wsum += w;
      xsum += w * x;
      ysum += w * y;
    }
  }
  if (wsum < 1.0) return std::nullopt;
  return Point2{xsum / wsum, ysum / wsum};
}

}  // namespace spc
