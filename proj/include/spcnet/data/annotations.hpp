#pragma once

#include <fstream>
#include <optional>

#include <json.hpp>

#include "spcnet/codec.hpp"

namespace spc {

enum class Split { Train, Val, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + s + "'");
}

/// One person instance: image reference, crop geometry, joints with
/// visibility, and the normalizer data for the metrics.
struct AnnotationRecord {
  std::string image_ref;
  Point2 center;
  double scale = 1.0;  // 1.0 ~ 200 px person height
  KeypointSet joints;  // image frame
  std::optional<std::array<double, 4>> head_box;      // x1,y1,x2,y2 for PCKh
  std::optional<std::pair<int, int>> torso_pair;      // joint indices for PCK
  Split split = Split::Train;
};

namespace detail {

inline int vis_to_int(Visibility v) {
  switch (v) {
    case Visibility::Absent: return 0;
    case Visibility::Occluded: return 1;
    case Visibility::Visible: return 2;
  }
  return 0;
}

inline Visibility vis_from_int(int v) {
  switch (v) {
    case 0: return Visibility::Absent;
    case 1: return Visibility::Occluded;
    case 2: return Visibility::Visible;
  }
  throw DataError("visibility flag must be 0, 1 or 2, got " + std::to_string(v));
}

}  // namespace detail

inline nlohmann::json record_to_json(const AnnotationRecord& rec) {
  nlohmann::json j;
  j["image"] = rec.image_ref;
  j["center"] = {rec.center.x, rec.center.y};
  j["scale"] = rec.scale;
  auto& joints = j["joints"] = nlohmann::json::array();
  auto& vis = j["visibility"] = nlohmann::json::array();
  for (int i = 0; i < rec.joints.size(); ++i) {
    joints.push_back({rec.joints.coords[size_t(i)].x, rec.joints.coords[size_t(i)].y});
    vis.push_back(detail::vis_to_int(rec.joints.visibility[size_t(i)]));
  }
  if (rec.head_box) j["head_box"] = *rec.head_box;
  if (rec.torso_pair) j["torso_pair"] = {rec.torso_pair->first, rec.torso_pair->second};
  j["split"] = to_string(rec.split);
  return j;
}

inline AnnotationRecord record_from_json(const nlohmann::json& j, size_t index) {
  auto fail = [index](const std::string& why) {
    throw DataError("record " + std::to_string(index) + ": " + why);
  };
  auto need = [&](const char* field) -> const nlohmann::json& {
    if (!j.contains(field)) fail(std::string("missing field '") + field + "'");
    return j.at(field);
  };

  AnnotationRecord rec;
  rec.image_ref = need("image").get<std::string>();
  const auto& c = need("center");
  if (!c.is_array() || c.size() != 2) fail("field 'center' must be [x, y]");
  rec.center = {c[0].get<double>(), c[1].get<double>()};
  rec.scale = need("scale").get<double>();
  if (!(rec.scale > 0)) fail("field 'scale' must be positive");

  const auto& joints = need("joints");
  const auto& vis = need("visibility");
  if (!joints.is_array() || !vis.is_array() || joints.size() != vis.size())
    fail("fields 'joints' and 'visibility' must be arrays of equal length");
  rec.joints = KeypointSet::make(int(joints.size()), Frame::Image);
  for (size_t i = 0; i < joints.size(); ++i) {
    if (!joints[i].is_array() || joints[i].size() != 2)
      fail("joint " + std::to_string(i) + " must be [x, y]");
    rec.joints.visibility[i] = detail::vis_from_int(vis[i].get<int>());
    if (rec.joints.visibility[i] == Visibility::Absent)
      rec.joints.coords[i] = {-1.0, -1.0};
    else
      rec.joints.coords[i] = {joints[i][0].get<double>(), joints[i][1].get<double>()};
  }

  if (j.contains("head_box")) {
    const auto& hb = j.at("head_box");
    if (!hb.is_array() || hb.size() != 4) fail("field 'head_box' must be [x1,y1,x2,y2]");
    std::array<double, 4> box{hb[0].get<double>(), hb[1].get<double>(), hb[2].get<double>(),
                              hb[3].get<double>()};
    if (!(box[0] < box[2] && box[1] < box[3])) fail("field 'head_box' is not well-ordered");
    rec.head_box = box;
  }
  if (j.contains("torso_pair")) {
    const auto& tp = j.at("torso_pair");
    if (!tp.is_array() || tp.size() != 2) fail("field 'torso_pair' must be [j1, j2]");
    rec.torso_pair = {tp[0].get<int>(), tp[1].get<int>()};
    if (rec.torso_pair->first < 0 || rec.torso_pair->first >= rec.joints.size() ||
        rec.torso_pair->second < 0 || rec.torso_pair->second >= rec.joints.size())
      fail("field 'torso_pair' indices out of range");
  }
  rec.split = split_from_string(need("split").get<std::string>());
  return rec;
}

/// Loads the annotation file: a JSON array of records. Malformed records
/// are reported with their index and the offending field.
inline std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("annotation file " + path + " is not valid JSON: " + e.what());
  }
  if (!doc.is_array()) throw DataError("annotation file must contain a JSON array");
  std::vector<AnnotationRecord> out;
  out.reserve(doc.size());
  for (size_t i = 0; i < doc.size(); ++i) out.push_back(record_from_json(doc[i], i));
  return out;
}

inline void save_annotations(const std::string& path,
                             const std::vector<AnnotationRecord>& records) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : records) doc.push_back(record_to_json(r));
  std::ofstream out(path);
  if (!out) throw IoError("cannot write annotation file: " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace spc
