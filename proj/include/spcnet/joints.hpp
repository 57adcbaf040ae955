#pragma once

#include <string>
#include <utility>
#include <vector>

#include "spcnet/common.hpp"

namespace spc {

/// Dataset joint layout: left/right pairing for flips, skeleton topology
/// for rendering, and the named groups used by the metric tables.
struct JointMap {
  int joint_count = 0;
  std::vector<std::pair<int, int>> flip_pairs;
  std::vector<int> parents;  // -1 for roots; used for skeleton drawing
  // metric groups in report column order
  std::vector<std::pair<std::string, std::vector<int>>> groups;

  /// MPII 16-joint convention:
  /// 0 r_ankle 1 r_knee 2 r_hip 3 l_hip 4 l_knee 5 l_ankle 6 pelvis
  /// 7 thorax 8 upper_neck 9 head_top 10 r_wrist 11 r_elbow 12 r_shoulder
  /// 13 l_shoulder 14 l_elbow 15 l_wrist
  static JointMap mpii16() {
    JointMap m;
    m.joint_count = 16;
    m.flip_pairs = {{0, 5}, {1, 4}, {2, 3}, {10, 15}, {11, 14}, {12, 13}};
    m.parents = {1, 2, 6, 6, 3, 4, -1, 6, 7, 8, 11, 12, 7, 7, 13, 14};
    m.groups = {
        {"Head", {8, 9}},   {"Sho.", {12, 13}}, {"Elb.", {11, 14}}, {"Wri.", {10, 15}},
        {"Hip", {2, 3}},    {"Knee", {1, 4}},   {"Ank.", {0, 5}},
    };
    return m;
  }

  void validate() const {
    SPC_CHECK(joint_count >= 1, "JointMap: joint count must be >= 1");
    for (auto [l, r] : flip_pairs)
      SPC_CHECK(l >= 0 && l < joint_count && r >= 0 && r < joint_count && l != r,
                "JointMap: invalid flip pair (", l, ",", r, ")");
    std::vector<int> seen(size_t(joint_count), 0);
    for (const auto& [name, ids] : groups)
      for (int j : ids) {
        SPC_CHECK(j >= 0 && j < joint_count, "JointMap: group '", name,
                  "' has out-of-range joint ", j);
        SPC_CHECK(seen[size_t(j)]++ == 0, "JointMap: joint ", j, " in more than one group");
      }
  }
};

}  // namespace spc
