#include <gtest/gtest.h>

#include <filesystem>

#include "spcnet/eval/metrics.hpp"

using namespace spc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() / ("spcnet_metrics_" + std::to_string(::getpid()) +
                                            "_" + std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

// two samples, two joints each, unit normalizer by construction
struct Fixture {
  std::vector<AnnotationRecord> gts;
  std::vector<KeypointSet> preds;
};

Fixture two_by_two_fixture(const std::array<double, 4>& distances) {
  Fixture f;
  for (int s = 0; s < 2; ++s) {
    AnnotationRecord rec;
    rec.image_ref = "none";
    rec.center = {50, 50};
    rec.scale = 0.5;
    rec.joints = KeypointSet::make(2, Frame::Image);
    rec.joints.coords[0] = {20, 20};
    rec.joints.coords[1] = {20, 21};  // torso pair distance 1 -> normalizer 1
    rec.joints.visibility[0] = rec.joints.visibility[1] = Visibility::Visible;
    rec.torso_pair = {{0, 1}};
    rec.head_box = {{19, 19, 21, 21}};
    f.gts.push_back(rec);
    KeypointSet pred = KeypointSet::make(2, Frame::Image);
    for (int j = 0; j < 2; ++j) {
      const double d = distances[size_t(2 * s + j)];
      pred.coords[size_t(j)] = {20 + d, 20 + j};  // offset purely in x
      pred.visibility[size_t(j)] = Visibility::Visible;
    }
    f.preds.push_back(pred);
  }
  return f;
}

PCKConfig two_joint_pck(double thr) {
  PCKConfig cfg = PCKConfig::pck(thr);
  cfg.joint_groups = {{"A", {0}}, {"B", {1}}};
  return cfg;
}

}  // namespace

TEST(PckScore, HandPlacedDistancesGiveTotalOneHalf) {
  // distances {0.1, 0.3, 0.6, 0.7} x normalizer at threshold 0.5:
  // exactly 2 of 4 joints are correct
  Fixture f = two_by_two_fixture({0.1, 0.3, 0.6, 0.7});
  EvalReport rep = pck_score(f.preds, f.gts, two_joint_pck(0.5));
  EXPECT_DOUBLE_EQ(rep.total, 0.5);
  EXPECT_EQ(rep.sample_count, 2);
}

TEST(PckScore, ExactPredictionsScoreOne) {
  Fixture f = two_by_two_fixture({0, 0, 0, 0});
  EvalReport rep = pck_score(f.preds, f.gts, two_joint_pck(0.5));
  EXPECT_DOUBLE_EQ(rep.total, 1.0);
  for (const auto& [name, score] : rep.per_group) EXPECT_DOUBLE_EQ(score, 1.0);
}

TEST(PckScore, BelowThresholdCountsCorrect) {
  // distance 0.4 x normalizer at threshold 0.5 is within tolerance
  Fixture f = two_by_two_fixture({0.4, 0.4, 0.4, 0.4});
  EvalReport rep = pck_score(f.preds, f.gts, two_joint_pck(0.5));
  EXPECT_DOUBLE_EQ(rep.total, 1.0);
}

TEST(PckScore, AbsentGroundTruthExcludedFromBothSides) {
  // use the head-box normalizer so the absent joint cannot disturb it;
  // 0.6 * diag(2x2 box) ~ 1.697, threshold 0.5 -> tolerance ~0.849
  Fixture f = two_by_two_fixture({0.1, 0.9, 0.1, 0.9});
  f.gts[0].joints.set_absent(1);  // drop one far joint from the count
  PCKConfig cfg = PCKConfig::pckh(0.5);
  cfg.joint_groups = {{"A", {0}}, {"B", {1}}};
  EvalReport rep = pck_score(f.preds, f.gts, cfg);
  EXPECT_DOUBLE_EQ(rep.total, 2.0 / 3.0);
}

TEST(PckScore, AbsentPredictionForPresentJointIsAMiss) {
  Fixture f = two_by_two_fixture({0, 0, 0, 0});
  f.preds[0].set_absent(0);
  EvalReport rep = pck_score(f.preds, f.gts, two_joint_pck(0.5));
  EXPECT_DOUBLE_EQ(rep.total, 0.75);
}

TEST(PckScore, MissingHeadBoxForPckhIsDataError) {
  Fixture f = two_by_two_fixture({0, 0, 0, 0});
  f.gts[1].head_box.reset();
  PCKConfig cfg = PCKConfig::pckh(0.5);
  cfg.joint_groups = {{"A", {0}}, {"B", {1}}};
  EXPECT_THROW(pck_score(f.preds, f.gts, cfg), DataError);
}

TEST(PckScore, PckhUsesHeadBoxDiagonalTimesFactor) {
  Fixture f = two_by_two_fixture({0, 0, 0, 0});
  // head box 2x2 -> diag 2*sqrt(2), normalizer 0.6 * diag ~ 1.697
  PCKConfig cfg = PCKConfig::pckh(0.5);
  cfg.joint_groups = {{"A", {0}}, {"B", {1}}};
  f.preds[0].coords[0].x += 0.5 * 0.6 * 2.0 * std::sqrt(2.0) - 1e-9;  // just inside
  f.preds[1].coords[0].x += 0.5 * 0.6 * 2.0 * std::sqrt(2.0) + 1e-6;  // just outside
  EvalReport rep = pck_score(f.preds, f.gts, cfg);
  EXPECT_DOUBLE_EQ(rep.total, 0.75);
}

TEST(PckScore, InvariantToCommonRigidTranslation) {
  Fixture f = two_by_two_fixture({0.1, 0.45, 0.55, 0.8});
  EvalReport before = pck_score(f.preds, f.gts, two_joint_pck(0.5));
  for (auto& rec : f.gts) {
    for (auto& c : rec.joints.coords) {
      c.x += 17.5;
      c.y -= 42.25;
    }
    (*rec.head_box)[0] += 17.5;
    (*rec.head_box)[2] += 17.5;
    (*rec.head_box)[1] -= 42.25;
    (*rec.head_box)[3] -= 42.25;
  }
  for (auto& pred : f.preds)
    for (auto& c : pred.coords) {
      c.x += 17.5;
      c.y -= 42.25;
    }
  EvalReport after = pck_score(f.preds, f.gts, two_joint_pck(0.5));
  EXPECT_DOUBLE_EQ(before.total, after.total);
}

TEST(PckScore, ScaleCovariance) {
  // doubling every coordinate doubles the normalizers too, so nothing
  // about the score changes
  Fixture f = two_by_two_fixture({0.2, 0.45, 0.55, 0.9});
  EvalReport before = pck_score(f.preds, f.gts, two_joint_pck(0.5));
  for (auto& rec : f.gts) {
    for (auto& c : rec.joints.coords) {
      c.x *= 2;
      c.y *= 2;
    }
    for (auto& v : *rec.head_box) v *= 2;
  }
  for (auto& pred : f.preds)
    for (auto& c : pred.coords) {
      c.x *= 2;
      c.y *= 2;
    }
  EvalReport after = pck_score(f.preds, f.gts, two_joint_pck(0.5));
  EXPECT_DOUBLE_EQ(before.total, after.total);
  for (size_t g = 0; g < before.per_group.size(); ++g)
    EXPECT_DOUBLE_EQ(before.per_group[g].second, after.per_group[g].second);
}

TEST(PckScore, TotalMatchesIndependentCountingOracle) {
  Rng rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    const int samples = 1 + int(rng.next_u64() % 5);
    const int joints = 2 + int(rng.next_u64() % 6);
    std::vector<AnnotationRecord> gts;
    std::vector<KeypointSet> preds;
    PCKConfig cfg = PCKConfig::pck(0.5);
    cfg.joint_groups.clear();
    for (int j = 0; j < joints; ++j)
      cfg.joint_groups.push_back({"g" + std::to_string(j), {j}});
    for (int s = 0; s < samples; ++s) {
      AnnotationRecord rec;
      rec.center = {0, 0};
      rec.scale = 1;
      rec.joints = KeypointSet::make(joints, Frame::Image);
      for (int j = 0; j < joints; ++j) {
        rec.joints.coords[size_t(j)] = {rng.uniform(0, 100), rng.uniform(0, 100)};
        rec.joints.visibility[size_t(j)] =
            rng.bernoulli(0.15) ? Visibility::Absent : Visibility::Visible;
        if (rec.joints.visibility[size_t(j)] == Visibility::Absent)
          rec.joints.coords[size_t(j)] = {-1, -1};
      }
      rec.joints.visibility[0] = rec.joints.visibility[1] = Visibility::Visible;
      rec.joints.coords[0] = {10, 10};
      rec.joints.coords[1] = {10 + rng.uniform(2, 10), 10};
      rec.torso_pair = {{0, 1}};
      gts.push_back(rec);
      KeypointSet pred = KeypointSet::make(joints, Frame::Image);
      for (int j = 0; j < joints; ++j) {
        pred.coords[size_t(j)] = {rng.uniform(0, 100), rng.uniform(0, 100)};
        pred.visibility[size_t(j)] = Visibility::Visible;
      }
      preds.push_back(pred);
    }
    EvalReport rep = pck_score(preds, gts, cfg);

    // independent recount
    int64_t correct = 0, counted = 0;
    for (size_t s = 0; s < gts.size(); ++s) {
      const auto [a, b] = *gts[s].torso_pair;
      const double norm = std::hypot(gts[s].joints.coords[size_t(a)].x -
                                         gts[s].joints.coords[size_t(b)].x,
                                     gts[s].joints.coords[size_t(a)].y -
                                         gts[s].joints.coords[size_t(b)].y);
      for (int j = 0; j < joints; ++j) {
        if (gts[s].joints.absent(j)) continue;
        ++counted;
        const double d = std::hypot(
            preds[s].coords[size_t(j)].x - gts[s].joints.coords[size_t(j)].x,
            preds[s].coords[size_t(j)].y - gts[s].joints.coords[size_t(j)].y);
        if (d <= 0.5 * norm) ++correct;
      }
    }
    EXPECT_DOUBLE_EQ(rep.total, counted ? double(correct) / double(counted) : 0.0);
  }
}

TEST(PckCurve, TenRowTableOverPaperThresholdRange) {
  Fixture f = two_by_two_fixture({0.1, 0.3, 0.6, 0.7});
  std::vector<double> thresholds;
  for (int i = 1; i <= 10; ++i) thresholds.push_back(0.05 * i);
  auto rows = pck_curve(f.preds, f.gts, two_joint_pck(0.5), thresholds);
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_DOUBLE_EQ(rows.front().threshold, 0.05);
  EXPECT_DOUBLE_EQ(rows.back().threshold, 0.5);
}

TEST(PckCurve, MonotoneNonDecreasingInThreshold) {
  Rng rng(505);
  Fixture f = two_by_two_fixture({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1),
                                  rng.uniform(0, 1)});
  std::vector<double> thresholds;
  for (int i = 1; i <= 10; ++i) thresholds.push_back(0.05 * i);
  auto rows = pck_curve(f.preds, f.gts, two_joint_pck(0.5), thresholds);
  for (size_t i = 1; i < rows.size(); ++i) {
    EXPECT_GE(rows[i].total, rows[i - 1].total);
    for (size_t g = 0; g < rows[i].per_group.size(); ++g)
      EXPECT_GE(rows[i].per_group[g].second, rows[i - 1].per_group[g].second);
  }
}

TEST(PckCurve, UnsortedThresholdsAreConfigError) {
  Fixture f = two_by_two_fixture({0, 0, 0, 0});
  EXPECT_THROW(pck_curve(f.preds, f.gts, two_joint_pck(0.5), {0.2, 0.1}), ConfigError);
}

TEST(PckCurve, ZeroThresholdCountsOnlyExactHits) {
  Fixture f = two_by_two_fixture({0.0, 0.3, 0.0, 0.7});
  PCKConfig cfg = two_joint_pck(0.5);
  cfg.threshold = 0.0;
  EvalReport rep = pck_score(f.preds, f.gts, cfg);
  EXPECT_DOUBLE_EQ(rep.total, 0.5);
}

TEST(EmitReport, MpiiColumnOrderAndOneDecimalPercent) {
  EvalReport rep;
  rep.per_group = {{"Head", 1.0}, {"Sho.", 1.0}, {"Elb.", 1.0}, {"Wri.", 1.0},
                   {"Hip", 1.0},  {"Knee", 1.0}, {"Ank.", 1.0}};
  rep.total = 1.0;
  fs::path dir = temp_dir();
  const std::string path = (dir / "report.csv").string();
  emit_report(rep, ReportFormat::Csv, path);
  std::ifstream in(path);
  std::string header, values;
  std::getline(in, header);
  std::getline(in, values);
  EXPECT_EQ(header, "Head,Sho.,Elb.,Wri.,Hip,Knee,Ank.,Total");
  EXPECT_EQ(values, "100.0,100.0,100.0,100.0,100.0,100.0,100.0,100.0");
}

TEST(EmitReport, CsvParsesBackToTheSameScores) {
  EvalReport rep;
  rep.per_group = {{"Head", 0.968}, {"Sho.", 0.964}, {"Elb.", 0.909}, {"Wri.", 0.863},
                   {"Hip", 0.898},  {"Knee", 0.864}, {"Ank.", 0.825}};
  rep.total = 0.900;
  fs::path dir = temp_dir();
  const std::string path = (dir / "round.csv").string();
  emit_report(rep, ReportFormat::Csv, path);
  EvalReport back = parse_report_csv(path);
  ASSERT_EQ(back.per_group.size(), rep.per_group.size());
  for (size_t g = 0; g < rep.per_group.size(); ++g) {
    EXPECT_EQ(back.per_group[g].first, rep.per_group[g].first);
    EXPECT_NEAR(back.per_group[g].second, rep.per_group[g].second, 5e-4);
  }
  EXPECT_NEAR(back.total, rep.total, 5e-4);
}

TEST(EmitReport, MarkdownTableHasHeaderAndRow) {
  EvalReport rep;
  rep.per_group = {{"Head", 0.5}};
  rep.total = 0.5;
  fs::path dir = temp_dir();
  const std::string path = (dir / "report.md").string();
  emit_report(rep, ReportFormat::Markdown, path);
  std::ifstream in(path);
  std::string line1, line2, line3;
  std::getline(in, line1);
  std::getline(in, line2);
  std::getline(in, line3);
  EXPECT_EQ(line1, "| Head | Total |");
  EXPECT_EQ(line3, "| 50.0 | 50.0 |");
}

TEST(EmitReport, EmptyGroupsAreConfigError) {
  EvalReport rep;
  fs::path dir = temp_dir();
  EXPECT_THROW(emit_report(rep, ReportFormat::Csv, (dir / "x.csv").string()), ConfigError);
}

TEST(PckConfig, DuplicateGroupMembershipIsConfigError) {
  PCKConfig cfg = PCKConfig::pckh(0.5);
  cfg.joint_groups.push_back({"Dup", {9}});  // 9 is already in Head
  EXPECT_THROW(cfg.validate(), ConfigError);
}
