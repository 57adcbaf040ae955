#pragma once

#include <fstream>
#include <iomanip>
#include <map>

#include "spcnet/data/annotations.hpp"
#include "spcnet/joints.hpp"

namespace spc {

enum class PCKVariant { PCKh, PCK };

inline const char* to_string(PCKVariant v) { return v == PCKVariant::PCKh ? "PCKh" : "PCK"; }

/// Metric configuration. PCKh normalizes by 0.6 x the head-box diagonal
/// (MPII convention); PCK normalizes by the distance between the record's
/// torso pair. Groups follow the standard table columns.
struct PCKConfig {
  PCKVariant variant = PCKVariant::PCKh;
  double threshold = 0.5;  // 0.5 for PCKh, 0.2 for PCK by convention
  double head_box_factor = 0.6;
  std::vector<std::pair<std::string, std::vector<int>>> joint_groups =
      JointMap::mpii16().groups;

  static PCKConfig pckh(double thr = 0.5) {
    PCKConfig c;
    c.variant = PCKVariant::PCKh;
    c.threshold = thr;
    return c;
  }
  static PCKConfig pck(double thr = 0.2) {
    PCKConfig c;
    c.variant = PCKVariant::PCK;
    c.threshold = thr;
    return c;
  }

  void validate() const {
    // zero is the degenerate exact-hit probe used by threshold sweeps;
    // config files require a strictly positive value
    SPC_CHECK(threshold >= 0, "PCKConfig: threshold must be non-negative");
    std::map<int, int> seen;
    for (const auto& [name, ids] : joint_groups)
      for (int j : ids)
        SPC_CHECK(seen[j]++ == 0, "PCKConfig: joint ", j, " belongs to more than one group");
  }
};

struct EvalReport {
  std::vector<std::pair<std::string, double>> per_group;  // scores in [0,1]
  double total = 0.0;  // correct / counted over all scored joints
  int sample_count = 0;
  double threshold = 0.0;
  PCKVariant variant = PCKVariant::PCKh;
};

inline double pck_normalizer(const AnnotationRecord& rec, const PCKConfig& cfg) {
  if (cfg.variant == PCKVariant::PCKh) {
    SPC_CHECK_DATA(rec.head_box.has_value(), "PCKh requires head_box on every record");
    const auto& b = *rec.head_box;
    return cfg.head_box_factor * std::hypot(b[2] - b[0], b[3] - b[1]);
  }
  SPC_CHECK_DATA(rec.torso_pair.has_value(), "PCK requires torso_pair on every record");
  const auto [a, b] = *rec.torso_pair;
  SPC_CHECK_DATA(!rec.joints.absent(a) && !rec.joints.absent(b),
                 "PCK torso joints must be present");
  const Point2 pa = rec.joints.coords[size_t(a)], pb = rec.joints.coords[size_t(b)];
  return std::hypot(pa.x - pb.x, pa.y - pb.y);
}

/// A joint scores correct when its prediction lies within
/// threshold x normalizer of the ground truth. Absent ground-truth joints
/// are excluded from both numerator and denominator; absent predictions
/// for present joints count as misses.
inline EvalReport pck_score(const std::vector<KeypointSet>& preds,
                            const std::vector<AnnotationRecord>& gts, const PCKConfig& cfg) {
  SPC_CHECK(preds.size() == gts.size(), "pck_score: prediction/annotation count mismatch");
  cfg.validate();

  int64_t correct_all = 0, counted_all = 0;
  std::map<std::string, std::pair<int64_t, int64_t>> group_counts;
  for (const auto& [name, ids] : cfg.joint_groups) group_counts[name] = {0, 0};

  for (size_t i = 0; i < gts.size(); ++i) {
    const AnnotationRecord& rec = gts[i];
    const KeypointSet& pred = preds[i];
    SPC_CHECK(pred.size() == rec.joints.size(), "pck_score: joint count mismatch at record ", i);
    const double norm = pck_normalizer(rec, cfg);
    SPC_CHECK_DATA(norm > 0, "pck_score: degenerate normalizer at record ", i);
    for (int j = 0; j < rec.joints.size(); ++j) {
      if (rec.joints.absent(j)) continue;
      bool ok = false;
      if (!pred.absent(j)) {
        const Point2 p = pred.coords[size_t(j)], g = rec.joints.coords[size_t(j)];
        ok = std::hypot(p.x - g.x, p.y - g.y) <= cfg.threshold * norm;
      }
      ++counted_all;
      correct_all += ok;
      for (const auto& [name, ids] : cfg.joint_groups)
        for (int id : ids)
          if (id == j) {
            auto& [c, n] = group_counts[name];
            ++n;
            c += ok;
          }
    }
  }

  EvalReport report;
  report.sample_count = int(gts.size());
  report.threshold = cfg.threshold;
  report.variant = cfg.variant;
  for (const auto& [name, ids] : cfg.joint_groups) {
    const auto& [c, n] = group_counts[name];
    report.per_group.emplace_back(name, n > 0 ? double(c) / double(n) : 0.0);
  }
  report.total = counted_all > 0 ? double(correct_all) / double(counted_all) : 0.0;
  return report;
}

/// pck_score swept over an ascending threshold list; one report per row.
inline std::vector<EvalReport> pck_curve(const std::vector<KeypointSet>& preds,
                                         const std::vector<AnnotationRecord>& gts,
                                         PCKConfig cfg, const std::vector<double>& thresholds) {
  SPC_CHECK(!thresholds.empty(), "pck_curve: empty threshold list");
  for (size_t i = 1; i < thresholds.size(); ++i)
    SPC_CHECK(thresholds[i] > thresholds[i - 1], "pck_curve: thresholds must be sorted ascending");
  std::vector<EvalReport> rows;
  rows.reserve(thresholds.size());
  for (double thr : thresholds) {
    cfg.threshold = thr;
    rows.push_back(pck_score(preds, gts, cfg));
  }
  return rows;
}

namespace detail {

inline std::string pct(double v) {
  std::ostringstream oss;
  oss << std::fixed << std::setprecision(1) << v * 100.0;
  return oss.str();
}

}  // namespace detail

enum class ReportFormat { Csv, Markdown };

/// Writes the report table: Head Sho. Elb. Wri. Hip Knee Ank. Total,
/// one decimal place in percent.
inline void emit_report(const EvalReport& report, ReportFormat format,
                        const std::string& path) {
  SPC_CHECK(!report.per_group.empty(), "emit_report: report has no joint groups");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path);
  if (format == ReportFormat::Csv) {
    for (const auto& [name, score] : report.per_group) out << name << ",";
    out << "Total\n";
    for (const auto& [name, score] : report.per_group) out << detail::pct(score) << ",";
    out << detail::pct(report.total) << "\n";
  } else {
    out << "|";
    for (const auto& [name, score] : report.per_group) out << " " << name << " |";
    out << " Total |\n|";
    for (size_t i = 0; i <= report.per_group.size(); ++i) out << "---|";
    out << "\n|";
    for (const auto& [name, score] : report.per_group) out << " " << detail::pct(score) << " |";
    out << " " << detail::pct(report.total) << " |\n";
  }
  if (!out) throw IoError("short write on report: " + path);
}

/// Parses a CSV emitted by emit_report back into scores (round-trip check
/// and downstream tooling).
inline EvalReport parse_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read report: " + path);
  std::string header, values;
  std::getline(in, header);
  std::getline(in, values);
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::istringstream iss(s);
    std::string tok;
    while (std::getline(iss, tok, ',')) parts.push_back(tok);
    return parts;
  };
  auto names = split(header);
  auto vals = split(values);
  SPC_CHECK_DATA(names.size() == vals.size() && names.size() >= 1 && names.back() == "Total",
                 "malformed report csv: ", path);
  EvalReport report;
  for (size_t i = 0; i + 1 < names.size(); ++i)
    report.per_group.emplace_back(names[i], std::stod(vals[i]) / 100.0);
  report.total = std::stod(vals.back()) / 100.0;
  return report;
}

inline void emit_curve_csv(const std::vector<EvalReport>& rows, const std::string& path) {
  SPC_CHECK(!rows.empty(), "emit_curve_csv: empty curve");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write curve: " + path);
  out << "threshold,";
  for (const auto& [name, score] : rows[0].per_group) out << name << ",";
  out << "Total\n";
  for (const auto& row : rows) {
    out << row.threshold << ",";
    for (const auto& [name, score] : row.per_group) out << detail::pct(score) << ",";
    out << detail::pct(row.total) << "\n";
  }
}

}  // namespace spc
