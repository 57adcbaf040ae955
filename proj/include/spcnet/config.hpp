#pragma once

#include <fstream>
#include <map>
#include <sstream>

#include "spcnet/eval/metrics.hpp"
#include "spcnet/nn/spcnet.hpp"
#include "spcnet/train/schedule.hpp"
#include "spcnet/train/trainer.hpp"

namespace spc {

/// Flat `key = value` config file. '#' starts a comment; keys are dotted
/// paths mirroring the config structs (see configs/ for examples).
class KeyValueConfig {
 public:
  static KeyValueConfig parse_text(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      auto eq = line.find('=');
      SPC_CHECK_DATA(eq != std::string::npos, "config line ", lineno, ": expected key = value");
      cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }

  double get_double(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw DataError("config key '" + key + "': not a number: " + it->second);
    }
  }

  int get_int(const std::string& key, int dflt) const {
    return int(std::llround(get_double(key, dflt)));
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second == "true" || it->second == "on" || it->second == "1") return true;
    if (it->second == "false" || it->second == "off" || it->second == "0") return false;
    throw DataError("config key '" + key + "': expected a boolean, got " + it->second);
  }

  std::vector<double> get_list(const std::string& key, std::vector<double> dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::vector<double> out;
    std::istringstream iss(it->second);
    std::string tok;
    while (std::getline(iss, tok, ',')) out.push_back(std::stod(trim(tok)));
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
};

/// Everything one run needs: model, schedule, metric, data paths, options.
struct ToolkitConfig {
  SPCNetConfig model;
  OptimizerSchedule schedule;
  PCKConfig metric;
  AugmentConfig augment;
  NormalizeParams norm;
  JointMap joints = JointMap::mpii16();
  std::string annotations;
  std::string image_root;
  std::string out_dir = "runs/out";
  uint64_t seed = 0;
  int log_interval = 10;
  int64_t max_steps = 0;
  bool supervise_occluded = true;
};

inline ToolkitConfig config_from_kv(const KeyValueConfig& kv) {
  ToolkitConfig c;
  c.model.stack_count = kv.get_int("model.stack_count", 8);
  c.model.joint_count = kv.get_int("model.joint_count", 16);
  c.model.base_channels = kv.get_int("model.base_channels", 256);
  c.model.dilation = kv.get_int("model.dilation", 2);
  c.model.dilated_block_count = kv.get_int("model.dilated_blocks", 3);
  c.model.encoder_blocks = kv.get_int("model.encoder_blocks", 1);
  c.model.decoder_refine_blocks = kv.get_int("model.decoder_refine_blocks", 1);
  const std::string mk = kv.get_string("model.module_kind", "dhm");
  if (mk == "dhm") c.model.module_kind = ModuleKind::DHM;
  else if (mk == "hourglass") c.model.module_kind = ModuleKind::Hourglass;
  else throw DataError("config model.module_kind: expected dhm|hourglass, got " + mk);
  const std::string fk = kv.get_string("model.fusion_kind", "sim");
  if (fk == "sim") c.model.fusion_kind = FusionKind::SIM;
  else if (fk == "sum") c.model.fusion_kind = FusionKind::Sum;
  else if (fk == "concat") c.model.fusion_kind = FusionKind::Concat;
  else throw DataError("config model.fusion_kind: expected sim|sum|concat, got " + fk);

  c.model.codec.input_size = kv.get_int("codec.input_size", 256);
  c.model.codec.heatmap_size = kv.get_int("codec.heatmap_size", 64);
  c.model.codec.sigma = kv.get_double("codec.sigma", 1.0);
  c.model.codec.truncate_radius = kv.get_double("codec.truncate_radius", 3.0);
  c.model.codec.subpixel_refine = kv.get_bool("codec.subpixel_refine", false);

  c.schedule.base_lr = kv.get_double("train.base_lr", 1e-3);
  auto ml = kv.get_list("train.milestones", {120, 150});
  c.schedule.milestones.assign(ml.size(), 0);
  for (size_t i = 0; i < ml.size(); ++i) c.schedule.milestones[i] = int(ml[i]);
  c.schedule.decay_factor = kv.get_double("train.decay_factor", 0.1);
  c.schedule.total_epochs = kv.get_int("train.total_epochs", 170);
  c.schedule.batch_size = kv.get_int("train.batch_size", 48);
  c.schedule.rmsprop_alpha = kv.get_double("train.rmsprop_alpha", 0.99);
  c.schedule.rmsprop_eps = kv.get_double("train.rmsprop_eps", 1e-8);
  c.seed = uint64_t(kv.get_int("train.seed", 0));
  c.log_interval = kv.get_int("train.log_interval", 10);
  c.max_steps = kv.get_int("train.max_steps", 0);
  c.augment.enabled = kv.get_bool("train.augment", true);
  c.augment.rotation_range = kv.get_double("train.rotation_range", 60.0);
  c.augment.scale_low = kv.get_double("train.scale_low", 0.75);
  c.augment.scale_high = kv.get_double("train.scale_high", 1.25);
  c.augment.flip_prob = kv.get_double("train.flip_prob", 0.5);
  c.supervise_occluded = kv.get_bool("train.supervise_occluded", true);

  const std::string mv = kv.get_string("metric.variant", "pckh");
  if (mv == "pckh") c.metric = PCKConfig::pckh(kv.get_double("metric.threshold", 0.5));
  else if (mv == "pck") c.metric = PCKConfig::pck(kv.get_double("metric.threshold", 0.2));
  else throw DataError("config metric.variant: expected pckh|pck, got " + mv);
  SPC_CHECK_DATA(c.metric.threshold > 0, "config metric.threshold must be positive");
  c.metric.head_box_factor = kv.get_double("metric.head_box_factor", 0.6);

  auto mean = kv.get_list("data.norm_mean", {0.5, 0.5, 0.5});
  auto stddev = kv.get_list("data.norm_std", {0.5, 0.5, 0.5});
  SPC_CHECK_DATA(mean.size() == 3 && stddev.size() == 3,
                 "config data.norm_mean/std: expected 3 values");
  for (int i = 0; i < 3; ++i) {
    c.norm.mean[size_t(i)] = mean[size_t(i)];
    c.norm.stddev[size_t(i)] = stddev[size_t(i)];
  }
  c.annotations = kv.get_string("data.annotations", "");
  c.image_root = kv.get_string("data.image_root", "");
  c.out_dir = kv.get_string("out.dir", "runs/out");

  c.model.validate();
  c.schedule.validate();
  c.metric.validate();
  return c;
}

inline ToolkitConfig load_toolkit_config(const std::string& path) {
  return config_from_kv(KeyValueConfig::parse_file(path));
}

/// Canonical serialization of the model-identity keys. Checkpoints hash
/// this text; loading refuses on a mismatch.
inline std::string model_config_text(const SPCNetConfig& cfg) {
  std::ostringstream out;
  out << "codec.heatmap_size=" << cfg.codec.heatmap_size << "\n";
  out << "codec.input_size=" << cfg.codec.input_size << "\n";
  out << "codec.sigma=" << cfg.codec.sigma << "\n";
  out << "codec.subpixel_refine=" << (cfg.codec.subpixel_refine ? 1 : 0) << "\n";
  out << "codec.truncate_radius=" << cfg.codec.truncate_radius << "\n";
  out << "model.base_channels=" << cfg.base_channels << "\n";
  out << "model.decoder_refine_blocks=" << cfg.decoder_refine_blocks << "\n";
  out << "model.dilated_blocks=" << cfg.dilated_block_count << "\n";
  out << "model.dilation=" << cfg.dilation << "\n";
  out << "model.encoder_blocks=" << cfg.encoder_blocks << "\n";
  out << "model.fusion_kind="
      << (cfg.fusion_kind == FusionKind::SIM ? "sim"
          : cfg.fusion_kind == FusionKind::Sum ? "sum" : "concat")
      << "\n";
  out << "model.joint_count=" << cfg.joint_count << "\n";
  out << "model.module_kind=" << (cfg.module_kind == ModuleKind::DHM ? "dhm" : "hourglass")
      << "\n";
  out << "model.stack_count=" << cfg.stack_count << "\n";
  return out.str();
}

}  // namespace spc
