#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "spcnet/train/rmsprop.hpp"

namespace spc {

/// Resumable training position. Parameters and optimizer state live in the
/// checkpoint container; this is the scalar part mirrored in the sidecar.
struct TrainState {
  int epoch = 0;
  int64_t global_step = 0;
  double best_metric = 0.0;
  uint64_t seed = 0;
};

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace ckpt_detail {

constexpr char kMagic[8] = {'S', 'P', 'C', 'N', 'E', 'T', '0', '1'};

template <typename T>
constexpr uint8_t dtype_tag() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

template <typename T>
void write_entry(std::ostream& out, const std::string& name, const Tensor<T>& t) {
  const uint32_t nl = uint32_t(name.size());
  out.write(reinterpret_cast<const char*>(&nl), 4);
  out.write(name.data(), nl);
  const uint8_t dt = dtype_tag<T>(), nd = uint8_t(t.rank());
  out.write(reinterpret_cast<const char*>(&dt), 1);
  out.write(reinterpret_cast<const char*>(&nd), 1);
  for (int d : t.shape()) {
    const uint32_t v = uint32_t(d);
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  out.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * sizeof(T)));
}

template <typename T>
std::pair<std::string, Tensor<T>> read_entry(std::istream& in) {
  uint32_t nl = 0;
  in.read(reinterpret_cast<char*>(&nl), 4);
  std::string name(nl, '\0');
  in.read(name.data(), nl);
  uint8_t dt = 0, nd = 0;
  in.read(reinterpret_cast<char*>(&dt), 1);
  in.read(reinterpret_cast<char*>(&nd), 1);
  SPC_CHECK_DATA(dt == dtype_tag<T>(), "checkpoint entry '", name,
                 "' has a different scalar type than the model");
  std::vector<int> shape(nd);
  for (auto& d : shape) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    d = int(v);
  }
  Tensor<T> t(shape);
  in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * sizeof(T)));
  SPC_CHECK_DATA(bool(in), "checkpoint truncated while reading '", name, "'");
  return {std::move(name), std::move(t)};
}

inline std::string config_diff(const std::string& ours, const std::string& theirs) {
  std::map<std::string, std::string> a, b;
  auto parse = [](const std::string& text, std::map<std::string, std::string>& out) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      out[line.substr(0, eq)] = line.substr(eq + 1);
    }
  };
  parse(ours, a);
  parse(theirs, b);
  std::ostringstream diff;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end())
      diff << "  " << k << ": " << v << " (current) vs <missing> (checkpoint)\n";
    else if (it->second != v)
      diff << "  " << k << ": " << v << " (current) vs " << it->second << " (checkpoint)\n";
  }
  for (const auto& [k, v] : b)
    if (!a.count(k)) diff << "  " << k << ": <missing> (current) vs " << v << " (checkpoint)\n";
  return diff.str();
}

}  // namespace ckpt_detail

/// Writes the parameter container (binary, little endian) and the JSON
/// metadata sidecar `<path>.json`. Optimizer accumulators are stored under
/// an "opt/" prefix so a resume continues the same trajectory.
template <typename T>
void save_checkpoint(const std::string& path, const ParamRegistry<T>& params,
                     const ParamRegistry<T>& buffers,
                     std::type_identity_t<const RMSProp<T>*> opt,
                     const TrainState& state, const std::string& config_text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(ckpt_detail::kMagic, 8);
  uint32_t count = uint32_t(params.size() + buffers.size() + (opt ? params.size() : 0));
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& e : params.entries()) ckpt_detail::write_entry(out, e.name, *e.value);
  for (const auto& e : buffers.entries()) ckpt_detail::write_entry(out, e.name, *e.value);
  if (opt) {
    const auto& entries = opt->params().entries();
    auto& ms = const_cast<RMSProp<T>*>(opt)->state();
    for (size_t i = 0; i < entries.size(); ++i)
      ckpt_detail::write_entry(out, "opt/" + entries[i].name, ms[i]);
  }
  if (!out) throw IoError("short write on checkpoint: " + path);

  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["config_hash"] = fnv1a64(config_text);
  meta["config_text"] = config_text;
  meta["epoch"] = state.epoch;
  meta["global_step"] = state.global_step;
  meta["best_metric"] = state.best_metric;
  meta["seed"] = state.seed;
  std::ofstream side(path + ".json");
  if (!side) throw IoError("cannot write checkpoint sidecar: " + path + ".json");
  side << meta.dump(2) << "\n";
}

inline nlohmann::json load_checkpoint_sidecar(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw IoError("cannot read checkpoint sidecar: " + path + ".json");
  nlohmann::json meta;
  side >> meta;
  return meta;
}

/// Loads parameters (and optionally optimizer state) back into registered
/// tensors. Refuses to load when the stored config hash disagrees with the
/// caller's, printing the differing keys.
template <typename T>
TrainState load_checkpoint(const std::string& path, ParamRegistry<T>& params,
                           ParamRegistry<T>& buffers, std::type_identity_t<RMSProp<T>*> opt,
                           const std::string& config_text, bool check_hash = true) {
  nlohmann::json meta = load_checkpoint_sidecar(path);
  const std::string their_text = meta.value("config_text", "");
  if (check_hash && meta.value("config_hash", uint64_t(0)) != fnv1a64(config_text))
    throw ConfigError("checkpoint config mismatch for " + path + ":\n" +
                      ckpt_detail::config_diff(config_text, their_text));

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  SPC_CHECK_DATA(std::memcmp(magic, ckpt_detail::kMagic, 8) == 0,
                 "not a checkpoint file: ", path);
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);

  std::map<std::string, Tensor<T>> stored;
  for (uint32_t i = 0; i < count; ++i) {
    auto [name, t] = ckpt_detail::read_entry<T>(in);
    stored.emplace(std::move(name), std::move(t));
  }

  auto assign = [&](ParamRegistry<T>& reg, const std::string& prefix) {
    for (auto& e : reg.entries()) {
      auto it = stored.find(prefix + e.name);
      SPC_CHECK_DATA(it != stored.end(), "checkpoint is missing tensor '", prefix + e.name, "'");
      SPC_CHECK_DATA(it->second.shape() == e.value->shape(), "checkpoint tensor '",
                     prefix + e.name, "' has mismatched shape");
      *e.value = it->second;
    }
  };
  assign(params, "");
  assign(buffers, "");
  if (opt) {
    auto& ms = opt->state();
    const auto& entries = opt->params().entries();
    for (size_t i = 0; i < entries.size(); ++i) {
      auto it = stored.find("opt/" + entries[i].name);
      if (it != stored.end()) ms[i] = it->second;
    }
  }

  TrainState state;
  state.epoch = meta.value("epoch", 0);
  state.global_step = meta.value("global_step", int64_t(0));
  state.best_metric = meta.value("best_metric", 0.0);
  state.seed = meta.value("seed", uint64_t(0));
  return state;
}

}  // namespace spc
