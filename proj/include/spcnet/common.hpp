#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace spc {

// Error categories used across the toolkit. Configuration problems
// (shape/channel mismatches, bad options), malformed data, numeric
// blowups and I/O failures are kept distinct so callers can map them
// to exit codes and messages.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
template <typename... Args>
std::string format_msg(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  return oss.str();
}
}  // namespace detail

#define SPC_CHECK(cond, ...)                                               \
  do {                                                                     \
    if (!(cond)) throw ::spc::ConfigError(::spc::detail::format_msg(__VA_ARGS__)); \
  } while (0)

#define SPC_CHECK_DATA(cond, ...)                                          \
  do {                                                                     \
    if (!(cond)) throw ::spc::DataError(::spc::detail::format_msg(__VA_ARGS__)); \
  } while (0)

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and stream ids.
// Used so per-epoch / per-record augmentation draws do not depend on
// iteration order.
inline uint64_t substream_seed(uint64_t base, uint64_t a, uint64_t b = 0) {
  return splitmix64(splitmix64(base ^ (a * 0xd6e8feb86659fd93ULL)) ^ b);
}

// Deterministic RNG. The raw generator is xoshiro-free splitmix64
// chaining; uniform/normal draws are produced from explicit bit
// manipulation instead of std:: distributions, whose sequences are
// implementation defined.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(splitmix64(seed ^ 0x853c49e6748fea9bULL)) {}

  uint64_t next_u64() {
    state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
    return z ^ (z >> 33);
  }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + int(next_u64() % uint64_t(hi_inclusive - lo + 1));
  }

  // Box-Muller; one value per call, pair cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace spc
