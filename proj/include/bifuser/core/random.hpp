#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "bifuser/core/tensor.hpp"

namespace bifuser {

/// Seeded random stream. One instance per logical consumer keeps runs
/// reproducible regardless of evaluation order elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::mt19937_64& engine() { return engine_; }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive bounds
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }

  /// Derive an independent stream; mixes the label into the parent seed.
  Rng fork(std::uint64_t label) {
    std::uint64_t s = engine_();
    s ^= 0x9e3779b97f4a7c15ull + (label << 6) + (label >> 2);
    return Rng(s);
  }

  template <typename S>
  Tensor<S> normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0) {
    Tensor<S> t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(normal(mean, stddev));
    return t;
  }
  template <typename S>
  Tensor<S> uniform_tensor(Shape shape, double lo = 0.0, double hi = 1.0) {
    Tensor<S> t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(uniform(lo, hi));
    return t;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }
  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

 private:
  std::mt19937_64 engine_;
};

/// FNV-1a, used for stable dataset splits keyed on file paths.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace bifuser
