#pragma once

// Counter-based generator: each (seed, task, stream) triple names an
// independent sequence, so results never depend on scheduling.

#include <cstdint>

namespace hypexp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t {
  initial_points = 1,
  disk_jitter = 2,
  audit_points = 3,
  uniform_cloud = 4,
  instances = 5,
};

class TaskRng {
 public:
  TaskRng(std::uint64_t seed, std::uint64_t task, Stream stream)
      : key_(splitmix64(splitmix64(splitmix64(seed) ^ task) ^ static_cast<std::uint64_t>(stream))) {}

  std::uint64_t next() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace hypexp
