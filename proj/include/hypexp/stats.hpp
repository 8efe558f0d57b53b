#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "hypexp/errors.hpp"

namespace hypexp {

/// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0, comp_ = 0;
};

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

inline double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  CompensatedSum s;
  for (double x : xs) s.add((x - m) * (x - m));
  return std::sqrt(s.value() / static_cast<double>(xs.size() - 1));
}

/// Accumulates a stream into B equal consecutive batches of known total length.
class BatchMeans {
 public:
  BatchMeans(std::size_t total, int batches) : total_(total), sums_(std::max(1, batches)) {
    if (batches < 1) throw PreconditionError("BatchMeans: need at least one batch");
    if (total < static_cast<std::size_t>(batches)) throw PreconditionError("BatchMeans: fewer samples than batches");
  }

  void add(double x) {
    const std::size_t b = seen_ * sums_.size() / total_;
    sums_[std::min(b, sums_.size() - 1)].add(x);
    total_sum_.add(x);
    ++seen_;
  }

  std::size_t count() const { return seen_; }
  double mean() const { return seen_ ? total_sum_.value() / static_cast<double>(seen_) : 0.0; }

  std::vector<double> batch_means() const {
    std::vector<double> out(sums_.size());
    const std::size_t b = sums_.size();
    for (std::size_t k = 0; k < b; ++k) {
      const std::size_t lo = k * total_ / b, hi = (k + 1) * total_ / b;
      const std::size_t len = hi > lo ? hi - lo : 1;
      out[k] = sums_[k].value() / static_cast<double>(len);
    }
    return out;
  }

  /// Standard error of the overall mean from the spread of batch means.
  double standard_error() const {
    const auto bm = batch_means();
    if (bm.size() < 2) return 0.0;
    return sample_sd(bm) / std::sqrt(static_cast<double>(bm.size()));
  }

 private:
  std::size_t total_;
  std::size_t seen_ = 0;
  std::vector<CompensatedSum> sums_;
  CompensatedSum total_sum_;
};

/// Kolmogorov-Smirnov distance between the weighted empirical law of xs and
/// the uniform law on [a,b].
inline double ks_uniform(std::vector<double> xs, std::span<const double> weights, double a = 0.0, double b = 1.0) {
  const std::size_t n = xs.size();
  if (n == 0) return 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) total += weights.empty() ? 1.0 : weights[i];
  double cdf = 0, d = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    const double u = std::clamp((xs[i] - a) / (b - a), 0.0, 1.0);
    d = std::max(d, std::abs(u - cdf));
    cdf += (weights.empty() ? 1.0 : weights[i]) / total;
    d = std::max(d, std::abs(cdf - u));
  }
  return d;
}

inline double ks_uniform(std::vector<double> xs, double a = 0.0, double b = 1.0) {
  return ks_uniform(std::move(xs), std::span<const double>{}, a, b);
}

}  // namespace hypexp
