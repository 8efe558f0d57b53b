#pragma once

// Empirical measures: unstable-disk pushforwards (Cesàro clouds), visit
// statistics, forward/backward Birkhoff averages, basin dispersion and the
// mostly-expanding diagnostic.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "hypexp/errors.hpp"
#include "hypexp/lyapunov.hpp"
#include "hypexp/parallel.hpp"
#include "hypexp/rng.hpp"
#include "hypexp/stats.hpp"
#include "hypexp/system.hpp"

namespace hypexp {

/// Segment of an unstable leaf: base ⊕ τ·e_u, τ ∈ [-δ, δ].
template <class P>
struct UnstableDisk {
  P base;
  double half_length = 0.01;
  std::size_t samples = 4096;
};

/// Stratified jittered leaf parameters τ_i ∈ [-δ, δ], one per stratum.
inline std::vector<double> disk_parameters(double half_length, std::size_t m, std::uint64_t seed) {
  std::vector<double> tau(m);
  for (std::size_t i = 0; i < m; ++i) {
    TaskRng rng(seed, i, Stream::disk_jitter);
    tau[i] = (-1.0 + 2.0 * (static_cast<double>(i) + rng.uniform()) / static_cast<double>(m)) * half_length;
  }
  return tau;
}

template <class P>
struct EmpiricalMeasure {
  std::vector<P> points;
  std::vector<double> weights;
  std::vector<std::uint32_t> groups;  // disk sample (or orbit) each point came from
  std::string provenance;

  std::size_t size() const { return points.size(); }
  double total_weight() const {
    CompensatedSum s;
    for (double w : weights) s.add(w);
    return s.value();
  }
};

/// μ_n = (1/n) Σ_{j<n} map^j_* (normalized leaf Lebesgue on the disk),
/// realized as the cloud {map^j(p_i)} with weights 1/(n m).
template <class S, class M>
EmpiricalMeasure<typename M::Point> pushforward_measure(const S& sys, const M& map,
                                                        const UnstableDisk<typename M::Point>& disk, std::size_t n,
                                                        std::uint64_t seed) {
  using P = typename M::Point;
  if (n < 1 || disk.samples < 1) throw PreconditionError("pushforward_measure: need n >= 1 and m >= 1");
  const auto tau = disk_parameters(disk.half_length, disk.samples, seed);
  const auto orbits = parallel_map(disk.samples, [&](std::size_t i) {
    std::vector<P> out;
    out.reserve(n);
    P p = sys.unstable_leaf_point(disk.base, tau[i]);
    for (std::size_t j = 0; j < n; ++j) {
      out.push_back(p);
      if (j + 1 < n) p = map.apply(p);
    }
    return out;
  });
  EmpiricalMeasure<P> mu;
  mu.provenance = "disk-pushforward";
  const double w = 1.0 / (static_cast<double>(n) * static_cast<double>(disk.samples));
  mu.points.reserve(n * disk.samples);
  for (std::size_t i = 0; i < orbits.size(); ++i)
    for (const auto& p : orbits[i]) {
      mu.points.push_back(p);
      mu.weights.push_back(w);
      mu.groups.push_back(static_cast<std::uint32_t>(i));
    }
  return mu;
}

/// Single-orbit empirical measure (1/N) Σ δ_{map^k q}.
template <class M>
EmpiricalMeasure<typename M::Point> orbit_measure(const M& map, const typename M::Point& q, std::size_t steps) {
  EmpiricalMeasure<typename M::Point> mu;
  mu.provenance = "single-orbit";
  auto p = q;
  for (std::size_t k = 0; k < steps; ++k) {
    mu.points.push_back(p);
    mu.weights.push_back(1.0 / static_cast<double>(steps));
    mu.groups.push_back(0);
    p = map.apply(p);
  }
  return mu;
}

struct Integral {
  double value = 0;
  double standard_error = 0;  // from the spread of per-group means
  std::size_t groups = 0;
};

template <class P, class F>
double integrate(const EmpiricalMeasure<P>& mu, F&& obs) {
  CompensatedSum s;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double v = obs(mu.points[i]);
    if (!std::isfinite(v)) throw NumericError("integrate: observable is not finite at a sampled point");
    s.add(mu.weights[i] * v);
  }
  return s.value();
}

template <class P, class F>
Integral integrate_with_error(const EmpiricalMeasure<P>& mu, F&& obs) {
  Integral out;
  std::map<std::uint32_t, std::pair<CompensatedSum, CompensatedSum>> g;  // Σ w φ, Σ w
  CompensatedSum total;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double v = obs(mu.points[i]);
    if (!std::isfinite(v)) throw NumericError("integrate: observable is not finite at a sampled point");
    total.add(mu.weights[i] * v);
    auto& e = g[mu.groups[i]];
    e.first.add(mu.weights[i] * v);
    e.second.add(mu.weights[i]);
  }
  out.value = total.value();
  std::vector<double> means;
  for (auto& [k, e] : g) means.push_back(e.first.value() / e.second.value());
  out.groups = means.size();
  if (means.size() > 1) out.standard_error = sample_sd(means) / std::sqrt(static_cast<double>(means.size()));
  return out;
}

/// Per-step log‖Dg|E^c_g‖ along the first n points of the orbit of q.
template <class G>
std::vector<double> central_summands(const G& g, const typename G::Point& q, std::size_t n, int settle = 80) {
  using D = typename G::dims;
  OrbitWindow<G> w(g, q);
  w.extend(n + static_cast<std::size_t>(settle));
  const auto dirs = w.sweep(n, w.size());
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = std::log1p(xi_from<D>(w.rec(j), dirs[j]).xi);
  return out;
}

/// ∫ log‖Dg|E^c_g‖ against the pushforward cloud of a disk under g; the
/// error bar comes from per-disk-sample groups.
template <class S, class G>
Integral central_stretch_integral(const S& sys, const G& g, const UnstableDisk<typename G::Point>& disk, std::size_t n,
                                  std::uint64_t seed, int settle = 80) {
  const auto tau = disk_parameters(disk.half_length, disk.samples, seed);
  const auto means = parallel_map(disk.samples, [&](std::size_t i) {
    const auto s = central_summands(g, sys.unstable_leaf_point(disk.base, tau[i]), n, settle);
    return mean(s);
  });
  Integral out;
  out.value = mean(means);
  out.groups = means.size();
  out.standard_error = sample_sd(means) / std::sqrt(static_cast<double>(means.size()));
  return out;
}

/// Kolmogorov-Smirnov distance of each coordinate marginal from uniform on [0,1).
template <class S, class P>
std::array<double, 3> marginal_ks(const S& sys, const EmpiricalMeasure<P>& mu) {
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    std::vector<double> xs(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) xs[i] = sys.coordinates(mu.points[i])[c];
    out[c] = ks_uniform(std::move(xs), std::span<const double>(mu.weights));
  }
  return out;
}

// ---------------------------------------------------------------------------

template <class P>
struct Region {
  std::string name;
  std::function<bool(const P&)> contains;
};

struct VisitStats {
  std::string region;
  std::size_t count = 0;
  std::size_t length = 0;
  double frequency = 0;
  double standard_error = 0;
  std::map<std::size_t, std::size_t> return_times;  // histogram
  std::size_t min_return = 0;                       // 0 when fewer than two visits
  bool min_return_ok = true;                        // ≥ 2, checked when requested
};

template <class M>
VisitStats visit_frequency(const M& map, const typename M::Point& q, std::size_t steps,
                           const Region<typename M::Point>& region, bool require_return_two = false,
                           int batches = 100) {
  if (steps < 1) throw PreconditionError("visit_frequency: need at least one step");
  VisitStats st;
  st.region = region.name;
  st.length = steps;
  const int b = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(batches), steps));
  BatchMeans bm(steps, b);
  auto p = q;
  std::size_t last = 0;
  bool seen = false;
  for (std::size_t k = 0; k < steps; ++k) {
    const bool in = region.contains(p);
    bm.add(in ? 1.0 : 0.0);
    if (in) {
      ++st.count;
      if (seen) {
        const std::size_t rt = k - last;
        ++st.return_times[rt];
        if (st.min_return == 0 || rt < st.min_return) st.min_return = rt;
      }
      seen = true;
      last = k;
    }
    if (k + 1 < steps) p = map.apply(p);
  }
  st.frequency = static_cast<double>(st.count) / static_cast<double>(steps);
  st.standard_error = bm.standard_error();
  if (require_return_two && st.min_return != 0) st.min_return_ok = st.min_return >= 2;
  return st;
}

struct ForwardBackward {
  double forward = 0, backward = 0, gap = 0;
  double forward_se = 0, backward_se = 0;
};

template <class M, class F>
ForwardBackward forward_backward_average(const M& map, F&& obs, const typename M::Point& q, std::size_t steps,
                                         int batches = 100) {
  if (steps < 1000) throw PreconditionError("forward_backward_average: need at least 1000 steps");
  ForwardBackward out;
  BatchMeans f(steps, batches), b(steps, batches);
  auto p = q;
  for (std::size_t k = 0; k < steps; ++k) {
    f.add(obs(p));
    if (k + 1 < steps) p = map.apply(p);
  }
  p = q;
  for (std::size_t k = 0; k < steps; ++k) {
    b.add(obs(p));
    if (k + 1 < steps) p = map.inverse(p);
  }
  out.forward = f.mean();
  out.backward = b.mean();
  out.forward_se = f.standard_error();
  out.backward_se = b.standard_error();
  out.gap = std::abs(out.forward - out.backward);
  return out;
}

struct BasinObservableReport {
  std::string name;
  std::vector<double> averages;  // one per initial point
  double dispersion = 0;         // sd across initial points
  double max_gap = 0;            // max - min
  double mean_within_se = 0;     // average batch-means SE within an orbit
};

template <class M>
std::vector<BasinObservableReport> basin_agreement(
    const M& map, const std::vector<std::pair<std::string, std::function<double(const typename M::Point&)>>>& obs,
    const std::vector<typename M::Point>& starts, std::size_t steps, int batches = 100) {
  if (starts.size() < 2) throw PreconditionError("basin_agreement: need at least two initial points");
  const std::size_t K = starts.size(), L = obs.size();
  const auto per = parallel_map(K, [&](std::size_t i) {
    std::vector<BatchMeans> bm;
    for (std::size_t o = 0; o < L; ++o) bm.emplace_back(steps, batches);
    auto p = starts[i];
    for (std::size_t k = 0; k < steps; ++k) {
      for (std::size_t o = 0; o < L; ++o) bm[o].add(obs[o].second(p));
      if (k + 1 < steps) p = map.apply(p);
    }
    std::vector<std::pair<double, double>> r;
    for (auto& b : bm) r.emplace_back(b.mean(), b.standard_error());
    return r;
  });
  std::vector<BasinObservableReport> out(L);
  for (std::size_t o = 0; o < L; ++o) {
    auto& rep = out[o];
    rep.name = obs[o].first;
    std::vector<double> ses;
    for (std::size_t i = 0; i < K; ++i) {
      rep.averages.push_back(per[i][o].first);
      ses.push_back(per[i][o].second);
    }
    rep.dispersion = sample_sd(rep.averages);
    const auto [lo, hi] = std::minmax_element(rep.averages.begin(), rep.averages.end());
    rep.max_gap = *hi - *lo;
    rep.mean_within_se = mean(ses);
  }
  return out;
}

struct MostlyExpanding {
  double estimate = 0;  // (1/N) Σ log‖Dmap⁻¹|E^{cu}‖
  double standard_error = 0;
  double limsup = 0;  // max running average over the second half of the orbit
  double c0 = 0;      // -estimate
  std::size_t steps = 0;
};

template <class M>
MostlyExpanding mostly_expanding_diagnostic(const M& map, const typename M::Point& q, std::size_t steps,
                                            int batches = 100) {
  if (steps < 1000) throw PreconditionError("mostly_expanding_diagnostic: need at least 1000 steps");
  MostlyExpanding out;
  out.steps = steps;
  BatchMeans bm(steps, batches);
  CompensatedSum run;
  out.limsup = -std::numeric_limits<double>::infinity();
  auto p = q;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto cu = map.frame_differential(p).cu_block();
    const double v = std::log(operator_norm(cu.inverse()));
    bm.add(v);
    run.add(v);
    if (k >= steps / 2) out.limsup = std::max(out.limsup, run.value() / static_cast<double>(k + 1));
    p = map.apply(p);
  }
  out.estimate = bm.mean();
  out.standard_error = bm.standard_error();
  out.c0 = -out.estimate;
  return out;
}

// ---------------------------------------------------------------------------
// Observable library.

template <class S>
std::function<double(const typename S::Point&)> named_observable(const S& sys, const std::string& name) {
  if (name == "one") return [](const typename S::Point&) { return 1.0; };
  for (int c = 0; c < 3; ++c) {
    const std::string coord = "coord" + std::to_string(c);
    if (name == coord) return [&sys, c](const typename S::Point& p) { return sys.coordinates(p)[c]; };
    if (name == "cos_" + coord)
      return [&sys, c](const typename S::Point& p) { return std::cos(2 * std::numbers::pi * sys.coordinates(p)[c]); };
    if (name == "sin_" + coord)
      return [&sys, c](const typename S::Point& p) { return std::sin(2 * std::numbers::pi * sys.coordinates(p)[c]); };
  }
  throw ConfigError("unknown observable '" + name +
                    "' (valid: one, coord0..2, cos_coord0..2, sin_coord0..2)");
}

}  // namespace hypexp
