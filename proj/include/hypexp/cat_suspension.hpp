#pragma once

// Suspension of the cat map A = [[2,1],[1,1]] under a constant roof r.
// State (x, s) with x ∈ T², s ∈ [0, r); the time-1 map advances s by 1 and
// applies A once per roof crossing. Frame: (v_s, ∂_s, v_u).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include "hypexp/errors.hpp"
#include "hypexp/rng.hpp"
#include "hypexp/splitting.hpp"

namespace hypexp {

struct CatPoint {
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  double s = 0;
};

inline double fold_unit(double v) {
  double y = v - std::floor(v);
  if (y >= 1.0 - 1e-15) y = 0.0;
  return y;
}

inline Eigen::Vector2d fold_torus(const Eigen::Vector2d& v) { return {fold_unit(v(0)), fold_unit(v(1))}; }

/// Minimum-image representative of a torus displacement, in [-1/2, 1/2)².
inline Eigen::Vector2d torus_delta(const Eigen::Vector2d& d) {
  Eigen::Vector2d out;
  for (int i = 0; i < 2; ++i) out(i) = d(i) - std::floor(d(i) + 0.5);
  return out;
}

class CatSuspension;

class CatChart {
 public:
  using Point = CatPoint;
  using dims = Dims3;

  CatChart(const CatSuspension& sys, CatPoint q0, double gamma);

  double gamma() const { return gamma_; }
  const CatPoint& center() const { return q0_; }

  std::optional<Coords<Dims3>> to_chart(const CatPoint& p) const;
  CatPoint from_chart(const Coords<Dims3>& c) const;
  /// Linear chart: chart coordinates are frame coordinates everywhere.
  FrameMatrix<Dims3> jacobian(const Coords<Dims3>&) const { return FrameMatrix<Dims3>::identity(); }

 private:
  Eigen::Vector2d vs_, vu_;
  CatPoint q0_;
  double gamma_;
};

class CatSuspension {
 public:
  using Point = CatPoint;
  using dims = Dims3;
  using Chart = CatChart;

  explicit CatSuspension(double roof = std::sqrt(2.0)) : r_(roof) {
    if (!(r_ > 0) || !std::isfinite(r_)) throw PreconditionError("CatSuspension: roof must be positive");
    A_ << 2, 1, 1, 1;
    Ainv_ << 1, -1, -1, 2;
    lu_ = (3.0 + std::sqrt(5.0)) / 2.0;
    ls_ = 1.0 / lu_;
    vu_ = Eigen::Vector2d(1.0, (std::sqrt(5.0) - 1.0) / 2.0).normalized();
    vs_ = Eigen::Vector2d(1.0, -(1.0 + std::sqrt(5.0)) / 2.0).normalized();
    if ((A_ * vu_ - lu_ * vu_).norm() > 1e-14 || (A_ * vs_ - ls_ * vs_).norm() > 1e-14)
      throw NumericError("CatSuspension: eigen data inconsistent");
  }

  double roof() const { return r_; }
  double lambda_u() const { return lu_; }
  double lambda_s() const { return ls_; }
  const Eigen::Vector2d& v_u() const { return vu_; }
  const Eigen::Vector2d& v_s() const { return vs_; }
  const Eigen::Matrix2d& lattice_map() const { return A_; }
  std::string name() const { return "cat"; }
  bool volume_preserving() const { return true; }

  /// Number of roof crossings during the next unit of time.
  int crossings(const CatPoint& p) const {
    int k = static_cast<int>(std::floor((p.s + 1.0) / r_));
    double s1 = p.s + 1.0 - k * r_;
    if (s1 < 0) --k;
    else if (s1 >= r_) ++k;
    return k;
  }

  CatPoint apply(const CatPoint& p) const {
    const int k = crossings(p);
    CatPoint out;
    Eigen::Vector2d x = p.x;
    for (int i = 0; i < k; ++i) x = fold_torus(A_ * x);
    out.x = x;
    out.s = fold_fiber(p.s + 1.0 - k * r_);
    return out;
  }

  /// Crossings undone by the inverse step at p.
  int inverse_crossings(const CatPoint& p) const {
    int k = -static_cast<int>(std::floor((p.s - 1.0) / r_));
    const double s1 = p.s - 1.0 + k * r_;
    if (s1 < 0) ++k;
    else if (s1 >= r_) --k;
    return k;
  }

  CatPoint inverse(const CatPoint& p) const {
    const int k = inverse_crossings(p);
    CatPoint out;
    Eigen::Vector2d x = p.x;
    for (int i = 0; i < k; ++i) x = fold_torus(Ainv_ * x);
    out.x = x;
    out.s = fold_fiber(p.s - 1.0 + k * r_);
    return out;
  }

  FrameMatrix<Dims3> frame_differential(const CatPoint& p) const {
    const int k = crossings(p);
    return FrameMatrix<Dims3>::block_diagonal(std::pow(ls_, k), 1.0, std::pow(lu_, k));
  }

  /// Per-step rates λ_u^{±1/r} with C = λ_u: the crossing count over n steps
  /// lies strictly between n/r - 1 and n/r + 1.
  SplittingSpec rates() const {
    SplittingSpec sp;
    sp.lambda1 = sp.mu1 = std::pow(lu_, -1.0 / r_);
    sp.lambda2 = sp.mu2 = 1.0;
    sp.lambda3 = sp.mu3 = std::pow(lu_, 1.0 / r_);
    sp.c_rate = lu_;
    return sp;
  }

  std::array<double, 3> coordinates(const CatPoint& p) const { return {p.x(0), p.x(1), p.s / r_}; }

  CatPoint sample_uniform(TaskRng& rng) const {
    CatPoint p;
    p.x(0) = rng.uniform();
    p.x(1) = rng.uniform();
    p.s = rng.uniform() * r_;
    return p;
  }

  CatPoint unstable_leaf_point(const CatPoint& base, double tau) const {
    return CatPoint{fold_torus(base.x + tau * vu_), base.s};
  }

  double fiber_distance(double a, double b) const {
    double d = std::fmod(std::abs(a - b), r_);
    return std::min(d, r_ - d);
  }

  double distance(const CatPoint& a, const CatPoint& b) const {
    const double dx = torus_delta(a.x - b.x).norm();
    const double ds = fiber_distance(a.s, b.s);
    return std::sqrt(dx * dx + ds * ds);
  }

  /// Chart options. Disjoint return f(U) ∩ U = ∅ is required unless waived
  /// (the rational-roof control returns to the same fiber interval).
  struct ChartOptions {
    bool require_disjoint_return = true;
    int periodicity_steps = 10000;
    double periodicity_separation = 1e-6;
  };

  CatChart make_chart(const CatPoint& q0, double gamma) const { return make_chart(q0, gamma, ChartOptions{}); }

  CatChart make_chart(const CatPoint& q0, double gamma, const ChartOptions& opt) const {
    if (!(gamma > 0 && gamma < 0.25))
      throw PreconditionError("cat chart: gamma must lie in (0, 0.25) for a single-sheeted torus chart");
    if (q0.s - gamma < 0 || q0.s + gamma >= r_)
      throw PreconditionError("cat chart: fiber interval [s0-gamma, s0+gamma] must lie inside [0, r)");
    if (opt.require_disjoint_return) {
      const double shift = fiber_distance(1.0, 0.0);
      if (!(shift > 2.0 * gamma))
        throw PreconditionError("cat chart: f(U) meets U (fiber shift 1 mod r within 2*gamma)");
    }
    CatPoint p = q0;
    for (int n = 1; n <= opt.periodicity_steps; ++n) {
      p = apply(p);
      if (distance(p, q0) < opt.periodicity_separation)
        throw PreconditionError("cat chart: q0 looks periodic (returned within " +
                                std::to_string(opt.periodicity_separation) + " after " + std::to_string(n) +
                                " steps)");
    }
    return CatChart(*this, q0, gamma);
  }

  /// Default chart center: a generic point in the middle of the fiber.
  static CatPoint default_q0() { return CatPoint{Eigen::Vector2d(0.31415926535, 0.27182818284), 0.7}; }

 private:
  double fold_fiber(double s) const {
    if (s < 0) s += r_;
    if (s >= r_) s -= r_;
    if (s >= r_ - 1e-15 * r_) s = 0.0;
    return s;
  }

  double r_;
  double lu_, ls_;
  Eigen::Matrix2d A_, Ainv_;
  Eigen::Vector2d vu_, vs_;
};

inline CatChart::CatChart(const CatSuspension& sys, CatPoint q0, double gamma)
    : vs_(sys.v_s()), vu_(sys.v_u()), q0_(q0), gamma_(gamma) {}

inline std::optional<Coords<Dims3>> CatChart::to_chart(const CatPoint& p) const {
  const double y = p.s - q0_.s;
  if (std::abs(y) > gamma_) return std::nullopt;
  const Eigen::Vector2d d = torus_delta(p.x - q0_.x);
  const double w = d.dot(vs_), z = d.dot(vu_);
  if (std::abs(w) > gamma_ || std::abs(z) > gamma_) return std::nullopt;
  return Coords<Dims3>(w, y, z);
}

inline CatPoint CatChart::from_chart(const Coords<Dims3>& c) const {
  return CatPoint{fold_torus(q0_.x + c(0) * vs_ + c(2) * vu_), q0_.s + c(1)};
}

}  // namespace hypexp
