#pragma once

// Geodesic flow on a closed genus-2 hyperbolic surface, realized on Γ\PSL(2,R)
// with Γ generated by the side pairings of the regular octagon with angles π/4
// (opposite sides identified). The time-1 map is right multiplication by
// a_1 = diag(e^{1/2}, e^{-1/2}) followed by reduction to the Dirichlet domain
// centered at i.
//
// Frame (left-invariant): stable U+ = [[0,1],[0,0]], center X = diag(1/2,-1/2),
// unstable U- = [[0,0],[1,0]]. Ad(a_{-1}) scales them by (e^{-1}, 1, e).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hypexp/errors.hpp"
#include "hypexp/rng.hpp"
#include "hypexp/splitting.hpp"

namespace hypexp {

struct GeoPoint {
  Eigen::Matrix2d g = Eigen::Matrix2d::Identity();
};

namespace geo {

inline Eigen::Matrix2d rotation(double phi) {
  Eigen::Matrix2d k;
  k << std::cos(phi / 2), std::sin(phi / 2), -std::sin(phi / 2), std::cos(phi / 2);
  return k;
}

inline Eigen::Matrix2d diagonal(double t) {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a(0, 0) = std::exp(t / 2);
  a(1, 1) = std::exp(-t / 2);
  return a;
}

inline Eigen::Matrix2d upper(double x) {
  Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
  m(0, 1) = x;
  return m;
}

inline Eigen::Matrix2d lower(double z) {
  Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
  m(1, 0) = z;
  return m;
}

inline Eigen::Matrix2d inverse(const Eigen::Matrix2d& m) {
  Eigen::Matrix2d r;
  r << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return r / m.determinant();
}

/// ‖p‖_F² = 2 cosh d(p·i, i).
inline double displacement(const Eigen::Matrix2d& p) {
  return std::acosh(std::max(1.0, p.squaredNorm() / 2.0));
}

/// Sign representative in PSL(2,R).
inline Eigen::Matrix2d canonical_sign(Eigen::Matrix2d p) {
  if (p(0, 0) < 0 || (p(0, 0) == 0 && p(0, 1) < 0)) p = -p;
  return p;
}

/// Frame coordinates (U+, X, U-) of a traceless matrix [[a,b],[c,-a]].
inline Eigen::Vector3d frame_coords(const Eigen::Matrix2d& y) { return {y(0, 1), y(0, 0) - y(1, 1), y(1, 0)}; }

}  // namespace geo

class GeodesicSurface;

class GeoChart {
 public:
  using Point = GeoPoint;
  using dims = Dims3;

  GeoChart(GeoPoint p0, double gamma) : p0_(p0), p0inv_(geo::inverse(p0.g)), gamma_(gamma) {}

  double gamma() const { return gamma_; }
  const GeoPoint& center() const { return p0_; }

  /// ψ(x,y,z) = p0 · exp(xU+) · exp(zU-) · a_y.
  GeoPoint from_chart(const Coords<Dims3>& c) const {
    return GeoPoint{geo::canonical_sign(p0_.g * geo::upper(c(0)) * geo::lower(c(2)) * geo::diagonal(c(1)))};
  }

  std::optional<Coords<Dims3>> to_chart(const GeoPoint& q) const {
    Eigen::Matrix2d m = p0inv_ * q.g;
    if (m(1, 1) < 0) m = -m;
    if (!(m(1, 1) > 0)) return std::nullopt;
    const Coords<Dims3> c(m(0, 1) / m(1, 1), -2.0 * std::log(m(1, 1)), m(1, 0) * m(1, 1));
    if (!c.allFinite() || c.cwiseAbs().maxCoeff() > gamma_) return std::nullopt;
    return c;
  }

  /// Columns: ∂ψ/∂x, ∂ψ/∂y, ∂ψ/∂z in left-invariant frame coordinates at ψ(c).
  FrameMatrix<Dims3> jacobian(const Coords<Dims3>& c) const {
    const Eigen::Matrix2d tail = geo::lower(c(2)) * geo::diagonal(c(1));
    Eigen::Matrix2d up = Eigen::Matrix2d::Zero();
    up(0, 1) = 1;
    const Eigen::Matrix2d dx = geo::inverse(tail) * up * tail;
    FrameMatrix<Dims3> j;
    j.matrix().col(0) = geo::frame_coords(dx);
    j.matrix().col(1) = Eigen::Vector3d(0, 1, 0);
    j.matrix().col(2) = Eigen::Vector3d(0, 0, std::exp(c(1)));
    return j;
  }

  /// Upper bound on d(ψ(c)·i, p0·i) over the chart box.
  static double basepoint_radius(double gamma) { return 4.0 * std::asinh(gamma / 2.0) + gamma; }

 private:
  GeoPoint p0_;
  Eigen::Matrix2d p0inv_;
  double gamma_;
};

class GeodesicSurface {
 public:
  using Point = GeoPoint;
  using dims = Dims3;
  using Chart = GeoChart;

  static constexpr int max_reduction_steps = 1000;

  GeodesicSurface() {
    const double pi = std::numbers::pi;
    inradius_ = std::acosh(1.0 / std::tan(pi / 8));
    const double ell = 2.0 * inradius_;
    for (int k = 0; k < 4; ++k) {
      const Eigen::Matrix2d r = geo::rotation(k * pi / 4);
      gens_[k] = r * geo::diagonal(ell) * geo::inverse(r);
    }
    for (int k = 0; k < 4; ++k) {
      all_[2 * k] = gens_[k];
      all_[2 * k + 1] = geo::inverse(gens_[k]);
    }
    for (const auto& g : all_)
      if (std::abs(g.determinant() - 1.0) > 1e-12) throw NumericError("GeodesicSurface: generator determinant != 1");
    if (relation_residual() > 1e-8) throw NumericError("GeodesicSurface: octagon relation fails");
    a1_ = geo::diagonal(1.0);
  }

  std::string name() const { return "geodesic"; }
  bool volume_preserving() const { return true; }
  double inradius() const { return inradius_; }
  double systole() const { return 2.0 * inradius_; }
  /// cosh of the circumradius of the fundamental octagon.
  double cosh_circumradius() const {
    const double c = 1.0 / std::tan(std::numbers::pi / 8);
    return c * c;
  }
  const std::array<Eigen::Matrix2d, 4>& generators() const { return gens_; }
  const std::array<Eigen::Matrix2d, 8>& side_pairings() const { return all_; }

  /// g0 g1⁻¹ g2 g3⁻¹ g0⁻¹ g1 g2⁻¹ g3, which must be ±I.
  Eigen::Matrix2d relation_word() const {
    const auto inv = [](const Eigen::Matrix2d& m) { return geo::inverse(m); };
    return gens_[0] * inv(gens_[1]) * gens_[2] * inv(gens_[3]) * inv(gens_[0]) * gens_[1] * inv(gens_[2]) * gens_[3];
  }

  double relation_residual() const {
    const Eigen::Matrix2d w = relation_word();
    const Eigen::Matrix2d id = Eigen::Matrix2d::Identity();
    return std::min((w - id).cwiseAbs().maxCoeff(), (w + id).cwiseAbs().maxCoeff());
  }

  /// Greedy descent: apply the side pairing that most decreases d(p·i, i)
  /// until none does.
  GeoPoint reduce(const GeoPoint& in) const {
    Eigen::Matrix2d p = in.g;
    const double det = p.determinant();
    if (!(det > 0)) throw PreconditionError("geodesic reduce: determinant must be positive");
    p /= std::sqrt(det);
    double cur = p.squaredNorm();
    for (int steps = 0;; ++steps) {
      int best = -1;
      double best_val = cur;
      for (int k = 0; k < 8; ++k) {
        const double v = (all_[k] * p).squaredNorm();
        if (v < best_val * (1.0 - 1e-14)) {
          best_val = v;
          best = k;
        }
      }
      if (best < 0) break;
      if (steps >= max_reduction_steps) throw NumericError("geodesic reduce: no termination within 1000 generator steps");
      p = all_[best] * p;
      cur = best_val;
    }
    p /= std::sqrt(p.determinant());
    return GeoPoint{geo::canonical_sign(p)};
  }

  bool is_reduced(const GeoPoint& p) const {
    const double cur = p.g.squaredNorm();
    for (const auto& g : all_)
      if ((g * p.g).squaredNorm() < cur * (1.0 - 1e-14)) return false;
    return true;
  }

  GeoPoint apply(const GeoPoint& p) const { return reduce(GeoPoint{p.g * a1_}); }
  GeoPoint inverse(const GeoPoint& p) const { return reduce(GeoPoint{p.g * geo::inverse(a1_)}); }

  FrameMatrix<Dims3> frame_differential(const GeoPoint&) const {
    return FrameMatrix<Dims3>::block_diagonal(std::exp(-1.0), 1.0, std::exp(1.0));
  }

  SplittingSpec rates() const {
    SplittingSpec sp;
    sp.lambda1 = sp.mu1 = std::exp(-1.0);
    sp.lambda2 = sp.mu2 = 1.0;
    sp.lambda3 = sp.mu3 = std::exp(1.0);
    sp.c_rate = 1.0;
    return sp;
  }

  /// Poincaré-disk footpoint (Re, Im) and direction angle / 2π.
  std::array<double, 3> coordinates(const GeoPoint& p) const {
    using cd = std::complex<double>;
    const cd i(0, 1);
    const auto& g = p.g;
    const cd z = (g(0, 0) * i + g(0, 1)) / (g(1, 0) * i + g(1, 1));
    const cd w = (z - i) / (z + i);
    // Push the upward unit vector at i through z ↦ p·z, then into the disk.
    const cd dz = i / ((g(1, 0) * i + g(1, 1)) * (g(1, 0) * i + g(1, 1)));
    double theta = std::arg(dz * 2.0 * i / ((z + i) * (z + i)));
    theta = std::fmod(theta, 2 * std::numbers::pi);
    if (theta < 0) theta += 2 * std::numbers::pi;
    return {w.real(), w.imag(), theta / (2 * std::numbers::pi)};
  }

  /// Haar-uniform point: KAK sampling of a hyperbolic disk around i
  /// containing the octagon, rejected unless already reduced.
  GeoPoint sample_uniform(TaskRng& rng) const {
    const double pi = std::numbers::pi;
    for (;;) {
      const double theta = rng.uniform(0, 2 * pi);
      const double rho = std::acosh(1.0 + rng.uniform() * (cosh_circumradius() - 1.0));
      const double psi = rng.uniform(0, 2 * pi);
      const GeoPoint p{geo::canonical_sign(geo::rotation(theta) * geo::diagonal(rho) * geo::rotation(psi))};
      if (is_reduced(p)) return p;
    }
  }

  GeoPoint unstable_leaf_point(const GeoPoint& base, double tau) const {
    return reduce(GeoPoint{base.g * geo::lower(tau)});
  }

  /// Distance proxy between reduced representatives.
  double distance(const GeoPoint& a, const GeoPoint& b) const {
    return std::min((a.g - b.g).norm(), (a.g + b.g).norm());
  }

  struct ChartOptions {
    int periodicity_steps = 10000;
    double periodicity_separation = 1e-6;
  };

  GeoChart make_chart(const GeoPoint& p0, double gamma) const { return make_chart(p0, gamma, ChartOptions{}); }

  GeoChart make_chart(const GeoPoint& p0, double gamma, const ChartOptions& opt) const {
    if (!(gamma > 0)) throw PreconditionError("geodesic chart: gamma must be positive");
    const double rho = GeoChart::basepoint_radius(gamma);
    const double disp = geo::displacement(p0.g);
    if (!(disp + rho < inradius_))
      throw PreconditionError("geodesic chart: chart box leaves the fundamental domain interior");
    if (!(2.0 * rho < 1.0 && 1.0 + 2.0 * rho < systole()))
      throw PreconditionError("geodesic chart: gamma too large for f(U) and U to be disjoint");
    const GeoPoint q0 = reduce(p0);
    GeoPoint p = q0;
    for (int n = 1; n <= opt.periodicity_steps; ++n) {
      p = apply(p);
      if (distance(p, q0) < opt.periodicity_separation)
        throw PreconditionError("geodesic chart: p0 looks periodic after " + std::to_string(n) + " steps");
    }
    return GeoChart(q0, gamma);
  }

  static GeoPoint default_q0() {
    return GeoPoint{geo::canonical_sign(geo::rotation(0.3) * geo::diagonal(0.2) * geo::rotation(1.1))};
  }

 private:
  double inradius_ = 0;
  std::array<Eigen::Matrix2d, 4> gens_;
  std::array<Eigen::Matrix2d, 8> all_;
  Eigen::Matrix2d a1_;
};

}  // namespace hypexp
