#pragma once

// Smooth bump family
//   η0(t) = exp(-1/t²) (t > 0), 0 otherwise
//   η1(s) = η0(s) η0(1-s)                 supported on [0,1]
//   η2(s) = c⁻¹ ∫_{-∞}^s η1,  c = ∫ η1    0 → 1 across [0,1]
//   φ(s)  = η2(s+2) η2(2-s)               1 on [-1,1], 0 off (-2,2)
// and the product mollifier Φ_ε(p) = ∏ φ(p_i/ε).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "hypexp/errors.hpp"

namespace hypexp {

namespace bump_detail {

inline double eta0(double t) { return t > 0 ? std::exp(-1.0 / (t * t)) : 0.0; }

// Below t = 0.02 the exponential is far under the smallest subnormal; the
// polynomial prefactors would only turn 0 into inf*0.
inline double eta0_d1(double t) {
  if (t < 0.02) return 0.0;
  return 2.0 / (t * t * t) * std::exp(-1.0 / (t * t));
}

inline double eta0_d2(double t) {
  if (t < 0.02) return 0.0;
  const double t2 = t * t;
  return (4.0 / (t2 * t2 * t2) - 6.0 / (t2 * t2)) * std::exp(-1.0 / t2);
}

inline double eta1(double s) { return eta0(s) * eta0(1.0 - s); }

inline double eta1_d1(double s) { return eta0_d1(s) * eta0(1.0 - s) - eta0(s) * eta0_d1(1.0 - s); }

inline double eta1_d2(double s) {
  return eta0_d2(s) * eta0(1.0 - s) - 2.0 * eta0_d1(s) * eta0_d1(1.0 - s) + eta0(s) * eta0_d2(1.0 - s);
}

// 8-point Gauss-Legendre on [-1,1].
inline constexpr std::array<double, 8> gl_nodes{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                                -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                                0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> gl_weights{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                                  0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                                  0.2223810344533745, 0.1012285362903763};

inline double gauss8(double a, double b) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double acc = 0;
  for (int k = 0; k < 8; ++k) acc += gl_weights[k] * eta1(mid + half * gl_nodes[k]);
  return acc * half;
}

}  // namespace bump_detail

/// Immutable after construction; evaluation is pure.
class BumpProfile {
 public:
  explicit BumpProfile(int intervals = 4096) : n_(intervals) {
    if (n_ < 16) throw PreconditionError("BumpProfile: need at least 16 quadrature intervals");
    const double h = 1.0 / n_;
    cum_.assign(n_ + 1, 0.0);
    for (int i = 0; i < n_; ++i) cum_[i + 1] = cum_[i] + bump_detail::gauss8(i * h, (i + 1) * h);
    c_ = cum_[n_];
    if (!(c_ > 0)) throw NumericError("BumpProfile: normalization constant is not positive");
    for (double& v : cum_) v /= c_;
    cum_[n_] = 1.0;

    // Exact slopes, then Fritsch-Carlson limiting so the interpolant stays monotone.
    slope_.resize(n_ + 1);
    for (int i = 0; i <= n_; ++i) slope_[i] = bump_detail::eta1(i * h) / c_;
    for (int i = 0; i < n_; ++i) {
      const double delta = (cum_[i + 1] - cum_[i]) / h;
      if (delta <= 0) {
        slope_[i] = slope_[i + 1] = 0;
        continue;
      }
      const double a = slope_[i] / delta, b = slope_[i + 1] / delta;
      const double r2 = a * a + b * b;
      if (r2 > 9.0) {
        const double tau = 3.0 / std::sqrt(r2);
        slope_[i] = tau * a * delta;
        slope_[i + 1] = tau * b * delta;
      }
    }
    s0_ = locate_s0();
  }

  double normalization() const { return c_; }
  int intervals() const { return n_; }
  double s0() const { return s0_; }

  double eta2(double s) const {
    if (s <= 0) return 0.0;
    if (s >= 1) return 1.0;
    const double h = 1.0 / n_;
    int i = std::min(static_cast<int>(s * n_), n_ - 1);
    const double u = (s - i * h) / h;
    const double u2 = u * u, u3 = u2 * u;
    const double h10 = u3 - 2 * u2 + u, h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
    // Increment form: fl(cum + x) is monotone in x, and the clamp keeps
    // neighbouring intervals ordered.
    const double inc = h01 * (cum_[i + 1] - cum_[i]) + h * (h10 * slope_[i] + h11 * slope_[i + 1]);
    return std::clamp(cum_[i] + inc, cum_[i], cum_[i + 1]);
  }
  double eta2_d1(double s) const { return bump_detail::eta1(s) / c_; }
  double eta2_d2(double s) const { return bump_detail::eta1_d1(s) / c_; }

  /// φ and its first two derivatives.
  double phi(double s, int order = 0) const {
    const double a = s + 2.0, b = 2.0 - s;
    switch (order) {
      case 0:
        return eta2(a) * eta2(b);
      case 1:
        return eta2_d1(a) * eta2(b) - eta2(a) * eta2_d1(b);
      case 2:
        return eta2_d2(a) * eta2(b) - 2.0 * eta2_d1(a) * eta2_d1(b) + eta2(a) * eta2_d2(b);
      default:
        throw PreconditionError("phi: derivative order must be 0, 1 or 2");
    }
  }

  /// ζ'(s) with ζ(s) = sφ(s).
  double zeta_d1(double s) const { return phi(s, 0) + s * phi(s, 1); }

 private:
  double locate_s0() const {
    // First sign change of ζ' on (1,2), then bisection.
    double lo = 1.0, hi = 2.0;
    const int scan = 10000;
    double prev = zeta_d1(1.0);
    bool found = false;
    for (int k = 1; k < scan; ++k) {
      const double s = 1.0 + static_cast<double>(k) / scan;
      const double v = zeta_d1(s);
      if (v == 0.0) continue;
      if ((v < 0) != (prev < 0)) {
        lo = s - 1.0 / scan;
        hi = s;
        found = true;
        break;
      }
      prev = v;
    }
    if (!found) throw NumericError("BumpProfile: no zero of (s phi)' in (1,2)");
    while (hi - lo > 1e-10) {
      const double mid = 0.5 * (lo + hi);
      if (zeta_d1(mid) > 0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  }

  int n_;
  double c_ = 0;
  double s0_ = 0;
  std::vector<double> cum_;
  std::vector<double> slope_;
};

inline const BumpProfile& default_bump() {
  static const BumpProfile profile;
  return profile;
}

/// Φ_ε(p) = ∏ φ(p_i/ε) on R^N; support is the closed box of half-width 2ε.
template <int N>
class MollifierField {
 public:
  using Point = Eigen::Matrix<double, N, 1>;
  using Hessian = Eigen::Matrix<double, N, N>;

  explicit MollifierField(double eps, const BumpProfile& profile = default_bump()) : eps_(eps), bump_(&profile) {
    if (!(eps > 0)) throw PreconditionError("MollifierField: eps must be positive");
  }

  double eps() const { return eps_; }
  const BumpProfile& profile() const { return *bump_; }

  bool in_support(const Point& p) const { return p.cwiseAbs().maxCoeff() < 2.0 * eps_; }

  double value(const Point& p) const {
    if (!in_support(p)) return 0.0;
    double v = 1.0;
    for (int i = 0; i < N; ++i) v *= bump_->phi(p(i) / eps_, 0);
    return v;
  }

  Point gradient(const Point& p) const {
    Point g = Point::Zero();
    if (!in_support(p)) return g;
    std::array<double, N> f0{}, f1{};
    for (int i = 0; i < N; ++i) {
      f0[i] = bump_->phi(p(i) / eps_, 0);
      f1[i] = bump_->phi(p(i) / eps_, 1) / eps_;
    }
    for (int i = 0; i < N; ++i) {
      double v = f1[i];
      for (int j = 0; j < N; ++j)
        if (j != i) v *= f0[j];
      g(i) = v;
    }
    return g;
  }

  Hessian hessian(const Point& p) const {
    Hessian hs = Hessian::Zero();
    if (!in_support(p)) return hs;
    std::array<double, N> f0{}, f1{}, f2{};
    for (int i = 0; i < N; ++i) {
      const double s = p(i) / eps_;
      f0[i] = bump_->phi(s, 0);
      f1[i] = bump_->phi(s, 1) / eps_;
      f2[i] = bump_->phi(s, 2) / (eps_ * eps_);
    }
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        double v = 1.0;
        for (int k = 0; k < N; ++k) {
          if (i == j && k == i) v *= f2[k];
          else if (k == i || k == j) v *= f1[k];
          else v *= f0[k];
        }
        hs(i, j) = v;
      }
    }
    return hs;
  }

 private:
  double eps_;
  const BumpProfile* bump_;
};

struct BumpCertificate {
  double C = 0;   // sup |φ'|
  double C2 = 0;  // sup |φ''|
  double s0 = 0;
  bool plateau = false;   // φ = 1 on [-1,1]
  bool support = false;   // φ = 0 off (-2,2)
  bool bounded = false;   // 0 ≤ φ ≤ 1
  bool symmetric = false; // φ(-s) = φ(s)
  int zeta_zero_count = 0;

  bool ok() const { return plateau && support && bounded && symmetric && zeta_zero_count == 1; }
};

namespace bump_detail {

// Maximum of |f| on [a,b]: grid scan then golden-section refinement around
// the best grid point.
template <class F>
double grid_max_abs(F f, double a, double b, int points) {
  double best = -1, best_s = a;
  for (int k = 0; k <= points; ++k) {
    const double s = a + (b - a) * k / points;
    const double v = std::abs(f(s));
    if (v > best) { best = v; best_s = s; }
  }
  const double step = (b - a) / points;
  double lo = std::max(a, best_s - step), hi = std::min(b, best_s + step);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = std::abs(f(x1)), f2 = std::abs(f(x2));
  for (int it = 0; it < 100 && hi - lo > 1e-13; ++it) {
    if (f1 > f2) { hi = x2; x2 = x1; f2 = f1; x1 = hi - gr * (hi - lo); f1 = std::abs(f(x1)); }
    else { lo = x1; x1 = x2; f1 = f2; x2 = lo + gr * (hi - lo); f2 = std::abs(f(x2)); }
  }
  return std::max({best, f1, f2});
}

}  // namespace bump_detail

inline BumpCertificate bump_certificate(const BumpProfile& b = default_bump()) {
  BumpCertificate cert;
  // φ' and φ'' vanish on [-1,1] and by symmetry it suffices to search (1,2).
  cert.C = bump_detail::grid_max_abs([&](double s) { return b.phi(s, 1); }, 1.0, 2.0, 10000);
  cert.C2 = bump_detail::grid_max_abs([&](double s) { return b.phi(s, 2); }, 1.0, 2.0, 10000);
  cert.s0 = b.s0();

  cert.plateau = true;
  for (int k = 0; k <= 2000; ++k) {
    const double s = -1.0 + k / 1000.0;
    if (b.phi(s) != 1.0) cert.plateau = false;
  }
  cert.support = true;
  cert.bounded = true;
  cert.symmetric = true;
  for (int k = 0; k <= 8000; ++k) {
    const double s = -4.0 + k / 1000.0;
    const double v = b.phi(s);
    if (std::abs(s) >= 2.0 && v != 0.0) cert.support = false;
    if (v < 0.0 || v > 1.0) cert.bounded = false;
    if (std::abs(v - b.phi(-s)) > 1e-14) cert.symmetric = false;
  }
  // Sign changes of ζ' on (1,2); exact zeros (underflow near 2) carry no sign.
  int changes = 0;
  double prev = b.zeta_d1(1.0);
  for (int k = 1; k < 10000; ++k) {
    const double v = b.zeta_d1(1.0 + k * 1e-4);
    if (v == 0.0) continue;
    if ((v < 0) != (prev < 0)) ++changes;
    prev = v;
  }
  cert.zeta_zero_count = changes;
  if (changes != 1) throw NumericError("bump_certificate: (s phi)' must have exactly one zero in (1,2)");
  return cert;
}

}  // namespace hypexp
