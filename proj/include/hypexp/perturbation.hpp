#pragma once

// Local perturbation h(x,y,z) = (x, y, z + t·y·Φ_ε(x,y,z)·e_kick) in chart
// coordinates, with e_kick the first unstable coordinate, and the perturbed
// map g = f∘H, H = ψ∘h∘ψ⁻¹ on the chart domain U, g = f elsewhere.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "hypexp/bump.hpp"
#include "hypexp/errors.hpp"
#include "hypexp/splitting.hpp"
#include "hypexp/system.hpp"

namespace hypexp {

/// min(ε³, 1/(4C)), kept one ulp below 1/(4C).
inline double t_schedule(double eps, double C) {
  if (!(eps > 0 && C > 0)) throw PreconditionError("t_schedule: eps and C must be positive");
  return std::min(eps * eps * eps, std::nextafter(1.0 / (4.0 * C), 0.0));
}

struct PerturbationParams {
  double eps = 0.05;
  double t = 0;
  double gamma = 0.2;  // chart half-width
  double C = 0;        // sup |φ'|

  void validate() const {
    if (!(eps > 0 && eps < 0.25)) throw PreconditionError("perturbation: eps must lie in (0, 1/4)");
    if (!(C > 0)) throw PreconditionError("perturbation: bump constant C must be positive");
    if (!(t >= 0 && t < 1.0 / (4.0 * C))) throw PreconditionError("perturbation: t must satisfy 0 <= t < 1/(4C)");
    if (!(2.0 * eps <= gamma)) throw PreconditionError("perturbation: support box must fit inside the chart");
  }
};

template <class D>
class LocalPerturbation {
  static_assert(D::c == 1, "the kick uses a one-dimensional center coordinate");

 public:
  using dims = D;
  using Point = Coords<D>;
  static constexpr int center_axis = D::s;
  static constexpr int kick_axis = D::s + D::c;

  LocalPerturbation(const PerturbationParams& p, const BumpProfile& bump = default_bump())
      : params_(p), field_(p.eps, bump) {
    params_.validate();
  }

  const PerturbationParams& params() const { return params_; }
  const MollifierField<D::d>& field() const { return field_; }
  double eps() const { return params_.eps; }
  double t() const { return params_.t; }

  bool in_support(const Point& p) const { return field_.in_support(p); }

  Point apply(const Point& p) const {
    check_domain(p);
    Point out = p;
    if (!in_support(p) || params_.t == 0.0) return out;
    out(kick_axis) += params_.t * p(center_axis) * field_.value(p);
    return out;
  }

  FrameMatrix<D> jacobian(const Point& p) const {
    check_domain(p);
    FrameMatrix<D> j;
    if (!in_support(p) || params_.t == 0.0) return j;
    const double t = params_.t, y = p(center_axis);
    const auto grad = field_.gradient(p);
    for (int col = 0; col < D::d; ++col) j.matrix()(kick_axis, col) += t * y * grad(col);
    j.matrix()(kick_axis, center_axis) += t * field_.value(p);
    return j;
  }

  /// Second derivatives of the kick component (the only non-affine one).
  Eigen::Matrix<double, D::d, D::d> kick_hessian(const Point& p) const {
    Eigen::Matrix<double, D::d, D::d> hs = Eigen::Matrix<double, D::d, D::d>::Zero();
    if (!in_support(p) || params_.t == 0.0) return hs;
    const double t = params_.t, y = p(center_axis);
    const auto grad = field_.gradient(p);
    hs = t * y * field_.hessian(p);
    for (int i = 0; i < D::d; ++i) {
      hs(center_axis, i) += t * grad(i);
      hs(i, center_axis) += t * grad(i);
    }
    return hs;
  }

  /// Fixed point z ← z' - t·y·Φ(x,y,z); contraction factor ≤ 2Ct ≤ 1/2.
  Point invert(const Point& q) const {
    check_domain(q);
    if (!in_support(q) || params_.t == 0.0) return q;
    const double t = params_.t, y = q(center_axis);
    Point p = q;
    for (int it = 0; it < 60; ++it) {
      const double next = q(kick_axis) - t * y * field_.value(p);
      const double step = std::abs(next - p(kick_axis));
      p(kick_axis) = next;
      if (step <= 1e-13) return p;
    }
    throw NumericError("h_invert: fixed-point iteration did not converge in 60 iterations");
  }

 private:
  void check_domain(const Point& p) const {
    if (!p.allFinite() || p.cwiseAbs().maxCoeff() > params_.gamma)
      throw PreconditionError("perturbation: point outside the chart box");
  }

  PerturbationParams params_;
  MollifierField<D::d> field_;
};

/// g = f∘H. Holds the system and chart by value (both are small and immutable).
template <class S>
  requires PartiallyHyperbolicSystem<S>
class PerturbedMap {
 public:
  using Point = typename S::Point;
  using dims = typename S::dims;
  using Chart = typename S::Chart;
  using D = dims;

  PerturbedMap(const S& sys, const Chart& chart, const PerturbationParams& params,
               const BumpProfile& bump = default_bump())
      : sys_(sys), chart_(chart), h_(checked(params, chart), bump) {}

  const S& system() const { return sys_; }
  const Chart& chart() const { return chart_; }
  const LocalPerturbation<D>& perturbation() const { return h_; }
  SplittingSpec rates() const { return sys_.rates(); }

  std::optional<Coords<D>> in_chart(const Point& q) const { return chart_.to_chart(q); }

  /// q ∈ V = ψ(open support box).
  bool in_support(const Point& q) const {
    const auto c = chart_.to_chart(q);
    return c && h_.in_support(*c);
  }

  /// H(q). With t = 0 every code path returns f's values unchanged.
  Point perturb(const Point& q) const {
    const auto c = active(q);
    if (!c) return q;
    return chart_.from_chart(h_.apply(*c));
  }

  Point apply(const Point& q) const { return sys_.apply(perturb(q)); }

  Point inverse(const Point& q) const {
    const Point p = sys_.inverse(q);
    const auto c = active(p);
    if (!c) return p;
    return chart_.from_chart(h_.invert(*c));
  }

  /// DH(q) in frame coordinates: Jψ(h(c)) · Dh(c) · Jψ(c)⁻¹.
  FrameMatrix<D> perturbation_differential(const Point& q) const {
    const auto c = active(q);
    if (!c) return FrameMatrix<D>::identity();
    return perturbation_differential_at(*c);
  }

  FrameMatrix<D> frame_differential(const Point& q) const {
    const auto c = active(q);
    if (!c) return sys_.frame_differential(q);
    const Point hq = chart_.from_chart(h_.apply(*c));
    return sys_.frame_differential(hq) * perturbation_differential_at(*c);
  }

 private:
  std::optional<Coords<D>> active(const Point& q) const {
    if (h_.t() == 0.0) return std::nullopt;
    auto c = chart_.to_chart(q);
    if (!c || !h_.in_support(*c)) return std::nullopt;
    return c;
  }

  FrameMatrix<D> perturbation_differential_at(const Coords<D>& c) const {
    const auto jc = chart_.jacobian(c).matrix();
    const auto jh = chart_.jacobian(h_.apply(c)).matrix();
    const auto lu = jc.partialPivLu();
    if (!(std::abs(lu.determinant()) > 1e-300)) throw NumericError("perturbed map: singular chart Jacobian");
    return FrameMatrix<D>(jh * h_.jacobian(c).matrix() * lu.inverse());
  }

  static const PerturbationParams& checked(const PerturbationParams& p, const Chart& chart) {
    if (!(p.eps <= chart.gamma() / 4.0 * (1.0 + 1e-12)))
      throw PreconditionError("perturbed map: eps must not exceed gamma/4");
    if (std::abs(p.gamma - chart.gamma()) > 1e-15)
      throw PreconditionError("perturbed map: params.gamma differs from the chart radius");
    return p;
  }

  S sys_;
  Chart chart_;
  LocalPerturbation<D> h_;
};

/// Builds params for a chart with C from the bump certificate.
inline PerturbationParams make_params(double eps, double t, double gamma, const BumpProfile& bump = default_bump()) {
  PerturbationParams p;
  p.eps = eps;
  p.gamma = gamma;
  p.C = bump_certificate(bump).C;
  p.t = t;
  return p;
}

// ---------------------------------------------------------------------------
// Closeness audit over the support box [-2ε, 2ε]^d.

struct ClosenessReport {
  double eps = 0, t = 0, C = 0, C2 = 0;
  int grid = 0;
  double fd_step1 = 0, fd_step2 = 0;
  double c0 = 0;  // sup |h - Id|
  double c1 = 0;  // max(c0, sup |D(h - Id)| entrywise)
  double c2 = 0;  // max(c1, sup |D²(h - Id)| entrywise)
  double bound_c1 = 0;          // (1 + 2C) t
  double bound_c2 = 0;          // K2 t / ε, K2 from the product-rule terms
  double bound_c2_nominal = 0;  // C2 t / ε
  double min_det = 1;
  double det_floor = 1;  // 1 - 2Ct
  bool pass_c1 = false;
  bool pass_c2 = false;
  bool pass_c2_nominal = false;
  bool pass_det = false;

  bool ok() const { return pass_c1 && pass_c2 && pass_det; }
};

/// FD steps scale with ε (h1 = 2e-4·ε, h2 = 0.02·ε) so the probed offsets sit
/// at fixed relative positions inside the bump.
template <class D>
ClosenessReport closeness_audit(const LocalPerturbation<D>& h, int grid = 64, double rel_step1 = 2e-4,
                                double rel_step2 = 0.02) {
  if (grid < 2) throw PreconditionError("closeness_audit: grid needs at least 2 points per axis");
  const auto& prm = h.params();
  const auto cert = bump_certificate(h.field().profile());
  ClosenessReport rep;
  rep.eps = prm.eps;
  rep.t = prm.t;
  rep.C = cert.C;
  rep.C2 = cert.C2;
  rep.grid = grid;
  rep.fd_step1 = rel_step1 * prm.eps;
  rep.fd_step2 = rel_step2 * prm.eps;
  const int k = LocalPerturbation<D>::kick_axis;
  const double e = prm.eps, t = prm.t;
  const double h1 = rep.fd_step1, h2 = rep.fd_step2;

  auto kick = [&](const Coords<D>& p) {
    if (p.cwiseAbs().maxCoeff() > prm.gamma) return 0.0;
    return h.apply(p)(k) - p(k);
  };

  long total = 1;
  for (int i = 0; i < D::d; ++i) total *= grid;
  double c0 = 0, d1 = 0, d2 = 0, min_det = std::numeric_limits<double>::infinity();
  for (long idx = 0; idx < total; ++idx) {
    Coords<D> p;
    long r = idx;
    for (int i = 0; i < D::d; ++i) {
      p(i) = -2.0 * e + 4.0 * e * static_cast<double>(r % grid) / (grid - 1);
      r /= grid;
    }
    const double k0 = kick(p);
    c0 = std::max(c0, std::abs(k0));
    min_det = std::min(min_det, h.jacobian(p).matrix().determinant());
    for (int i = 0; i < D::d; ++i) {
      Coords<D> ei = Coords<D>::Zero();
      ei(i) = 1;
      d1 = std::max(d1, std::abs((kick(p + h1 * ei) - kick(p - h1 * ei)) / (2 * h1)));
      for (int j = i; j < D::d; ++j) {
        double v;
        if (i == j) {
          v = (kick(p + h2 * ei) - 2 * k0 + kick(p - h2 * ei)) / (h2 * h2);
        } else {
          Coords<D> ej = Coords<D>::Zero();
          ej(j) = 1;
          v = (kick(p + h2 * ei + h2 * ej) - kick(p + h2 * ei - h2 * ej) - kick(p - h2 * ei + h2 * ej) +
               kick(p - h2 * ei - h2 * ej)) /
              (4 * h2 * h2);
        }
        d2 = std::max(d2, std::abs(v));
      }
    }
  }
  rep.c0 = c0;
  rep.c1 = std::max(c0, d1);
  rep.c2 = std::max(rep.c1, d2);
  rep.min_det = min_det;
  rep.det_floor = 1.0 - 2.0 * cert.C * t;
  rep.bound_c1 = (1.0 + 2.0 * cert.C) * t;
  // ∂²(tyΦ): yy gives t(2Φ_y + yΦ_yy), y·other gives t(Φ_o + yΦ_yo), others tyΦ_oo'.
  const double C = cert.C, C2 = cert.C2;
  const double K2 = std::max({2 * C + 2 * C2, C + 2 * C * C, 2 * C2, 2 * C * C});
  rep.bound_c2 = std::max(rep.bound_c1, K2 * t / e);
  rep.bound_c2_nominal = C2 * t / e;
  const double slack = 1e-9 * std::max(1e-300, t);
  rep.pass_c1 = rep.c1 <= rep.bound_c1 + slack;
  rep.pass_c2 = rep.c2 <= rep.bound_c2 * (1.0 + 1e-3) + slack;
  rep.pass_c2_nominal = rep.c2 <= rep.bound_c2_nominal + slack;
  rep.pass_det = min_det >= 0.5 && min_det >= rep.det_floor - 1e-12;
  return rep;
}

}  // namespace hypexp
