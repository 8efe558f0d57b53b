#pragma once

// Central-direction tracking and Lyapunov exponent estimators.
//
// E^c_g is located by a backward graph transform inside E^{cu}: seed with
// E^c_f some steps ahead and pull back with Dg⁻¹|E^{cu}. Long orbits are
// processed in chunks of `resettle` steps, each swept back from `settle`
// steps beyond its end, so every direction has at least `settle` steps of
// pull-back behind it.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "hypexp/errors.hpp"
#include "hypexp/splitting.hpp"
#include "hypexp/stats.hpp"
#include "hypexp/system.hpp"

namespace hypexp {

enum class MLCase { A1 = 0, A2 = 1, B1 = 2, B2a = 3, B2b = 4 };
inline constexpr std::array<const char*, 5> ml_case_names{"A.1", "A.2", "B.1", "B.2a", "B.2b"};

namespace lyap_detail {

template <class G>
bool in_v(const G& g, const typename G::Point& q) {
  // With t = 0 nothing is perturbed, so V is empty.
  if constexpr (requires { g.in_support(q); g.perturbation().t(); }) return g.perturbation().t() > 0 && g.in_support(q);
  else return false;
}

template <class G>
FrameMatrix<typename G::dims> dh(const G& g, const typename G::Point& q) {
  if constexpr (requires { g.perturbation_differential(q); }) return g.perturbation_differential(q);
  else return FrameMatrix<typename G::dims>::identity();
}

template <class D>
using CU = Eigen::Matrix<double, D::cu, 1>;
template <class D>
using CUMat = Eigen::Matrix<double, D::cu, D::cu>;

template <class D>
CU<D> center_seed() {
  CU<D> v = CU<D>::Zero();
  v(0) = 1.0;
  return v;
}

/// One pull-back step v ← normalize(M⁻¹ v).
template <class D>
CU<D> pull_back(const CUMat<D>& m, const CU<D>& v) {
  CU<D> w = m.partialPivLu().solve(v);
  const double n = w.norm();
  if (!(n > 0) || !std::isfinite(n)) throw NumericError("central tracker: singular E^cu block");
  w /= n;
  if (std::abs(w(0)) < 1e-30) throw NumericError("central tracker: center component collapsed during pull-back");
  if (w(0) < 0) w = -w;
  return w;
}

inline double angle2(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  // For 2-vectors: |a × b| / (|a||b|); general case via projection.
  const double na = a.norm(), nb = b.norm();
  const double c = std::clamp(std::abs(a.dot(b)) / (na * nb), 0.0, 1.0);
  const double s = (a / na - c * (a.dot(b) >= 0 ? 1.0 : -1.0) * b / nb).norm();
  return std::atan2(s, c);
}

}  // namespace lyap_detail

template <class D>
struct StepRecord {
  FrameMatrix<D> dg;
  bool in_v = false;
  double dh_uc = 0;  // DH entry (unstable row, center column)
};

/// Forward orbit window with per-step derivatives.
template <class G>
class OrbitWindow {
 public:
  using D = typename G::dims;
  using Point = typename G::Point;

  OrbitWindow(const G& g, const Point& q) : g_(&g), next_(q) {}

  void extend(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      StepRecord<D> r;
      r.in_v = lyap_detail::in_v(*g_, next_);
      r.dg = g_->frame_differential(next_);
      if (r.in_v) r.dh_uc = lyap_detail::dh(*g_, next_)(D::s + D::c, D::s);
      if (!r.dg.all_finite()) throw NumericError("orbit: non-finite derivative");
      recs_.push_back(r);
      pts_.push_back(next_);
      next_ = g_->apply(next_);
    }
  }

  void drop_front(std::size_t n) {
    for (std::size_t i = 0; i < n && !recs_.empty(); ++i) {
      recs_.pop_front();
      pts_.pop_front();
    }
  }

  std::size_t size() const { return recs_.size(); }
  const StepRecord<D>& rec(std::size_t i) const { return recs_[i]; }
  const Point& point(std::size_t i) const { return pts_[i]; }
  const Point& tip() const { return next_; }

  /// Direction at window index k from a sweep seeded `settle` steps ahead.
  lyap_detail::CU<D> direction_at(std::size_t k, std::size_t settle) const {
    auto v = lyap_detail::center_seed<D>();
    for (std::size_t j = k + settle; j-- > k;) v = lyap_detail::pull_back<D>(recs_[j].dg.cu_block(), v);
    return v;
  }

  /// Directions at window indices [0, count) from a sweep seeded at index `end`.
  std::vector<lyap_detail::CU<D>> sweep(std::size_t count, std::size_t end) const {
    auto v = lyap_detail::center_seed<D>();
    std::vector<lyap_detail::CU<D>> out(count);
    for (std::size_t j = end; j-- > 0;) {
      v = lyap_detail::pull_back<D>(recs_[j].dg.cu_block(), v);
      if (j < count) out[j] = v;
    }
    return out;
  }

 private:
  const G* g_;
  Point next_;
  std::deque<StepRecord<D>> recs_;
  std::deque<Point> pts_;
};

/// Unit E^c_g direction at q, as a frame vector with zero stable part.
template <class G>
FrameVector<typename G::dims> track_central_direction(const G& g, const typename G::Point& q, int n_settle) {
  using D = typename G::dims;
  if (n_settle < 1) throw PreconditionError("track_central_direction: n_settle must be >= 1");
  OrbitWindow<G> w(g, q);
  w.extend(static_cast<std::size_t>(n_settle));
  const auto v = w.direction_at(0, w.size());
  Coords<D> c = Coords<D>::Zero();
  c.template tail<D::cu>() = v;
  return FrameVector<D>(c);
}

struct XiSample {
  double xi = 0;  // ‖Dg(q)|E^c_g(q)‖ - 1
  double sigma = 0;
  MLCase label = MLCase::B1;
};

template <class D>
MLCase classify(double sigma, bool in_v, double dh_uc) {
  if (sigma != 0.0) return in_v ? MLCase::A2 : MLCase::A1;
  if (!in_v) return MLCase::B1;
  return dh_uc == 0.0 ? MLCase::B2a : MLCase::B2b;
}

template <class D>
XiSample xi_from(const StepRecord<D>& r, const lyap_detail::CU<D>& v) {
  XiSample x;
  x.sigma = v(D::c) / v(0);
  if constexpr (D::u > 1) x.sigma = v.template tail<D::u>().norm() / std::abs(v(0));
  // ‖Mv‖/‖v‖ - 1 = q / (1 + √(1+q)), q = vᵀ(MᵀM - I)v / ‖v‖², with the
  // diagonal of MᵀM - I formed as (m_ii - 1)(m_ii + 1) + Σ_{k≠i} m_ki² so
  // tiny tilts are not lost to cancellation.
  const auto m = r.dg.cu_block();
  Eigen::Matrix<double, D::cu, D::cu> gram = m.transpose() * m;
  for (int i = 0; i < D::cu; ++i) {
    double d = (m(i, i) - 1.0) * (m(i, i) + 1.0);
    for (int k = 0; k < D::cu; ++k)
      if (k != i) d += m(k, i) * m(k, i);
    gram(i, i) = d;
  }
  const double q = v.dot(gram * v) / v.squaredNorm();
  x.xi = q / (1.0 + std::sqrt(1.0 + q));
  x.label = classify<D>(x.sigma, r.in_v, r.dh_uc);
  return x;
}

/// ξ(q) with the direction tracked from q with n_settle steps of pull-back.
template <class G>
XiSample xi_field(const G& g, const typename G::Point& q, int n_settle = 80) {
  using D = typename G::dims;
  OrbitWindow<G> w(g, q);
  w.extend(static_cast<std::size_t>(std::max(1, n_settle)));
  const auto v = w.direction_at(0, w.size());
  return xi_from<D>(w.rec(0), v);
}

struct Histogram {
  double lo = 0, hi = 1;
  std::vector<long> counts;
  long underflow = 0, overflow = 0;

  Histogram() = default;
  Histogram(double a, double b, int bins) : lo(a), hi(b), counts(bins, 0) {}
  void add(double x) {
    if (x < lo) { ++underflow; return; }
    if (x >= hi) { ++overflow; return; }
    const auto k = static_cast<std::size_t>((x - lo) / (hi - lo) * counts.size());
    ++counts[std::min(k, counts.size() - 1)];
  }
  double bin_center(std::size_t k) const { return lo + (hi - lo) * (k + 0.5) / counts.size(); }
};

struct CentralOptions {
  std::size_t steps = 1000000;
  int settle = 80;
  std::size_t resettle = 10000;
  int batches = 100;
  bool with_qr = false;  // also run the QR spectrum on the same orbit
};

struct SpectrumEstimate {
  std::vector<double> exponents;  // descending
  std::vector<double> stderrs;
  std::size_t steps = 0;
  int settle = 0;
};

struct CentralEstimate {
  double estimate = 0;
  double standard_error = 0;
  double min_summand = std::numeric_limits<double>::infinity();
  double max_summand = -std::numeric_limits<double>::infinity();
  std::size_t steps = 0;
  std::size_t visits = 0;
  std::array<std::size_t, 5> cases{};
  std::vector<double> batch_means;
  Histogram xi_hist{-0.1, 2.0, 84};
  double min_xi_sigma_nonzero = std::numeric_limits<double>::infinity();
  double max_abs_sigma = 0;
  bool has_qr = false;
  SpectrumEstimate qr;
};

namespace lyap_detail {

/// Modified Gram-Schmidt QR step. Returns log|R_jj|.
template <int N>
Eigen::Matrix<double, N, 1> qr_step(Eigen::Matrix<double, N, N>& q, const Eigen::Matrix<double, N, N>& m) {
  Eigen::Matrix<double, N, N> z = m * q;
  Eigen::Matrix<double, N, 1> logs;
  for (int j = 0; j < N; ++j) {
    for (int i = 0; i < j; ++i) z.col(j) -= z.col(i).dot(z.col(j)) * z.col(i);
    const double r = z.col(j).norm();
    if (!(r > 0) || !std::isfinite(r)) throw NumericError("qr_spectrum: Jacobian singular to working precision");
    z.col(j) /= r;
    logs(j) = std::log(r);
  }
  q = z;
  return logs;
}

/// Initial frame with columns ordered unstable, center, stable.
template <class D>
Eigen::Matrix<double, D::d, D::d> qr_initial() {
  Eigen::Matrix<double, D::d, D::d> q = Eigen::Matrix<double, D::d, D::d>::Zero();
  int col = 0;
  for (int i = 0; i < D::u; ++i) q(D::s + D::c + i, col++) = 1;
  for (int i = 0; i < D::c; ++i) q(D::s + i, col++) = 1;
  for (int i = 0; i < D::s; ++i) q(i, col++) = 1;
  return q;
}

template <class D>
class QrAccumulator {
 public:
  QrAccumulator(std::size_t steps, int batches) : q_(qr_initial<D>()) {
    for (int j = 0; j < D::d; ++j) bm_.emplace_back(steps, batches);
  }
  void push(const FrameMatrix<D>& m) {
    const auto l = qr_step<D::d>(q_, m.matrix());
    for (int j = 0; j < D::d; ++j) bm_[j].add(l(j));
  }
  SpectrumEstimate finish(std::size_t steps, int settle) const {
    SpectrumEstimate out;
    out.steps = steps;
    out.settle = settle;
    std::vector<std::pair<double, double>> ex;
    for (const auto& b : bm_) ex.emplace_back(b.mean(), b.standard_error());
    std::stable_sort(ex.begin(), ex.end(), [](auto a, auto b) { return a.first > b.first; });
    for (auto& [e, s] : ex) {
      out.exponents.push_back(e);
      out.stderrs.push_back(s);
    }
    return out;
  }

 private:
  Eigen::Matrix<double, D::d, D::d> q_;
  std::vector<BatchMeans> bm_;
};

}  // namespace lyap_detail

/// Full spectrum by QR re-orthonormalization along the orbit of q.
template <class G>
SpectrumEstimate qr_spectrum(const G& g, const typename G::Point& q, std::size_t steps, int batches = 100) {
  using D = typename G::dims;
  if (steps < 1000) throw PreconditionError("qr_spectrum: need at least 1000 steps");
  lyap_detail::QrAccumulator<D> acc(steps, batches);
  typename G::Point p = q;
  for (std::size_t k = 0; k < steps; ++k) {
    acc.push(g.frame_differential(p));
    p = g.apply(p);
  }
  return acc.finish(steps, 0);
}

/// Birkhoff average of log‖Dg(q_k) u_k‖ along the tracked central direction.
template <class G>
CentralEstimate central_exponent(const G& g, const typename G::Point& q, const CentralOptions& opt = {}) {
  using D = typename G::dims;
  if (opt.steps < 1000) throw PreconditionError("central_exponent: need at least 1000 steps");
  if (opt.settle < 1 || opt.resettle < 1) throw PreconditionError("central_exponent: settle and resettle must be positive");
  CentralEstimate est;
  est.steps = opt.steps;
  BatchMeans bm(opt.steps, opt.batches);
  std::optional<lyap_detail::QrAccumulator<D>> qr;
  if (opt.with_qr) qr.emplace(opt.steps, opt.batches);

  OrbitWindow<G> w(g, q);
  const std::size_t settle = static_cast<std::size_t>(opt.settle);
  std::size_t done = 0;
  w.extend(std::min(opt.resettle, opt.steps) + settle);
  while (done < opt.steps) {
    const std::size_t count = std::min(opt.resettle, opt.steps - done);
    const auto dirs = w.sweep(count, count + settle);
    for (std::size_t j = 0; j < count; ++j) {
      const auto& r = w.rec(j);
      const auto x = xi_from<D>(r, dirs[j]);
      const double s = std::log1p(x.xi);
      if (!std::isfinite(s)) throw NumericError("central_exponent: non-finite summand");
      bm.add(s);
      est.min_summand = std::min(est.min_summand, s);
      est.max_summand = std::max(est.max_summand, s);
      if (r.in_v) ++est.visits;
      ++est.cases[static_cast<int>(x.label)];
      est.max_abs_sigma = std::max(est.max_abs_sigma, std::abs(x.sigma));
      if (x.sigma != 0.0) {
        est.xi_hist.add(x.xi);
        est.min_xi_sigma_nonzero = std::min(est.min_xi_sigma_nonzero, x.xi);
      }
      if (qr) qr->push(r.dg);
    }
    done += count;
    w.drop_front(count);
    if (done < opt.steps) w.extend(std::min(opt.resettle, opt.steps - done));
  }
  est.estimate = bm.mean();
  est.standard_error = bm.standard_error();
  est.batch_means = bm.batch_means();
  if (qr) {
    est.has_qr = true;
    est.qr = qr->finish(opt.steps, opt.settle);
  }
  return est;
}

struct InvarianceAudit {
  std::size_t steps = 0;
  int settle = 0;
  double max_angle = 0;
  std::size_t worst_step = 0;
};

/// Recomputes E^c_g independently at each point (settle steps of pull-back)
/// and measures angle(Dg(q_k)·dir(q_k), dir(q_{k+1})).
template <class G>
InvarianceAudit tracker_invariance_audit(const G& g, const typename G::Point& q, std::size_t steps, int settle = 80) {
  if (settle < 1) throw PreconditionError("tracker_invariance_audit: settle must be positive");
  InvarianceAudit rep;
  rep.steps = steps;
  rep.settle = settle;
  OrbitWindow<G> w(g, q);
  const std::size_t s = static_cast<std::size_t>(settle);
  w.extend(steps + 1 + s);
  auto dir_at = [&](std::size_t k) { return w.direction_at(k, s); };
  auto cur = dir_at(0);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto nxt = dir_at(k + 1);
    const Eigen::VectorXd img = w.rec(k).dg.cu_block() * cur;
    const double a = lyap_detail::angle2(img, nxt);
    if (a > rep.max_angle) {
      rep.max_angle = a;
      rep.worst_step = k;
    }
    cur = nxt;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Slope audit over return blocks: q_j ∈ V, q_{j+1..j+n} ∉ V, q_{j+n+1} ∈ V.

struct SlopeBlock {
  std::size_t start = 0;
  std::size_t length = 0;  // n + 1 derivative factors
  double log_factor = 0;   // Σ log(unstable stretch / center stretch)
  double kick_slope = 0;   // s_c(DH(q) e_c)
  double identity_error = 0;
};

struct SlopeAuditReport {
  std::size_t blocks = 0;
  std::size_t identity_violations = 0;
  std::size_t bound_violations = 0;
  std::size_t monotone_violations = 0;
  std::size_t plateau_entries = 0;
  std::size_t plateau_positive = 0;
  double max_identity_error = 0;
  double max_tracked_slope = 0;  // s_c(DH(q) E^c_g(q)); diagnostic only
  std::vector<SlopeBlock> samples;  // first few blocks, for inspection

  bool ok() const { return identity_violations == 0 && bound_violations == 0 && monotone_violations == 0; }
};

/// Pushes e_c and the tracked E^c_g through each block (extended precision,
/// unnormalized) and compares s_c(Dg^{n+1}v) with the realized stretch
/// product times s_c(DH v); also checks the per-step stretch against the
/// global rates C^{-1}λ3^{n+1} ≤ factor ≤ Cμ3^{n+1}. Entries inside the
/// plateau (Φ ≡ 1) are counted along with those where DH tilts E^c_f.
template <class G>
SlopeAuditReport slope_audit(const G& g, const typename G::Point& q, std::size_t blocks, int settle = 80,
                             double tol = 1e-10) {
  using D = typename G::dims;
  static_assert(D::c == 1 && D::u == 1, "slope audit is written for one-dimensional center and unstable bundles");
  const SplittingSpec sp = g.rates();
  const double logC = std::log(sp.c_rate);
  const int ic = D::s, iu = D::s + 1;
  SlopeAuditReport rep;

  OrbitWindow<G> w(g, q);
  const std::size_t chunk = 20000, s = static_cast<std::size_t>(settle);
  w.extend(chunk + s);
  std::size_t offset = 0;  // global index of window position 0
  // Move to the first visit.
  auto advance = [&](std::size_t& j) {
    ++j;
    if (j + s >= w.size()) w.extend(chunk);
  };
  std::size_t j = 0;
  while (!w.rec(j).in_v) {
    advance(j);
    if (j > 50000000) throw NumericError("slope_audit: orbit never enters V");
  }
  while (rep.blocks < blocks) {
    const std::size_t start = j;
    // Find the next entry.
    std::size_t k = j;
    do advance(k);
    while (!w.rec(k).in_v);
    const std::size_t end = k;  // re-entry index; factors start..end-1
    const auto& r0 = w.rec(start);
    const auto dh = lyap_detail::dh(g, w.point(start));
    const auto& dgm = r0.dg.matrix();
    // Df at H(q) = Dg(q) · DH(q)^{-1}.
    const Eigen::Matrix3d df0 = dgm * dh.matrix().inverse();

    long double log_factor = 0;
    bool monotone_ok = true;
    auto stretch = [&](const Eigen::Matrix3d& m) {
      return std::log(std::abs(static_cast<long double>(m(iu, iu)))) -
             std::log(std::abs(static_cast<long double>(m(ic, ic))));
    };
    log_factor += stretch(df0);
    for (std::size_t i = start + 1; i < end; ++i) {
      const long double st = stretch(w.rec(i).dg.matrix());
      if (st < -1e-12) monotone_ok = false;
      log_factor += st;
    }
    const std::size_t len = end - start;
    const double lo = len * std::log(sp.lambda3) - logC, hi = len * std::log(sp.mu3) + logC;
    const double lf = static_cast<double>(log_factor);
    if (lf < lo - 1e-12 * std::max(1.0, std::abs(lo)) || lf > hi + 1e-12 * std::max(1.0, std::abs(hi)))
      ++rep.bound_violations;
    if (!monotone_ok) ++rep.monotone_violations;

    // Identity on e_c. The tracked E^c_g sits within roundoff of E^c_f after
    // DH at most entries, so its forward push is dominated by amplified
    // roundoff; its entry slope is only recorded.
    Eigen::Matrix<long double, 3, 1> v;
    v << 0, 1, 0;
    v = dh.matrix().template cast<long double>() * v;
    const long double s_dh = std::abs(v(iu)) / std::abs(v(ic));
    const double kick_slope = static_cast<double>(s_dh);
    v = df0.template cast<long double>() * v;
    for (std::size_t i = start + 1; i < end; ++i) v = w.rec(i).dg.matrix().template cast<long double>() * v;
    const long double s_end = std::abs(v(iu)) / std::abs(v(ic));
    const long double amp = std::exp(log_factor);
    double worst = 0;
    if (s_dh == 0) worst = static_cast<double>(s_end);
    else worst = static_cast<double>(std::abs(s_end / (amp * s_dh) - 1.0L));

    const auto tracked = w.direction_at(start, s);
    Eigen::Vector3d tv(0, tracked(0), tracked(1));
    tv = dh.matrix() * tv;
    rep.max_tracked_slope = std::max(rep.max_tracked_slope, std::abs(tv(iu)) / std::abs(tv(ic)));
    if (worst > tol) ++rep.identity_violations;
    rep.max_identity_error = std::max(rep.max_identity_error, worst);
    if constexpr (requires { g.in_chart(w.point(start)); g.perturbation().eps(); }) {
      const auto c = g.in_chart(w.point(start));
      if (c && g.perturbation().t() > 0 && c->cwiseAbs().maxCoeff() < g.perturbation().eps()) {
        ++rep.plateau_entries;
        if (kick_slope > 0) ++rep.plateau_positive;
      }
    }
    if (rep.samples.size() < 20)
      rep.samples.push_back({offset + start, len, lf, kick_slope, worst});
    ++rep.blocks;
    j = end;
    if (j > 4 * chunk) {
      w.drop_front(j);
      offset += j;
      j = 0;
    }
  }
  return rep;
}

}  // namespace hypexp
