#pragma once

// Adapted-frame linear algebra: frame vectors and derivative blocks,
// slopes inside E^{cu}, cones around E^c, the graph-gain quotient for a
// dominated splitting, and an empirical domination check.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hypexp/errors.hpp"

namespace hypexp {

enum class Bundle { stable = 0, center = 1, unstable = 2 };

inline const char* bundle_name(Bundle b) {
  switch (b) {
    case Bundle::stable: return "stable";
    case Bundle::center: return "center";
    case Bundle::unstable: return "unstable";
  }
  return "?";
}

/// Compile-time dimensions of the splitting E^s + E^c + E^u.
/// Coordinates are ordered stable, center, unstable.
template <int S, int C, int U>
struct Dims {
  static_assert(S >= 1 && C >= 1 && U >= 1, "all subbundles must be non-trivial");
  static constexpr int s = S;
  static constexpr int c = C;
  static constexpr int u = U;
  static constexpr int d = S + C + U;
  static constexpr int cu = C + U;

  static constexpr int begin(Bundle b) {
    return b == Bundle::stable ? 0 : (b == Bundle::center ? S : S + C);
  }
  static constexpr int size(Bundle b) {
    return b == Bundle::stable ? S : (b == Bundle::center ? C : U);
  }
};

using Dims3 = Dims<1, 1, 1>;

template <class D>
using Coords = Eigen::Matrix<double, D::d, 1>;

/// Tangent vector in an orthonormal adapted frame, so the Euclidean norm of
/// the coordinates is the adapted norm.
template <class D>
class FrameVector {
 public:
  using dims = D;

  FrameVector() : v_(Coords<D>::Zero()) {}
  explicit FrameVector(const Coords<D>& v) : v_(v) {}

  static FrameVector from_parts(const Eigen::Matrix<double, D::s, 1>& vs,
                                const Eigen::Matrix<double, D::c, 1>& vc,
                                const Eigen::Matrix<double, D::u, 1>& vu) {
    Coords<D> v;
    v << vs, vc, vu;
    return FrameVector(v);
  }

  /// Vector in E^{cu} with zero stable part.
  static FrameVector center_unstable(const Eigen::Matrix<double, D::c, 1>& vc,
                                     const Eigen::Matrix<double, D::u, 1>& vu) {
    return from_parts(Eigen::Matrix<double, D::s, 1>::Zero(), vc, vu);
  }

  auto stable() const { return v_.template segment<D::s>(0); }
  auto center() const { return v_.template segment<D::c>(D::s); }
  auto unstable() const { return v_.template segment<D::u>(D::s + D::c); }
  auto part(Bundle b) const { return v_.segment(D::begin(b), D::size(b)); }

  const Coords<D>& coords() const { return v_; }
  Coords<D>& coords() { return v_; }
  double norm() const { return v_.norm(); }

 private:
  Coords<D> v_;
};

/// d x d derivative expressed in the adapted frame; blocks indexed by bundle.
template <class D>
class FrameMatrix {
 public:
  using dims = D;
  using Matrix = Eigen::Matrix<double, D::d, D::d>;

  FrameMatrix() : m_(Matrix::Identity()) {}
  explicit FrameMatrix(const Matrix& m) : m_(m) {}

  static FrameMatrix identity() { return FrameMatrix(); }

  static FrameMatrix block_diagonal(double stable, double center, double unstable) {
    Eigen::Matrix<double, D::d, 1> diag;
    diag << Eigen::Matrix<double, D::s, 1>::Constant(stable),
        Eigen::Matrix<double, D::c, 1>::Constant(center),
        Eigen::Matrix<double, D::u, 1>::Constant(unstable);
    return FrameMatrix(diag.asDiagonal().toDenseMatrix());
  }

  Eigen::MatrixXd block(Bundle row, Bundle col) const {
    return m_.block(D::begin(row), D::begin(col), D::size(row), D::size(col));
  }

  /// Restriction to E^{cu} (bottom-right corner, rows and columns c..u).
  Eigen::Matrix<double, D::cu, D::cu> cu_block() const {
    return m_.template bottomRightCorner<D::cu, D::cu>();
  }

  const Matrix& matrix() const { return m_; }
  Matrix& matrix() { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  bool all_finite() const { return m_.allFinite(); }

  friend FrameMatrix operator*(const FrameMatrix& a, const FrameMatrix& b) {
    return FrameMatrix(a.m_ * b.m_);
  }
  friend FrameVector<D> operator*(const FrameMatrix& a, const FrameVector<D>& v) {
    return FrameVector<D>(a.m_ * v.coords());
  }

 private:
  Matrix m_;
};

/// Rates 0 < λ1 ≤ μ1 < λ2 ≤ μ2 < λ3 ≤ μ3 with μ1 < 1 < λ3 and a constant
/// C ≥ 1 such that C^{-1}λ_i^n ≤ m(Df^n|E_i) ≤ ‖Df^n|E_i‖ ≤ C μ_i^n.
/// Under an adapted norm C = 1.
struct SplittingSpec {
  int dim_s = 1;
  int dim_c = 1;
  int dim_u = 1;
  double lambda1 = 0;
  double mu1 = 0;
  double lambda2 = 0;
  double mu2 = 0;
  double lambda3 = 0;
  double mu3 = 0;
  double c_rate = 1.0;

  bool valid() const {
    return dim_s > 0 && dim_c > 0 && dim_u > 0 && 0 < lambda1 && lambda1 <= mu1 && mu1 < lambda2 &&
           lambda2 <= mu2 && mu2 < lambda3 && lambda3 <= mu3 && mu1 < 1 && 1 < lambda3 &&
           c_rate >= 1;
  }

  void validate() const {
    if (!valid()) throw PreconditionError("SplittingSpec: rates violate the partial hyperbolicity ordering");
  }

  double lower(Bundle b) const {
    return b == Bundle::stable ? lambda1 : (b == Bundle::center ? lambda2 : lambda3);
  }
  double upper(Bundle b) const {
    return b == Bundle::stable ? mu1 : (b == Bundle::center ? mu2 : mu3);
  }
};

/// Slope ‖v^u‖ / ‖v^c‖ of a nonzero vector in E^{cu}; +∞ when v^c = 0.
template <class D>
double slope(const FrameVector<D>& v) {
  if (v.stable().squaredNorm() != 0.0)
    throw PreconditionError("slope: vector has a stable component (slope is defined inside E^cu only)");
  const double nc = v.center().norm();
  const double nu = v.unstable().norm();
  if (nc == 0.0 && nu == 0.0) throw PreconditionError("slope: zero vector");
  if (nc == 0.0) return std::numeric_limits<double>::infinity();
  return nu / nc;
}

/// Cone C_b = { v ∈ E^{cu} : slope(v) ≤ b } ∪ {0} around E^c.
class Cone {
 public:
  explicit Cone(double half_aperture) : b_(half_aperture) {
    if (!(b_ >= 0)) throw PreconditionError("Cone: aperture must be nonnegative");
  }
  double aperture() const { return b_; }

 private:
  double b_;
};

template <class D>
bool cone_contains(const Cone& cone, const FrameVector<D>& v) {
  if (v.stable().squaredNorm() != 0.0)
    throw PreconditionError("cone_contains: vector has a stable component");
  if (v.coords().squaredNorm() == 0.0) return true;
  return slope(v) <= cone.aperture();
}

// ---------------------------------------------------------------------------
// Graph gain.
//
// For A = diag(A_E, A_F) on E ⊕ F with E ⊥ F and ‖A_E‖ < λ < m(A_F), λ > 1,
// and G = graph(L), L: E → F, returns ξ with ‖A|G‖ = (1+ξ)‖A|E‖.
// For u = v + Lv,
//   ‖Au‖²/‖u‖² = (‖Av‖²/‖v‖²) · (1 + ‖A_F L v‖²/‖A_E v‖²) / (1 + ‖Lv‖²/‖v‖²),
// and the bracketed quotient exceeds 1 whenever Lv ≠ 0.

struct GraphGain {
  double xi = 0;      // ‖A|G‖ / ‖A|E‖ - 1
  double norm_e = 0;  // ‖A|E‖
  double norm_g = 0;  // ‖A|G‖
};

inline double operator_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

inline double conorm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

/// The bracketed quotient (1 + ‖A_F L v‖²/‖A_E v‖²) / (1 + ‖Lv‖²/‖v‖²).
inline double graph_quotient(const Eigen::MatrixXd& a_e, const Eigen::MatrixXd& a_f,
                             const Eigen::MatrixXd& l, const Eigen::VectorXd& v) {
  const Eigen::VectorXd lv = l * v;
  const double av2 = (a_e * v).squaredNorm();
  const double v2 = v.squaredNorm();
  return (1.0 + (a_f * lv).squaredNorm() / av2) / (1.0 + lv.squaredNorm() / v2);
}

inline GraphGain graph_gain(const Eigen::MatrixXd& a_e, const Eigen::MatrixXd& a_f,
                            const Eigen::MatrixXd& l) {
  const auto e = a_e.rows();
  const auto f = a_f.rows();
  if (a_e.cols() != e || a_f.cols() != f || l.rows() != f || l.cols() != e || e == 0 || f == 0)
    throw PreconditionError("graph_gain: inconsistent block shapes");
  const double norm_e = operator_norm(a_e);
  const double conorm_f = conorm(a_f);
  if (!(conorm_f > 1.0 && norm_e < conorm_f))
    throw PreconditionError("graph_gain: splitting is not dominated (need ‖A_E‖ < λ < m(A_F) with λ > 1)");
  if (norm_e == 0.0) throw PreconditionError("graph_gain: A restricted to E vanishes");

  GraphGain out;
  out.norm_e = norm_e;
  if (e == 1) {
    const Eigen::VectorXd v = Eigen::VectorXd::Ones(1);
    out.xi = std::sqrt(graph_quotient(a_e, a_f, l, v)) - 1.0;
    out.norm_g = (1.0 + out.xi) * norm_e;
    return out;
  }
  // Higher-dimensional E: exact norm on G through an orthonormal basis of G.
  Eigen::MatrixXd basis(e + f, e);
  basis << Eigen::MatrixXd::Identity(e, e), l;
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(basis).householderQ() *
                            Eigen::MatrixXd::Identity(e + f, e);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(e + f, e + f);
  a.topLeftCorner(e, e) = a_e;
  a.bottomRightCorner(f, f) = a_f;
  out.norm_g = operator_norm(a * q);
  out.xi = out.norm_g / norm_e - 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Domination check.

template <class D>
struct DerivativeSample {
  FrameMatrix<D> derivative;
  int steps = 1;
};

struct BundleStats {
  double min_conorm_rate = std::numeric_limits<double>::infinity();
  double max_norm_rate = 0.0;
};

struct DominationViolation {
  std::size_t sample = 0;
  std::string what;
  double value = 0;
  double bound = 0;
};

struct DominationReport {
  std::array<BundleStats, 3> bundles{};
  double max_offdiagonal = 0.0;
  std::vector<DominationViolation> violations;
  std::size_t samples = 0;

  bool ok() const { return violations.empty(); }
  const BundleStats& stats(Bundle b) const { return bundles[static_cast<int>(b)]; }
};

/// Compares block norms and co-norms of each sample against the rates,
/// scaled by the sample's step count. Off-diagonal blocks must vanish
/// (the splitting is invariant). Rates are reported per step.
template <class D>
DominationReport check_domination(const SplittingSpec& spec, std::span<const DerivativeSample<D>> samples,
                                  double slack = 1e-12) {
  spec.validate();
  DominationReport rep;
  rep.samples = samples.size();
  constexpr std::array<Bundle, 3> all{Bundle::stable, Bundle::center, Bundle::unstable};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& m = samples[i].derivative;
    const int n = samples[i].steps;
    if (!m.all_finite()) {
      rep.violations.push_back({i, "non-finite entries", 0, 0});
      continue;
    }
    const double scale = std::max(1.0, m.matrix().cwiseAbs().maxCoeff());
    for (Bundle row : all) {
      for (Bundle col : all) {
        if (row == col) continue;
        const double off = m.block(row, col).cwiseAbs().maxCoeff();
        rep.max_offdiagonal = std::max(rep.max_offdiagonal, off);
        if (off > slack * scale)
          rep.violations.push_back({i, std::string("off-diagonal block ") + bundle_name(row) + "/" +
                                           bundle_name(col),
                                    off, slack * scale});
      }
      const auto blk = m.block(row, row);
      const double nrm = operator_norm(blk);
      const double con = conorm(blk);
      auto& st = rep.bundles[static_cast<int>(row)];
      st.max_norm_rate = std::max(st.max_norm_rate, std::pow(nrm, 1.0 / n));
      st.min_conorm_rate = std::min(st.min_conorm_rate, std::pow(con, 1.0 / n));
      const double lo = std::pow(spec.lower(row), n) / spec.c_rate;
      const double hi = spec.c_rate * std::pow(spec.upper(row), n);
      if (con < lo * (1.0 - slack))
        rep.violations.push_back({i, std::string(bundle_name(row)) + " co-norm below C^-1 lambda^n", con, lo});
      if (nrm > hi * (1.0 + slack))
        rep.violations.push_back({i, std::string(bundle_name(row)) + " norm above C mu^n", nrm, hi});
    }
  }
  return rep;
}

template <class D>
DominationReport check_domination(const SplittingSpec& spec, const std::vector<DerivativeSample<D>>& samples,
                                  double slack = 1e-12) {
  return check_domination<D>(spec, std::span<const DerivativeSample<D>>(samples), slack);
}

}  // namespace hypexp
