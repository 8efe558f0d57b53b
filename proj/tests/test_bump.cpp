#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "hypexp/hypexp.hpp"

using namespace hypexp;
using Catch::Approx;

namespace {

double eta1_ref(double s) {
  if (s <= 0 || s >= 1) return 0.0;
  return std::exp(-1.0 / (s * s)) * std::exp(-1.0 / ((1 - s) * (1 - s)));
}

// Adaptive Simpson, independent of the Gauss-Legendre table.
double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
  const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm), right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol) return left + right + (left + right - whole) / 15;
  return simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-16) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return simpson(f, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, 50);
}

}  // namespace

TEST_CASE("eta0 and eta1 closed forms", "[bump]") {
  CHECK(bump_detail::eta0(0.0) == 0.0);
  CHECK(bump_detail::eta0(-1.0) == 0.0);
  CHECK(bump_detail::eta0(1.0) == Approx(std::exp(-1.0)));
  CHECK(bump_detail::eta1(0.5) == Approx(std::exp(-8.0)).epsilon(1e-15));
  CHECK(bump_detail::eta1(1.0) == 0.0);
  CHECK(bump_detail::eta1(1.5) == 0.0);
  for (double s : {0.1, 0.3, 0.77}) {
    const double h = 1e-6;
    CHECK(bump_detail::eta1_d1(s) == Approx((eta1_ref(s + h) - eta1_ref(s - h)) / (2 * h)).epsilon(1e-6));
    CHECK(bump_detail::eta1_d2(s) ==
          Approx((bump_detail::eta1_d1(s + h) - bump_detail::eta1_d1(s - h)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("normalization matches adaptive Simpson", "[bump]") {
  const auto& b = default_bump();
  const double ref = integrate(eta1_ref, 0.0, 1.0);
  CHECK(b.normalization() == Approx(ref).epsilon(1e-12));
}

TEST_CASE("eta2 matches the cumulative integral", "[bump]") {
  const auto& b = default_bump();
  const double c = integrate(eta1_ref, 0.0, 1.0);
  double worst = 0;
  for (int k = 1; k < 200; ++k) {
    const double s = k / 200.0 + 0.00123;
    if (s >= 1) break;
    worst = std::max(worst, std::abs(b.eta2(s) - integrate(eta1_ref, 0.0, s, 1e-18) / c));
  }
  CHECK(worst <= 1e-12);
  CHECK(b.eta2(-0.5) == 0.0);
  CHECK(b.eta2(0.0) == 0.0);
  CHECK(b.eta2(1.0) == 1.0);
  CHECK(b.eta2(7.0) == 1.0);
}

TEST_CASE("eta2 is monotone", "[bump]") {
  const auto& b = default_bump();
  double prev = 0;
  for (int k = 0; k <= 200000; ++k) {
    const double v = b.eta2(k / 200000.0);
    REQUIRE(v >= prev);
    prev = v;
  }
}

TEST_CASE("phi plateau, support, symmetry", "[bump]") {
  const auto& b = default_bump();
  for (double s : {-1.0, -0.5, 0.0, 0.3, 1.0}) CHECK(b.phi(s) == 1.0);
  for (double s : {-3.0, -2.0, 2.0, 2.5}) CHECK(b.phi(s) == 0.0);
  for (double s : {1.2, 1.5, 1.9}) {
    CHECK(b.phi(s) > 0.0);
    CHECK(b.phi(s) < 1.0);
    CHECK(b.phi(-s) == Approx(b.phi(s)).margin(1e-15));
  }
  CHECK_THROWS_AS(b.phi(0.0, 3), PreconditionError);
}

TEST_CASE("phi derivatives against finite differences", "[bump]") {
  const auto& b = default_bump();
  double w1 = 0, w2 = 0;
  for (int k = 0; k <= 400; ++k) {
    const double s = -2.1 + 4.2 * k / 400.0, h = 1e-5;
    w1 = std::max(w1, std::abs(b.phi(s, 1) - (b.phi(s + h) - b.phi(s - h)) / (2 * h)));
    w2 = std::max(w2, std::abs(b.phi(s, 2) - (b.phi(s + h, 1) - b.phi(s - h, 1)) / (2 * h)));
  }
  CHECK(w1 <= 1e-6);
  CHECK(w2 <= 1e-6);
}

TEST_CASE("certificate constants", "[bump]") {
  const auto c = bump_certificate();
  CHECK(c.ok());
  // sup|φ'| sits at s = 3/2 where φ' = -η1(1/2)/c.
  CHECK(c.C == Approx(std::exp(-8.0) / default_bump().normalization()).epsilon(1e-12));
  // sup|φ''|: dense independent scan of η1'/c.
  double m2 = 0;
  for (int k = 0; k <= 1000000; ++k) m2 = std::max(m2, std::abs(bump_detail::eta1_d1(k / 1e6)));
  CHECK(c.C2 == Approx(m2 / default_bump().normalization()).epsilon(1e-8));
  CHECK(c.s0 > 1.0);
  CHECK(c.s0 < 2.0);
  CHECK(std::abs(default_bump().zeta_d1(c.s0)) <= 1e-8);
  CHECK(default_bump().zeta_d1(c.s0 - 0.01) > 0);
  CHECK(default_bump().zeta_d1(c.s0 + 0.01) < 0);
}

TEST_CASE("coarse profiles converge to the default", "[bump]") {
  const BumpProfile coarse(1024);
  const auto& fine = default_bump();
  CHECK(coarse.normalization() == Approx(fine.normalization()).epsilon(1e-13));
  double worst = 0;
  for (int k = 0; k <= 1000; ++k) worst = std::max(worst, std::abs(coarse.eta2(k / 1000.0) - fine.eta2(k / 1000.0)));
  CHECK(worst <= 1e-9);
  CHECK_THROWS_AS(BumpProfile(4), PreconditionError);
}

TEST_CASE("mollifier field product structure", "[bump]") {
  const MollifierField<3> m(0.05);
  using P = MollifierField<3>::Point;
  CHECK(m.value(P(0.01, -0.04, 0.049)) == 1.0);
  CHECK(m.value(P(0.1, 0, 0)) == 0.0);
  CHECK_FALSE(m.in_support(P(0, 0.1, 0)));
  const P p(0.07, -0.06, 0.02);
  const auto& b = default_bump();
  CHECK(m.value(p) == Approx(b.phi(1.4) * b.phi(-1.2) * b.phi(0.4)));
  const double h = 1e-7;
  const auto g = m.gradient(p);
  const auto H = m.hessian(p);
  for (int i = 0; i < 3; ++i) {
    P e = P::Zero();
    e(i) = h;
    CHECK(g(i) == Approx((m.value(p + e) - m.value(p - e)) / (2 * h)).epsilon(1e-5).margin(1e-6));
    const P gi = (m.gradient(p + e) - m.gradient(p - e)) / (2 * h);
    for (int j = 0; j < 3; ++j) CHECK(H(i, j) == Approx(gi(j)).epsilon(1e-4).margin(1e-3));
  }
  CHECK((H - H.transpose()).norm() == 0.0);
  CHECK_THROWS_AS(MollifierField<3>(0.0), PreconditionError);
}
