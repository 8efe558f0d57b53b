#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hypexp/hypexp.hpp"

using namespace hypexp;
using Catch::Approx;

namespace {

const BumpCertificate& cert() {
  static const BumpCertificate c = bump_certificate();
  return c;
}

PerturbedMap<CatSuspension> cat_g(double frac, double eps = 0.05) {
  const CatSuspension cat;
  PerturbationParams p;
  p.eps = eps;
  p.gamma = 0.2;
  p.C = cert().C;
  p.t = frac / (4 * cert().C);
  return PerturbedMap<CatSuspension>(cat, cat.make_chart(CatSuspension::default_q0(), 0.2), p);
}

PerturbedMap<GeodesicSurface> geo_g(double frac) {
  const GeodesicSurface geo;
  PerturbationParams p;
  p.eps = 0.02;
  p.gamma = 0.08;
  p.C = cert().C;
  p.t = frac / (4 * cert().C);
  return PerturbedMap<GeodesicSurface>(geo, geo.make_chart(GeodesicSurface::default_q0(), 0.08), p);
}

CatPoint start(std::uint64_t seed) {
  TaskRng rng(seed, 0, Stream::initial_points);
  return CatSuspension().sample_uniform(rng);
}

// Scalar oracle for the cat model: Dg|cu = [[1, 0], [a, m]] (center row is
// untouched by the kick), so E^c_g = span(1, σ) with σ(q) = (σ(gq) - a)/m.
std::vector<double> sigma_oracle(const PerturbedMap<CatSuspension>& g, CatPoint q, std::size_t n, std::size_t lead) {
  std::vector<double> a, m;
  for (std::size_t k = 0; k < n + lead; ++k) {
    const auto d = g.frame_differential(q).matrix();
    REQUIRE(d(1, 1) == 1.0);
    REQUIRE(d(1, 2) == 0.0);
    a.push_back(d(2, 1));
    m.push_back(d(2, 2));
    q = g.apply(q);
  }
  std::vector<double> sigma(n + lead + 1, 0.0);
  for (std::size_t k = n + lead; k-- > 0;) sigma[k] = (sigma[k + 1] - a[k]) / m[k];
  sigma.resize(n + 1);
  return sigma;
}

}  // namespace

TEST_CASE("unperturbed center is E^c_f", "[lyapunov]") {
  const auto f = cat_g(0.0);
  const auto q = start(1);
  const auto v = track_central_direction(f, q, 80);
  CHECK(v.unstable()(0) == 0.0);
  CHECK(std::abs(v.center()(0)) == 1.0);
  const auto x = xi_field(f, q);
  CHECK(x.xi == 0.0);
  CHECK(x.sigma == 0.0);
  CHECK(x.label == MLCase::B1);
  CHECK_THROWS_AS(track_central_direction(f, q, 0), PreconditionError);
}

TEST_CASE("unperturbed central exponent is exactly zero", "[lyapunov]") {
  const auto f = cat_g(0.0);
  CentralOptions o;
  o.steps = 100000;
  o.with_qr = true;
  const auto e = central_exponent(f, start(2), o);
  CHECK(e.estimate == 0.0);
  CHECK(e.min_summand == 0.0);
  CHECK(e.max_summand == 0.0);
  CHECK(e.cases[static_cast<int>(MLCase::B1)] == o.steps);
  CHECK(e.visits == 0);
  CHECK(e.qr.exponents[1] == 0.0);
}

TEST_CASE("tracked slope agrees with the scalar recursion", "[lyapunov]") {
  const auto g = cat_g(0.9);
  const auto q = start(3);
  const std::size_t n = 3000;
  const auto sigma = sigma_oracle(g, q, n, 200);
  OrbitWindow<PerturbedMap<CatSuspension>> w(g, q);
  w.extend(n + 80);
  const auto dirs = w.sweep(n, n + 80);
  std::size_t nonzero = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double s = dirs[k](1) / dirs[k](0);
    CHECK(s == Approx(sigma[k]).epsilon(1e-9).margin(1e-15));
    nonzero += sigma[k] != 0.0;
  }
  CHECK(nonzero > 0);
}

TEST_CASE("cat summands telescope", "[lyapunov]") {
  // log‖Dg(1,σ_k)‖/‖(1,σ_k)‖ = ½log(1+σ_{k+1}²) - ½log(1+σ_k²).
  const auto g = cat_g(0.9);
  const auto q = start(4);
  const std::size_t n = 2000;
  const auto sigma = sigma_oracle(g, q, n, 200);
  const auto s = central_summands(g, q, n, 80);
  REQUIRE(s.size() == n);
  double worst = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double expected = 0.5 * (std::log1p(sigma[k + 1] * sigma[k + 1]) - std::log1p(sigma[k] * sigma[k]));
    worst = std::max(worst, std::abs(s[k] - expected));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("perturbed cat: QR middle exponent and central estimate", "[lyapunov]") {
  const auto g = cat_g(0.9);
  CentralOptions o;
  o.steps = 200000;
  o.with_qr = true;
  const auto e = central_exponent(g, start(5), o);
  CHECK(e.visits > 0);
  CHECK(e.qr.exponents[0] == Approx(std::log(CatSuspension().lambda_u()) / std::sqrt(2.0)).epsilon(1e-3));
  CHECK(std::abs(e.estimate) <= 1e-9);
  CHECK(std::abs(e.qr.exponents[1]) <= 1e-12);
  std::size_t total = 0;
  for (auto c : e.cases) total += c;
  CHECK(total == o.steps);
}

TEST_CASE("tracker invariance", "[lyapunov]") {
  const auto g = cat_g(0.9);
  const auto a = tracker_invariance_audit(g, start(6), 20000, 80);
  CHECK(a.max_angle <= 1e-8);
  const auto gg = geo_g(0.9);
  TaskRng rng(6, 1, Stream::initial_points);
  const auto b = tracker_invariance_audit(gg, GeodesicSurface().sample_uniform(rng), 5000, 80);
  CHECK(b.max_angle <= 1e-8);
}

TEST_CASE("slope audit", "[lyapunov]") {
  const auto g = cat_g(0.9);
  const auto rep = slope_audit(g, start(7), 300);
  CHECK(rep.blocks == 300);
  CHECK(rep.ok());
  CHECK(rep.max_identity_error <= 1e-10);
  CHECK(rep.plateau_entries > 0);
  CHECK(rep.plateau_positive == rep.plateau_entries);
}

TEST_CASE("xi on the geodesic model", "[lyapunov][geodesic]") {
  // Off V the geodesic map stretches any tilted center vector, so σ ≠ 0 gives
  // ξ > 0. Inside V, ξ is checked against a direct norm ratio.
  const auto g = geo_g(0.9);
  TaskRng rng(8, 0, Stream::initial_points);
  auto q = GeodesicSurface().sample_uniform(rng);
  OrbitWindow<PerturbedMap<GeodesicSurface>> w(g, q);
  const std::size_t n = 200000;
  w.extend(n + 80);
  const auto dirs = w.sweep(n, n + 80);
  std::size_t tilted = 0, inside = 0;
  double min_off = INFINITY;
  for (std::size_t k = 0; k < n; ++k) {
    const auto x = xi_from<Dims3>(w.rec(k), dirs[k]);
    if (!w.rec(k).in_v) {
      min_off = std::min(min_off, x.xi);
      // ξ ≈ (e²-1)σ²/2; below |σ| ~ 1e-150 it is not representable.
      if (std::abs(x.sigma) > 1e-150) {
        ++tilted;
        CHECK(x.xi > 0);
      }
    } else {
      ++inside;
      const Eigen::Vector2d v = dirs[k];
      const double direct = (w.rec(k).dg.cu_block() * v).norm() / v.norm() - 1;
      CHECK(x.xi == Approx(direct).margin(1e-13));
    }
  }
  CHECK(tilted > 0);
  CHECK(inside > 0);
  CHECK(min_off >= 0.0);
}

TEST_CASE("case classification", "[lyapunov]") {
  CHECK(classify<Dims3>(0.1, false, 0) == MLCase::A1);
  CHECK(classify<Dims3>(-0.1, true, 0) == MLCase::A2);
  CHECK(classify<Dims3>(0.0, false, 0.3) == MLCase::B1);
  CHECK(classify<Dims3>(0.0, true, 0.0) == MLCase::B2a);
  CHECK(classify<Dims3>(0.0, true, 0.3) == MLCase::B2b);
}

TEST_CASE("histogram", "[lyapunov]") {
  Histogram h(0, 1, 4);
  for (double x : {-0.5, 0.0, 0.3, 0.99, 1.0, 2.0}) h.add(x);
  CHECK(h.underflow == 1);
  CHECK(h.overflow == 2);
  CHECK(h.counts[0] == 1);
  CHECK(h.counts[1] == 1);
  CHECK(h.counts[3] == 1);
  CHECK(h.bin_center(0) == Approx(0.125));
}

TEST_CASE("precondition errors", "[lyapunov]") {
  const auto g = cat_g(0.5);
  CentralOptions o;
  o.steps = 10;
  CHECK_THROWS_AS(central_exponent(g, start(9), o), PreconditionError);
  CHECK_THROWS_AS(qr_spectrum(g, start(9), 999), PreconditionError);
  CHECK_THROWS_AS(tracker_invariance_audit(g, start(9), 100, 0), PreconditionError);
}
