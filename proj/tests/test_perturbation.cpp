#include <catch_amalgamated.hpp>

#include <cmath>

#include "hypexp/hypexp.hpp"

using namespace hypexp;
using Catch::Approx;

namespace {

const BumpCertificate& cert() {
  static const BumpCertificate c = bump_certificate();
  return c;
}

PerturbationParams params(double eps, double t, double gamma = 0.2) {
  PerturbationParams p;
  p.eps = eps;
  p.t = t;
  p.gamma = gamma;
  p.C = cert().C;
  return p;
}

using P3 = Coords<Dims3>;

}  // namespace

TEST_CASE("t schedule", "[perturbation]") {
  const double C = cert().C;
  CHECK(t_schedule(0.05, C) == Approx(1.25e-4).epsilon(1e-15));
  CHECK(t_schedule(0.2, C) == Approx(0.008).epsilon(1e-15));
  CHECK(t_schedule(0.2, 100.0) == std::nextafter(1.0 / 400.0, 0.0));
  CHECK(t_schedule(0.2, 100.0) < 1.0 / 400.0);
  CHECK_THROWS_AS(t_schedule(0.0, C), PreconditionError);
  CHECK_THROWS_AS(t_schedule(0.1, -1), PreconditionError);
}

TEST_CASE("parameter validation", "[perturbation]") {
  CHECK_NOTHROW(params(0.05, 0.01).validate());
  CHECK_THROWS_AS(params(0.3, 0.01).validate(), PreconditionError);
  CHECK_THROWS_AS(params(0.05, 1.0 / (4 * cert().C)).validate(), PreconditionError);
  CHECK_THROWS_AS(params(0.05, -1e-9).validate(), PreconditionError);
  CHECK_THROWS_AS(params(0.15, 0.01, 0.2).validate(), PreconditionError);
}

TEST_CASE("kick formula", "[perturbation]") {
  const double t = 0.9 / (4 * cert().C);
  const LocalPerturbation<Dims3> h(params(0.05, t));
  const MollifierField<3> phi(0.05);
  // Plateau: z' = z + t y.
  const P3 p(0.01, 0.03, -0.02);
  const auto q = h.apply(p);
  CHECK(q(0) == p(0));
  CHECK(q(1) == p(1));
  CHECK(q(2) == Approx(p(2) + t * p(1)).epsilon(1e-15));
  const P3 r(0.07, -0.06, 0.09);
  CHECK(h.apply(r)(2) == Approx(r(2) + t * r(1) * phi.value(r)).epsilon(1e-15));
  // Identity off the support and on the y = 0 slice.
  const P3 off(0.11, 0.03, 0.0);
  CHECK(h.apply(off) == off);
  const P3 slice(0.01, 0.0, 0.04);
  CHECK(h.apply(slice) == slice);
  CHECK_THROWS_AS(h.apply(P3(0.3, 0, 0)), PreconditionError);
}

TEST_CASE("Jacobian against central differences", "[perturbation]") {
  const LocalPerturbation<Dims3> h(params(0.05, 0.9 / (4 * cert().C)));
  TaskRng rng(1, 0, Stream::audit_points);
  double worst = 0;
  for (int i = 0; i < 500; ++i) {
    const P3 p(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    const auto j = h.jacobian(p).matrix();
    const double d = 1e-7;
    for (int k = 0; k < 3; ++k) {
      P3 e = P3::Zero();
      e(k) = d;
      const P3 col = (h.apply(p + e) - h.apply(p - e)) / (2 * d);
      worst = std::max(worst, (col - j.col(k)).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-7);
}

TEST_CASE("determinant floor", "[perturbation]") {
  // det Dh = ∂z'/∂z = 1 + t y ∂_zΦ ≥ 1 - 2Ct on the support (|y| < 2ε, |∂_zΦ| ≤ C/ε).
  const double C = cert().C;
  for (double frac : {0.25, 0.9}) {
    const double t = frac / (4 * C);
    const LocalPerturbation<Dims3> h(params(0.05, t));
    TaskRng rng(2, 0, Stream::audit_points);
    double mn = 2;
    for (int i = 0; i < 20000; ++i) {
      const P3 p(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
      const double det = h.jacobian(p).matrix().determinant();
      mn = std::min(mn, det);
      const double expected = 1 + t * p(1) * h.field().gradient(p)(2);
      REQUIRE(det == Approx(expected).epsilon(1e-14));
    }
    CHECK(mn >= 1 - 2 * C * t - 1e-12);
    CHECK(mn >= 0.5);
  }
}

TEST_CASE("inversion", "[perturbation]") {
  const LocalPerturbation<Dims3> h(params(0.05, 0.99 / (4 * cert().C)));
  TaskRng rng(3, 0, Stream::audit_points);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const P3 p(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    worst = std::max(worst, (h.invert(h.apply(p)) - p).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("closeness audit bounds", "[perturbation]") {
  const double C = cert().C;
  const LocalPerturbation<Dims3> h(params(0.05, t_schedule(0.05, C)));
  const auto rep = closeness_audit(h, 32);
  CHECK(rep.ok());
  CHECK(rep.c0 <= rep.t * 2 * 0.05 + 1e-15);
  CHECK(rep.c1 <= (1 + 2 * C) * rep.t);
  CHECK(rep.min_det >= 0.5);
  // C² distance shrinks with ε under the cubic schedule.
  double prev = INFINITY;
  for (double eps : {0.05, 0.02, 0.01}) {
    const LocalPerturbation<Dims3> he(params(eps, t_schedule(eps, C)));
    const auto r = closeness_audit(he, 32);
    CHECK(r.c2 < prev);
    CHECK(r.c2 <= cert().C2 * eps);
    prev = r.c2;
  }
  CHECK_THROWS_AS(closeness_audit(h, 1), PreconditionError);
}

TEST_CASE("perturbed cat map", "[perturbation][cat]") {
  const CatSuspension cat;
  const auto chart = cat.make_chart(CatSuspension::default_q0(), 0.2);
  const double t = 0.9 / (4 * cert().C);
  const PerturbedMap<CatSuspension> g(cat, chart, params(0.05, t));

  SECTION("agrees with f off V and inverts on V") {
    double worst = 0;
    for (int i = 0; i < 5000; ++i) {
      TaskRng rng(4, i, Stream::audit_points);
      const auto q = i % 2 ? cat.sample_uniform(rng)
                           : chart.from_chart(P3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)));
      if (!g.in_support(q)) {
        const auto a = g.apply(q), b = cat.apply(q);
        REQUIRE(a.x == b.x);
        REQUIRE(a.s == b.s);
      }
      worst = std::max(worst, cat.distance(g.inverse(g.apply(q)), q));
    }
    CHECK(worst <= 1e-12);
  }

  SECTION("derivative preserves E^u and E^cu") {
    for (int i = 0; i < 2000; ++i) {
      TaskRng rng(5, i, Stream::audit_points);
      const auto q = chart.from_chart(P3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)));
      const auto m = g.frame_differential(q).matrix();
      REQUIRE(m(0, 1) == 0.0);
      REQUIRE(m(0, 2) == 0.0);
      REQUIRE(m(1, 2) == 0.0);
    }
  }

  SECTION("derivative matches finite differences of g in chart coordinates") {
    // Chart is affine in the cat model, so Dg in frame coordinates is the
    // chart-coordinate Jacobian of g when g(q) stays in the same chart sheet.
    TaskRng rng(6, 0, Stream::audit_points);
    int checked = 0;
    for (int i = 0; i < 400; ++i) {
      const P3 c(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
      const auto q = chart.from_chart(c);
      const double d = 1e-7;
      Eigen::Matrix3d fd;
      bool ok = true;
      for (int k = 0; k < 3; ++k) {
        P3 e = P3::Zero();
        e(k) = d;
        const auto a = g.apply(chart.from_chart(c + e)), b = g.apply(chart.from_chart(c - e));
        if (cat.crossings(chart.from_chart(c + e)) != cat.crossings(chart.from_chart(c - e))) ok = false;
        const Eigen::Vector2d dx = torus_delta(a.x - b.x) / (2 * d);
        fd(0, k) = dx.dot(cat.v_s());
        fd(1, k) = (a.s - b.s) / (2 * d);
        fd(2, k) = dx.dot(cat.v_u());
      }
      if (!ok) continue;
      ++checked;
      CHECK((fd - g.frame_differential(q).matrix()).cwiseAbs().maxCoeff() <= 1e-6);
    }
    CHECK(checked > 300);
  }

  SECTION("t = 0 reproduces f bit for bit") {
    const PerturbedMap<CatSuspension> f0(cat, chart, params(0.05, 0.0));
    TaskRng rng(7, 0, Stream::initial_points);
    auto a = cat.sample_uniform(rng);
    auto b = a;
    for (int n = 0; n < 20000; ++n) {
      a = cat.apply(a);
      b = f0.apply(b);
      REQUIRE(a.x == b.x);
      REQUIRE(a.s == b.s);
    }
  }

  SECTION("Monte Carlo volume of V") {
    // V is the image of the (4ε)³ box under an isometric chart; the phase
    // space has volume r.
    const double exact = std::pow(4 * 0.05, 3) / cat.roof();
    const std::size_t n = 400000;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      TaskRng rng(8, i, Stream::uniform_cloud);
      hits += g.in_support(cat.sample_uniform(rng));
    }
    const double p = static_cast<double>(hits) / n, se = std::sqrt(exact * (1 - exact) / n);
    CHECK(std::abs(p - exact) <= 4 * se);
  }
}

TEST_CASE("perturbed map preconditions", "[perturbation]") {
  const CatSuspension cat;
  const auto chart = cat.make_chart(CatSuspension::default_q0(), 0.1);
  CHECK_THROWS_AS(PerturbedMap<CatSuspension>(cat, chart, params(0.05, 0.01, 0.1)), PreconditionError);
  CHECK_THROWS_AS(PerturbedMap<CatSuspension>(cat, chart, params(0.02, 0.01, 0.2)), PreconditionError);
  CHECK_NOTHROW(PerturbedMap<CatSuspension>(cat, chart, params(0.025, 0.01, 0.1)));
}

TEST_CASE("perturbed geodesic map", "[perturbation][geodesic]") {
  const GeodesicSurface geo;
  const auto chart = geo.make_chart(GeodesicSurface::default_q0(), 0.08);
  const PerturbedMap<GeodesicSurface> g(geo, chart, params(0.02, 0.9 / (4 * cert().C), 0.08));
  double worst = 0, frame = 0;
  for (int i = 0; i < 2000; ++i) {
    TaskRng rng(9, i, Stream::audit_points);
    const auto q = chart.from_chart(P3(rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04)));
    worst = std::max(worst, geo.distance(g.inverse(g.apply(q)), q));
    const auto m = g.frame_differential(q).matrix();
    frame = std::max({frame, std::abs(m(0, 1)), std::abs(m(0, 2)), std::abs(m(1, 2))});
  }
  CHECK(worst <= 1e-10);
  CHECK(frame <= 1e-12);
}
