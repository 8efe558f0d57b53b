#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hypexp/hypexp.hpp"

using namespace hypexp;
using Catch::Approx;

namespace {

PerturbedMap<CatSuspension> cat_g(double frac) {
  const CatSuspension cat;
  PerturbationParams p;
  p.eps = 0.05;
  p.gamma = 0.2;
  p.C = bump_certificate().C;
  p.t = frac / (4 * p.C);
  return PerturbedMap<CatSuspension>(cat, cat.make_chart(CatSuspension::default_q0(), 0.2), p);
}

CatPoint start(std::uint64_t seed, std::uint64_t task = 0) {
  TaskRng rng(seed, task, Stream::initial_points);
  return CatSuspension().sample_uniform(rng);
}

}  // namespace

TEST_CASE("counter-based streams are reproducible and distinct", "[gibbs][rng]") {
  TaskRng a(1, 2, Stream::initial_points), b(1, 2, Stream::initial_points), c(1, 3, Stream::initial_points),
      d(1, 2, Stream::disk_jitter);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    REQUIRE(x == b.next());
    CHECK(x != c.next());
    CHECK(x != d.next());
  }
  TaskRng u(9, 9, Stream::uniform_cloud);
  for (int i = 0; i < 10000; ++i) {
    const double v = u.uniform();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("parallel map keeps index order and propagates errors", "[gibbs][parallel]") {
  for (int workers : {1, 3, 8}) {
    const auto r = parallel_map(1000, [](std::size_t i) { return i * i; }, workers);
    for (std::size_t i = 0; i < r.size(); ++i) REQUIRE(r[i] == i * i);
  }
  CHECK_THROWS_AS(parallel_map(
                      100,
                      [](std::size_t i) {
                        if (i == 37) throw NumericError("boom");
                        return 1;
                      },
                      4),
                  NumericError);
}

TEST_CASE("statistics helpers", "[gibbs][stats]") {
  CompensatedSum s;
  s.add(1e16);
  for (int i = 0; i < 10; ++i) s.add(1.0);
  s.add(-1e16);
  CHECK(s.value() == 10.0);

  BatchMeans bm(1000, 10);
  for (int i = 0; i < 1000; ++i) bm.add(i / 100);  // batch j holds the value j
  CHECK(bm.mean() == Approx(4.5));
  const auto means = bm.batch_means();
  REQUIRE(means.size() == 10);
  CHECK(means[3] == 3.0);
  // SE = sd(0..9)/√10.
  CHECK(bm.standard_error() == Approx(std::sqrt(55.0 / 6.0) / std::sqrt(10.0)));

  std::vector<double> grid;
  for (int i = 0; i < 100; ++i) grid.push_back((i + 0.5) / 100);
  CHECK(ks_uniform(grid) == Approx(0.005));
  std::vector<double> w(100, 0.0);
  w[0] = 1.0;  // all mass at 0.005
  CHECK(ks_uniform(grid, w) == Approx(0.995));
}

TEST_CASE("disk parameters are stratified", "[gibbs]") {
  const auto tau = disk_parameters(0.01, 64, 3);
  REQUIRE(tau.size() == 64);
  for (std::size_t i = 0; i < tau.size(); ++i) {
    CHECK(tau[i] >= -0.01 + 0.02 * i / 64 - 1e-15);
    CHECK(tau[i] < -0.01 + 0.02 * (i + 1) / 64 + 1e-15);
  }
  CHECK(disk_parameters(0.01, 64, 3) == tau);
  CHECK(disk_parameters(0.01, 64, 4) != tau);
}

TEST_CASE("pushforward cloud for the cat map", "[gibbs]") {
  const CatSuspension cat;
  UnstableDisk<CatPoint> disk{start(5), 0.01, 2048};
  // The fiber marginal is an irrational rotation orbit of length n, whose
  // discrepancy falls like log(n)/n; at n = 100 it is still near 0.03.
  const auto mu = pushforward_measure(cat, cat, disk, 200, 5);
  CHECK(mu.size() == 2048 * 200);
  CHECK(mu.total_weight() == Approx(1.0).epsilon(1e-13));
  const auto ks = marginal_ks(cat, mu);
  for (double k : ks) CHECK(k <= 0.02);
  CHECK(integrate(mu, named_observable(cat, "one")) == Approx(1.0).epsilon(1e-13));
  const auto c0 = integrate_with_error(mu, named_observable(cat, "coord0"));
  CHECK(std::abs(c0.value - 0.5) <= 4 * c0.standard_error + 1e-3);
  CHECK_THROWS_AS(integrate(mu, [](const CatPoint&) { return std::nan(""); }), NumericError);
  CHECK_THROWS_AS(named_observable(cat, "nope"), ConfigError);
}

TEST_CASE("pushforward is independent of the worker count", "[gibbs]") {
  const CatSuspension cat;
  const auto g = cat_g(0.9);
  UnstableDisk<CatPoint> disk{start(6), 0.01, 256};
  // parallel_map reads the worker count per call, so the environment decides.
  setenv("HYPEXP_THREADS", "1", 1);
  const auto a = pushforward_measure(cat, g, disk, 50, 6);
  setenv("HYPEXP_THREADS", "7", 1);
  const auto b = pushforward_measure(cat, g, disk, 50, 6);
  unsetenv("HYPEXP_THREADS");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.points[i].x == b.points[i].x);
    REQUIRE(a.points[i].s == b.points[i].s);
    REQUIRE(a.weights[i] == b.weights[i]);
  }
}

TEST_CASE("central stretch integral", "[gibbs]") {
  const CatSuspension cat;
  UnstableDisk<CatPoint> disk{start(7), 0.01, 64};
  const auto f = cat_g(0.0);
  const auto zero = central_stretch_integral(cat, f, disk, 500, 7);
  CHECK(zero.value == 0.0);
  CHECK(zero.standard_error == 0.0);
  const auto g = cat_g(0.9);
  const auto in = central_stretch_integral(cat, g, disk, 5000, 7);
  CHECK(in.groups == 64);
  CHECK(std::isfinite(in.value));
  CHECK(std::abs(in.value) <= 1e-3);
}

TEST_CASE("visit frequency to the chart domain", "[gibbs]") {
  const CatSuspension cat;
  const auto g = cat_g(0.9);
  Region<CatPoint> u{"U", [&](const CatPoint& p) { return g.in_chart(p).has_value(); }};
  const auto v = visit_frequency(g, start(8), 400000, u, true);
  const double exact = std::pow(0.4, 3) / cat.roof();
  CHECK(std::abs(v.frequency - exact) <= 4 * v.standard_error);
  CHECK(v.min_return >= 2);
  CHECK(v.min_return_ok);
  std::size_t returns = 0;
  for (const auto& [rt, n] : v.return_times) returns += n;
  CHECK(returns + 1 == v.count);
  Region<CatPoint> none{"empty", [](const CatPoint&) { return false; }};
  CHECK(visit_frequency(g, start(8), 1000, none).count == 0);
}

TEST_CASE("forward and backward averages agree", "[gibbs]") {
  const auto g = cat_g(0.9);
  const CatSuspension cat;
  const auto fb = forward_backward_average(g, named_observable(cat, "cos_coord0"), start(9), 200000);
  CHECK(fb.gap <= 4 * std::hypot(fb.forward_se, fb.backward_se));
  CHECK_THROWS_AS(forward_backward_average(g, named_observable(cat, "one"), start(9), 10), PreconditionError);
}

TEST_CASE("basin agreement across initial points", "[gibbs]") {
  const auto g = cat_g(0.9);
  const CatSuspension cat;
  std::vector<CatPoint> starts;
  for (int i = 0; i < 8; ++i) starts.push_back(start(10, i));
  std::vector<std::pair<std::string, std::function<double(const CatPoint&)>>> obs{
      {"coord2", named_observable(cat, "coord2")}, {"sin_coord1", named_observable(cat, "sin_coord1")}};
  const auto rep = basin_agreement(g, obs, starts, 100000);
  REQUIRE(rep.size() == 2);
  for (const auto& r : rep) {
    CHECK(r.averages.size() == 8);
    CHECK(r.dispersion <= 4 * r.mean_within_se);
  }
  CHECK(rep[0].averages[0] == Approx(0.5).margin(0.02));
  CHECK_THROWS_AS(basin_agreement(g, obs, {starts[0]}, 1000), PreconditionError);
}

TEST_CASE("mostly expanding diagnostic", "[gibbs]") {
  // Unperturbed: ‖Df⁻¹|E^cu‖ = 1 at every step (neutral center).
  const auto f = cat_g(0.0);
  const auto d = mostly_expanding_diagnostic(f, start(11), 10000);
  CHECK(d.estimate == 0.0);
  CHECK(d.c0 == 0.0);
  const GeodesicSurface geo;
  TaskRng rng(11, 1, Stream::initial_points);
  const auto e = mostly_expanding_diagnostic(geo, geo.sample_uniform(rng), 2000);
  CHECK(e.estimate == Approx(0.0).margin(1e-15));
}

TEST_CASE("single-orbit empirical measure", "[gibbs]") {
  const CatSuspension cat;
  const auto mu = orbit_measure(cat, start(12), 1000);
  CHECK(mu.size() == 1000);
  CHECK(mu.total_weight() == Approx(1.0).epsilon(1e-14));
}
