// hypexp: experiment runner for the perturbed time-1 maps.
//
// Subcommands: spectrum, central, perturb-audit, ugibbs, visits, basin, verify.
// A `--config` file is read first; flags override it. Outputs go to
// <stem>.csv / <stem>.summary.json / <stem>.manifest.json / <stem>.*.dat.
// Exit codes: 0 pass, 1 invariant failure, 2 usage error, 3 numeric error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hypexp/hypexp.hpp"

using namespace hypexp;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "hypexp 1.0.0";

struct InvariantFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string state_text(const CatPoint& p) { return fmt(p.x(0)) + ";" + fmt(p.x(1)) + ";" + fmt(p.s); }
std::string state_text(const GeoPoint& p) {
  return fmt(p.g(0, 0)) + ";" + fmt(p.g(0, 1)) + ";" + fmt(p.g(1, 0)) + ";" + fmt(p.g(1, 1));
}

json state_json(const CatPoint& p) { return json::array({p.x(0), p.x(1), p.s}); }
json state_json(const GeoPoint& p) { return json::array({p.g(0, 0), p.g(0, 1), p.g(1, 0), p.g(1, 1)}); }

// ---------------------------------------------------------------------------
// Output bookkeeping.

class Output {
 public:
  explicit Output(std::string out) {
    for (const char* ext : {".csv", ".json", ".dat"}) {
      const std::string e(ext);
      if (out.size() > e.size() && out.compare(out.size() - e.size(), e.size(), e) == 0) {
        out = out.substr(0, out.size() - e.size());
        break;
      }
    }
    stem_ = out;
  }

  std::string path(const std::string& suffix) const { return stem_ + suffix; }

  void write(const std::string& suffix, const std::string& content) {
    const std::string p = path(suffix);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write output file '" + p + "'");
    f << content;
    files_.push_back(p);
  }

  void write_json(const std::string& suffix, const json& j) { write(suffix, j.dump(2) + "\n"); }

  const std::vector<std::string>& files() const { return files_; }

 private:
  std::string stem_;
  std::vector<std::string> files_;
};

struct Derived {
  double C = 0, C2 = 0, s0 = 0, t = 0, gamma = 0;
};

json manifest(const std::string& sub, const ExperimentConfig& cfg, const Derived& d, double seconds,
              const std::vector<std::string>& files, const std::string& error) {
  json m;
  m["version"] = kVersion;
  m["subcommand"] = sub;
  m["config"] = cfg.to_text();
  m["derived"] = {{"C", d.C}, {"C2", d.C2}, {"s0", d.s0}, {"t", d.t}, {"gamma", d.gamma}};
  m["wall_clock_seconds"] = seconds;
  const std::time_t now = std::time(nullptr);
  char ts[32];
  std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  m["finished_utc"] = ts;
  m["files"] = files;
  m["error"] = error;
  return m;
}

// ---------------------------------------------------------------------------
// Model construction from the config.

CatPoint cat_q0(const ExperimentConfig& c) {
  if (c.q0_default) return CatSuspension::default_q0();
  return CatPoint{Eigen::Vector2d(fold_unit(c.q0[0]), fold_unit(c.q0[1])), c.q0[2]};
}

GeoPoint geo_from_kak(double theta, double rho, double psi) {
  return GeoPoint{geo::canonical_sign(geo::rotation(theta) * geo::diagonal(rho) * geo::rotation(psi))};
}

GeoPoint geo_q0(const ExperimentConfig& c) {
  if (c.q0_default) return GeodesicSurface::default_q0();
  return geo_from_kak(c.q0[0], c.q0[1], c.q0[2]);
}

CatChart make_chart(const CatSuspension& s, const ExperimentConfig& c) {
  CatSuspension::ChartOptions o;
  o.require_disjoint_return = c.strict_return;
  return s.make_chart(cat_q0(c), c.resolved_gamma(), o);
}

GeoChart make_chart(const GeodesicSurface& s, const ExperimentConfig& c) {
  return s.make_chart(geo_q0(c), c.resolved_gamma());
}

CatPoint start_point(const CatSuspension& s, const ExperimentConfig& c, std::size_t i) {
  TaskRng rng(c.seed, i, Stream::initial_points);
  switch (c.start_mode) {
    case ExperimentConfig::StartMode::fixed:
      return CatPoint{Eigen::Vector2d(fold_unit(c.start[0]), fold_unit(c.start[1])), c.start[2]};
    case ExperimentConfig::StartMode::fiber: {
      if (!(c.start[0] < s.roof())) throw ConfigError("start fiber coordinate must lie in [0, roof)");
      CatPoint p = s.sample_uniform(rng);
      p.s = c.start[0];
      return p;
    }
    default:
      return s.sample_uniform(rng);
  }
}

GeoPoint start_point(const GeodesicSurface& s, const ExperimentConfig& c, std::size_t i) {
  TaskRng rng(c.seed, i, Stream::initial_points);
  switch (c.start_mode) {
    case ExperimentConfig::StartMode::fixed:
      return s.reduce(geo_from_kak(c.start[0], c.start[1], c.start[2]));
    case ExperimentConfig::StartMode::fiber:
      throw ConfigError("start = fiber:<s> applies to the cat model only");
    default:
      return s.sample_uniform(rng);
  }
}

CatPoint disk_base(const CatSuspension& s, const ExperimentConfig& c) {
  if (c.disk_base_random) {
    TaskRng rng(c.seed, 0, Stream::uniform_cloud);
    return s.sample_uniform(rng);
  }
  return CatPoint{Eigen::Vector2d(fold_unit(c.disk_base[0]), fold_unit(c.disk_base[1])), c.disk_base[2]};
}

GeoPoint disk_base(const GeodesicSurface& s, const ExperimentConfig& c) {
  if (c.disk_base_random) {
    TaskRng rng(c.seed, 0, Stream::uniform_cloud);
    return s.sample_uniform(rng);
  }
  return s.reduce(geo_from_kak(c.disk_base[0], c.disk_base[1], c.disk_base[2]));
}

template <class S>
struct Model {
  S sys;
  typename S::Chart chart;
  PerturbedMap<S> g;
  Derived derived;
};

template <class S>
Model<S> build(const S& sys, const ExperimentConfig& cfg, double eps) {
  const auto cert = bump_certificate();
  Derived d;
  d.C = cert.C;
  d.C2 = cert.C2;
  d.s0 = cert.s0;
  d.gamma = cfg.resolved_gamma();
  ExperimentConfig c = cfg;
  c.eps = eps;
  d.t = cfg.perturbed ? c.resolved_t(cert.C) : 0.0;
  auto chart = make_chart(sys, cfg);
  PerturbationParams p;
  p.eps = eps;
  p.t = d.t;
  p.gamma = d.gamma;
  p.C = cert.C;
  return Model<S>{sys, chart, PerturbedMap<S>(sys, chart, p), d};
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns its exit code and fills `derived`.

template <class S>
int run_spectrum(const S& sys, const ExperimentConfig& cfg, Output& out, Derived& derived) {
  auto m = build(sys, cfg, cfg.eps);
  derived = m.derived;
  if (cfg.steps < 1000) throw PreconditionError("spectrum: steps must be >= 1000");
  const auto res = parallel_map(cfg.orbits, [&](std::size_t i) {
    const auto q = start_point(sys, cfg, i);
    return std::make_pair(q, qr_spectrum(m.g, q, cfg.steps, static_cast<int>(cfg.batches)));
  });
  std::string csv = "orbit_id,q0_coords,exponent_1,stderr_1,exponent_2,stderr_2,exponent_3,stderr_3\n";
  json orbits = json::array();
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto& [q, sp] = res[i];
    csv += std::to_string(i) + "," + state_text(q);
    for (std::size_t k = 0; k < sp.exponents.size(); ++k) csv += "," + fmt(sp.exponents[k]) + "," + fmt(sp.stderrs[k]);
    csv += "\n";
    orbits.push_back({{"orbit_id", i}, {"exponents", sp.exponents}, {"stderrs", sp.stderrs}});
  }
  out.write(".csv", csv);
  json s;
  s["subcommand"] = "spectrum";
  s["system"] = sys.name();
  s["perturbed"] = cfg.perturbed;
  s["steps"] = cfg.steps;
  s["orbits"] = orbits;
  out.write_json(".summary.json", s);
  return 0;
}

template <class S>
int run_central(const S& sys, const ExperimentConfig& cfg, Output& out, Derived& derived) {
  auto m = build(sys, cfg, cfg.eps);
  derived = m.derived;
  CentralOptions opt;
  opt.steps = cfg.steps;
  opt.settle = static_cast<int>(cfg.settle);
  opt.resettle = cfg.resettle;
  opt.batches = static_cast<int>(cfg.batches);
  opt.with_qr = true;
  auto run = [&](const PerturbedMap<S>& g) {
    return parallel_map(cfg.orbits, [&](std::size_t i) {
      const auto q = start_point(sys, cfg, i);
      return std::make_pair(q, central_exponent(g, q, opt));
    });
  };
  const auto res = run(m.g);

  std::string csv = "orbit_id,q0_coords,estimate,stderr,min_summand,visits_V,case_histogram\n";
  json orbits = json::array();
  CompensatedSum pooled, var, qr_mid, qr_var;
  double min_summand = INFINITY;
  std::size_t visits = 0;
  std::array<std::size_t, 5> cases{};
  Histogram xi(-0.1, 2.0, 84);
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto& [q, e] = res[i];
    std::string hist;
    for (int k = 0; k < 5; ++k) {
      hist += (k ? ";" : "") + std::string(ml_case_names[k]) + "=" + std::to_string(e.cases[k]);
      cases[k] += e.cases[k];
    }
    csv += std::to_string(i) + "," + state_text(q) + "," + fmt(e.estimate) + "," + fmt(e.standard_error) + "," +
           fmt(e.min_summand) + "," + std::to_string(e.visits) + "," + hist + "\n";
    pooled.add(e.estimate);
    var.add(e.standard_error * e.standard_error);
    qr_mid.add(e.qr.exponents[1]);
    qr_var.add(e.qr.stderrs[1] * e.qr.stderrs[1]);
    min_summand = std::min(min_summand, e.min_summand);
    visits += e.visits;
    for (std::size_t b = 0; b < xi.counts.size(); ++b) xi.counts[b] += e.xi_hist.counts[b];
    xi.underflow += e.xi_hist.underflow;
    xi.overflow += e.xi_hist.overflow;
    orbits.push_back({{"orbit_id", i},
                      {"estimate", e.estimate},
                      {"stderr", e.standard_error},
                      {"min_summand", e.min_summand},
                      {"max_summand", e.max_summand},
                      {"visits_V", e.visits},
                      {"qr_exponents", e.qr.exponents},
                      {"qr_stderrs", e.qr.stderrs},
                      {"min_xi_sigma_nonzero", std::isfinite(e.min_xi_sigma_nonzero) ? json(e.min_xi_sigma_nonzero) : json()}});
  }
  const double K = static_cast<double>(res.size());
  const double est = pooled.value() / K, se = std::sqrt(var.value()) / K;
  const double mid = qr_mid.value() / K, mid_se = std::sqrt(qr_var.value()) / K;
  out.write(".csv", csv);

  std::string dat = "# xi bin_center count (steps with nonzero tracked slope)\n";
  for (std::size_t b = 0; b < xi.counts.size(); ++b) dat += fmt(xi.bin_center(b)) + " " + std::to_string(xi.counts[b]) + "\n";
  out.write(".xi_hist.dat", dat);

  json s;
  s["subcommand"] = "central";
  s["system"] = sys.name();
  s["perturbed"] = cfg.perturbed;
  s["eps"] = cfg.eps;
  s["t"] = m.derived.t;
  s["steps"] = cfg.steps;
  s["pooled_estimate"] = est;
  s["pooled_stderr"] = se;
  s["qr_middle_exponent"] = mid;
  s["qr_middle_stderr"] = mid_se;
  s["min_summand"] = min_summand;
  s["summand_floor_ok"] = min_summand >= -1e-9;
  s["positive_3se"] = est > 3 * se;
  s["qr_agreement_3se"] = std::abs(est - mid) <= 3 * std::sqrt(se * se + mid_se * mid_se);
  s["visits_V"] = visits;
  json ch;
  for (int k = 0; k < 5; ++k) ch[ml_case_names[k]] = cases[k];
  s["case_histogram"] = ch;
  s["orbits"] = orbits;

  if (!cfg.eps_list.empty()) {
    std::string edat = "# eps pooled_estimate pooled_stderr\n";
    json sweep = json::array();
    for (double e : cfg.eps_list) {
      auto me = build(sys, cfg, e);
      const auto r = run(me.g);
      CompensatedSum a, v;
      for (const auto& [q, ce] : r) {
        a.add(ce.estimate);
        v.add(ce.standard_error * ce.standard_error);
      }
      const double pe = a.value() / K, ps = std::sqrt(v.value()) / K;
      edat += fmt(e) + " " + fmt(pe) + " " + fmt(ps) + "\n";
      sweep.push_back({{"eps", e}, {"t", me.derived.t}, {"estimate", pe}, {"stderr", ps}});
    }
    out.write(".eps.dat", edat);
    s["eps_sweep"] = sweep;
  }
  out.write_json(".summary.json", s);
  return 0;
}

template <class S>
int run_audit(const S& sys, const ExperimentConfig& cfg, Output& out, Derived& derived) {
  auto m = build(sys, cfg, cfg.eps);
  derived = m.derived;
  const auto& h = m.g.perturbation();
  const auto rep = closeness_audit(h, static_cast<int>(cfg.grid));
  // Round trip on random points of the support box.
  double round_trip = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    TaskRng rng(cfg.seed, i, Stream::audit_points);
    Coords<Dims3> p;
    for (int k = 0; k < 3; ++k) p(k) = rng.uniform(-2 * cfg.eps, 2 * cfg.eps);
    round_trip = std::max(round_trip, (h.invert(h.apply(p)) - p).cwiseAbs().maxCoeff());
  }
  json s;
  s["subcommand"] = "perturb-audit";
  s["system"] = sys.name();
  s["eps"] = rep.eps;
  s["t"] = rep.t;
  s["C"] = rep.C;
  s["C2"] = rep.C2;
  s["grid"] = rep.grid;
  s["fd_step1"] = rep.fd_step1;
  s["fd_step2"] = rep.fd_step2;
  s["c0"] = rep.c0;
  s["c1"] = rep.c1;
  s["c2"] = rep.c2;
  s["bound_c1"] = rep.bound_c1;
  s["bound_c2"] = rep.bound_c2;
  s["bound_c2_nominal"] = rep.bound_c2_nominal;
  s["pass_c1"] = rep.pass_c1;
  s["pass_c2"] = rep.pass_c2;
  s["pass_c2_nominal"] = rep.pass_c2_nominal;
  s["min_det"] = rep.min_det;
  s["det_floor"] = rep.det_floor;
  s["pass_det"] = rep.pass_det;
  s["round_trip_max_error"] = round_trip;
  s["pass_round_trip"] = round_trip <= 1e-12;
  const bool ok = rep.ok() && round_trip <= 1e-12;
  s["pass"] = ok;
  out.write_json(".summary.json", s);
  return ok ? 0 : 1;
}

template <class S>
Region<typename S::Point> make_region(const Model<S>& m, const ExperimentConfig& cfg) {
  using P = typename S::Point;
  const auto* g = &m.g;
  if (cfg.region == "V") return {"V", [g](const P& p) { return g->in_support(p); }};
  if (cfg.region == "U") return {"U", [g](const P& p) { return g->in_chart(p).has_value(); }};
  if (cfg.region == "all") return {"all", [](const P&) { return true; }};
  const auto box = cfg.region_box;
  return {cfg.region, [g, box](const P& p) {
            const auto c = g->in_chart(p);
            if (!c) return false;
            for (int i = 0; i < 3; ++i)
              if ((*c)(i) < box[2 * i] || (*c)(i) >= box[2 * i + 1]) return false;
            return true;
          }};
}

template <class S>
int run_visits(const S& sys, const ExperimentConfig& cfg, Output& out, Derived& derived) {
  auto m = build(sys, cfg, cfg.eps);
  derived = m.derived;
  const auto region = make_region(m, cfg);
  const bool want_two = cfg.region == "U";
  const auto res = parallel_map(cfg.orbits, [&](std::size_t i) {
    const auto q = start_point(sys, cfg, i);
    return std::make_pair(q, visit_frequency(m.g, q, cfg.steps, region, want_two, static_cast<int>(cfg.batches)));
  });
  std::string csv = "orbit_id,q0_coords,count,length,frequency,stderr,min_return\n";
  std::map<std::size_t, std::size_t> hist;
  json orbits = json::array();
  bool ok = true;
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto& [q, v] = res[i];
    csv += std::to_string(i) + "," + state_text(q) + "," + std::to_string(v.count) + "," + std::to_string(v.length) +
           "," + fmt(v.frequency) + "," + fmt(v.standard_error) + "," + std::to_string(v.min_return) + "\n";
    for (const auto& [rt, n] : v.return_times) hist[rt] += n;
    ok = ok && v.min_return_ok;
    orbits.push_back({{"orbit_id", i}, {"frequency", v.frequency}, {"stderr", v.standard_error},
                      {"min_return", v.min_return}, {"min_return_ok", v.min_return_ok}});
  }
  out.write(".csv", csv);
  std::string dat = "# return_time count\n";
  for (const auto& [rt, n] : hist) dat += std::to_string(rt) + " " + std::to_string(n) + "\n";
  out.write(".returns.dat", dat);
  json s;
  s["subcommand"] = "visits";
  s["system"] = sys.name();
  s["region"] = cfg.region;
  s["steps"] = cfg.steps;
  s["orbits"] = orbits;
  s["min_return_ok"] = ok;
  out.write_json(".summary.json", s);
  return ok ? 0 : 1;
}

template <class S>
int run_basin(const S& sys, const ExperimentConfig& cfg, Output& out, Derived& derived) {
  auto m = build(sys, cfg, cfg.eps);
  derived = m.derived;
  std::vector<std::pair<std::string, std::function<double(const typename S::Point&)>>> obs;
  for (const auto& name : cfg.observables) obs.emplace_back(name, named_observable(m.sys, name));
  std::vector<typename S::Point> starts;
  for (std::size_t i = 0; i < cfg.orbits; ++i) starts.push_back(start_point(sys, cfg, i));
  const auto rep = basin_agreement(m.g, obs, starts, cfg.steps, static_cast<int>(cfg.batches));
  std::string csv = "orbit_id,q0_coords";
  for (const auto& o : obs) csv += "," + o.first;
  csv += "\n";
  for (std::size_t i = 0; i < starts.size(); ++i) {
    csv += std::to_string(i) + "," + state_text(starts[i]);
    for (const auto& r : rep) csv += "," + fmt(r.averages[i]);
    csv += "\n";
  }
  out.write(".csv", csv);
  json s;
  s["subcommand"] = "basin";
  s["system"] = sys.name();
  s["perturbed"] = cfg.perturbed;
  s["steps"] = cfg.steps;
  json list = json::array();
  for (const auto& r : rep)
    list.push_back({{"observable", r.name}, {"dispersion", r.dispersion}, {"max_gap", r.max_gap},
                    {"mean_within_se", r.mean_within_se}, {"dispersion_within_3se", r.dispersion <= 3 * r.mean_within_se}});
  s["observables"] = list;
  out.write_json(".summary.json", s);
  return 0;
}

template <class S>
int run_ugibbs(const S& sys, const ExperimentConfig& cfg, Output& out, Derived& derived) {
  auto m = build(sys, cfg, cfg.eps);
  derived = m.derived;
  UnstableDisk<typename S::Point> disk{disk_base(sys, cfg), cfg.disk_len, cfg.samples};
  const auto mu = pushforward_measure(m.sys, m.g, disk, cfg.iters, cfg.seed);
  const auto mu2 = pushforward_measure(m.sys, m.g, disk, 2 * cfg.iters, cfg.seed);
  const auto ks = marginal_ks(m.sys, mu);
  const auto ks2 = marginal_ks(m.sys, mu2);
  std::string csv = "observable,integral,stderr\n";
  json ints = json::array();
  auto add = [&](const std::string& name, const Integral& in) {
    csv += name + "," + fmt(in.value) + "," + fmt(in.standard_error) + "\n";
    ints.push_back({{"observable", name}, {"integral", in.value}, {"stderr", in.standard_error}});
  };
  for (const char* name : {"one", "coord0", "coord1", "coord2", "cos_coord0", "cos_coord1", "cos_coord2"})
    add(name, integrate_with_error(mu, named_observable(m.sys, name)));
  add("indicator_V", integrate_with_error(mu, [&](const typename S::Point& p) { return m.g.in_support(p) ? 1.0 : 0.0; }));
  add("log_central_stretch", central_stretch_integral(m.sys, m.g, disk, cfg.iters, cfg.seed, static_cast<int>(cfg.settle)));
  out.write(".csv", csv);

  std::string dat = "# bin_center density_coord0 density_coord1 density_coord2\n";
  const int bins = 50;
  std::array<std::vector<double>, 3> h;
  for (auto& v : h) v.assign(bins, 0.0);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto c = m.sys.coordinates(mu.points[i]);
    for (int k = 0; k < 3; ++k) {
      const int b = std::clamp(static_cast<int>(c[k] * bins), 0, bins - 1);
      h[k][b] += mu.weights[i] * bins;
    }
  }
  for (int b = 0; b < bins; ++b) dat += fmt((b + 0.5) / bins) + " " + fmt(h[0][b]) + " " + fmt(h[1][b]) + " " + fmt(h[2][b]) + "\n";
  out.write(".marginals.dat", dat);

  json s;
  s["subcommand"] = "ugibbs";
  s["system"] = sys.name();
  s["perturbed"] = cfg.perturbed;
  s["disk_base"] = state_json(disk.base);
  s["disk_len"] = cfg.disk_len;
  s["samples"] = cfg.samples;
  s["iters"] = cfg.iters;
  s["total_weight"] = mu.total_weight();
  s["ks_marginals"] = ks;
  s["ks_marginals_2n"] = ks2;
  double stab = 0;
  for (int k = 0; k < 3; ++k) stab = std::max(stab, std::abs(ks[k] - ks2[k]));
  s["ks_stability"] = stab;
  s["integrals"] = ints;
  out.write_json(".summary.json", s);
  return 0;
}

// ---------------------------------------------------------------------------
// verify: invariant suites.

struct Check {
  std::string name;
  bool pass;
  json value;
};

void suite_bump(std::vector<Check>& out, json& extra) {
  const auto& b = default_bump();
  const auto c = bump_certificate(b);
  extra["bump"] = {{"C", c.C}, {"C2", c.C2}, {"s0", c.s0},
                   {"flags", {{"plateau", c.plateau}, {"support", c.support}, {"bounded", c.bounded},
                              {"symmetric", c.symmetric}, {"zeta_zero_count", c.zeta_zero_count}}}};
  out.push_back({"bump.certificate_flags", c.ok(), c.zeta_zero_count});
  const double closed = std::exp(-8.0) / b.normalization();
  out.push_back({"bump.C_closed_form", std::abs(c.C - closed) <= 1e-9 * closed, c.C});
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    TaskRng rng(7, i, Stream::audit_points);
    const double s = rng.uniform(-2.2, 2.2), h = 1e-5;
    worst = std::max(worst, std::abs(b.phi(s, 1) - (b.phi(s + h) - b.phi(s - h)) / (2 * h)));
  }
  out.push_back({"bump.derivative_vs_fd", worst <= 1e-6, worst});
}

void suite_splitting(std::vector<Check>& out) {
  Eigen::MatrixXd ae(1, 1), af(1, 1), l(1, 1);
  ae << 1;
  af << 2;
  l << 1;
  const auto gg = graph_gain(ae, af, l);
  out.push_back({"splitting.graph_gain_example", std::abs(gg.norm_g - std::sqrt(2.5)) < 1e-14, gg.norm_g});
  CatSuspension cat;
  GeodesicSurface geo;
  std::vector<DerivativeSample<Dims3>> cs, gs;
  CatPoint p = cat.default_q0();
  FrameMatrix<Dims3> acc;
  for (int n = 1; n <= 300; ++n) {
    acc = cat.frame_differential(p) * acc;
    p = cat.apply(p);
    cs.push_back({acc, n});
  }
  out.push_back({"splitting.cat_domination", check_domination<Dims3>(cat.rates(), cs).ok(), cs.size()});
  GeoPoint q = geo.default_q0();
  for (int n = 0; n < 200; ++n) {
    gs.push_back({geo.frame_differential(q), 1});
    q = geo.apply(q);
  }
  out.push_back({"splitting.geodesic_domination", check_domination<Dims3>(geo.rates(), gs).ok(), gs.size()});
  auto bad = FrameMatrix<Dims3>::block_diagonal(std::exp(-1.0), 1.5, std::exp(1.0));
  std::vector<DerivativeSample<Dims3>> corrupt{{bad, 1}};
  out.push_back({"splitting.corrupted_center_flagged", !check_domination<Dims3>(geo.rates(), corrupt).ok(), 1.5});
}

void suite_perturbation(std::vector<Check>& out, const ExperimentConfig& cfg) {
  CatSuspension cat;
  const auto chart = cat.make_chart(CatSuspension::default_q0(), 0.2);
  const auto cert = bump_certificate();
  PerturbationParams p;
  p.eps = 0.05;
  p.gamma = 0.2;
  p.C = cert.C;
  p.t = t_schedule(0.05, cert.C);
  PerturbedMap<CatSuspension> g(cat, chart, p);
  const auto rep = closeness_audit(g.perturbation(), static_cast<int>(cfg.grid));
  out.push_back({"perturbation.det_floor", rep.pass_det, rep.min_det});
  out.push_back({"perturbation.c1_bound", rep.pass_c1, rep.c1});
  p.t = 0.9 / (4 * cert.C);
  PerturbedMap<CatSuspension> g2(cat, chart, p);
  double rt = 0, frame = 0;
  for (int i = 0; i < 10000; ++i) {
    TaskRng rng(cfg.seed, i, Stream::audit_points);
    Coords<Dims3> c;
    for (int k = 0; k < 3; ++k) c(k) = rng.uniform(-0.1, 0.1);
    const auto& h = g2.perturbation();
    rt = std::max(rt, (h.invert(h.apply(c)) - c).cwiseAbs().maxCoeff());
    const auto dg = g2.frame_differential(chart.from_chart(c)).matrix();
    // E^u ↦ E^u and E^cu ↦ E^cu: stable row of the cu columns and the
    // stable/center rows of the unstable column vanish.
    frame = std::max({frame, std::abs(dg(0, 1)), std::abs(dg(0, 2)), std::abs(dg(1, 2))});
  }
  out.push_back({"perturbation.round_trip", rt <= 1e-12, rt});
  out.push_back({"perturbation.frame_preservation", frame <= 1e-12, frame});
}

void suite_systems(std::vector<Check>& out) {
  CatSuspension cat;
  double rt = 0;
  for (int i = 0; i < 10000; ++i) {
    TaskRng rng(3, i, Stream::audit_points);
    const auto q = cat.sample_uniform(rng);
    rt = std::max(rt, cat.distance(cat.inverse(cat.apply(q)), q));
  }
  out.push_back({"systems.cat_round_trip", rt <= 1e-12, rt});
  GeodesicSurface geo;
  out.push_back({"systems.geodesic_relation", geo.relation_residual() <= 1e-8, geo.relation_residual()});
  const auto sp = qr_spectrum(geo, geo.default_q0(), 100000);
  const double err = std::max({std::abs(sp.exponents[0] - 1), std::abs(sp.exponents[1]), std::abs(sp.exponents[2] + 1)});
  out.push_back({"systems.geodesic_spectrum", err <= 1e-3, err});
}

void suite_lyapunov(std::vector<Check>& out) {
  CatSuspension cat;
  const auto chart = cat.make_chart(CatSuspension::default_q0(), 0.2);
  const auto cert = bump_certificate();
  PerturbationParams p;
  p.eps = 0.05;
  p.gamma = 0.2;
  p.C = cert.C;
  p.t = 0.9 / (4 * cert.C);
  PerturbedMap<CatSuspension> g(cat, chart, p);
  TaskRng rng(11, 0, Stream::initial_points);
  const auto q = cat.sample_uniform(rng);
  const auto inv = tracker_invariance_audit(g, q, 20000, 80);
  out.push_back({"lyapunov.tracker_invariance", inv.max_angle <= 1e-8, inv.max_angle});
  p.t = 0;
  PerturbedMap<CatSuspension> f(cat, chart, p);
  CentralOptions o;
  o.steps = 100000;
  const auto e = central_exponent(f, q, o);
  out.push_back({"lyapunov.unperturbed_zero", e.estimate == 0.0 && e.min_summand == 0.0, e.estimate});
  const auto sa = slope_audit(g, q, 200);
  out.push_back({"lyapunov.slope_identity", sa.ok(), sa.max_identity_error});
}

void suite_gibbs(std::vector<Check>& out) {
  CatSuspension cat;
  TaskRng rng(5, 0, Stream::uniform_cloud);
  UnstableDisk<CatPoint> disk{cat.sample_uniform(rng), 0.01, 4096};
  const auto mu = pushforward_measure(cat, cat, disk, 200, 5);
  out.push_back({"gibbs.weights_sum_to_one", std::abs(mu.total_weight() - 1) <= 1e-12, mu.total_weight()});
  const auto ks = marginal_ks(cat, mu);
  const double worst = std::max({ks[0], ks[1], ks[2]});
  out.push_back({"gibbs.pushforward_ks", worst <= 0.02, worst});
  const auto chart = cat.make_chart(CatSuspension::default_q0(), 0.2);
  Region<CatPoint> in{"U", [&](const CatPoint& p) { return chart.to_chart(p).has_value(); }};
  Region<CatPoint> outside{"not U", [&](const CatPoint& p) { return !chart.to_chart(p).has_value(); }};
  const auto a = visit_frequency(cat, disk.base, 100000, in, true);
  const auto b = visit_frequency(cat, disk.base, 100000, outside);
  out.push_back({"gibbs.visit_additivity", a.frequency + b.frequency == 1.0, a.frequency + b.frequency});
  out.push_back({"gibbs.min_return_two", a.min_return_ok, a.min_return});
}

int run_verify(const ExperimentConfig& cfg, Output& out, Derived& derived) {
  const auto cert = bump_certificate();
  derived.C = cert.C;
  derived.C2 = cert.C2;
  derived.s0 = cert.s0;
  std::vector<Check> checks;
  json extra;
  const std::string s = cfg.suite;
  if (s == "all" || s == "bump") suite_bump(checks, extra);
  if (s == "all" || s == "splitting") suite_splitting(checks);
  if (s == "all" || s == "perturbation") suite_perturbation(checks, cfg);
  if (s == "all" || s == "systems") suite_systems(checks);
  if (s == "all" || s == "lyapunov") suite_lyapunov(checks);
  if (s == "all" || s == "gibbs") suite_gibbs(checks);
  bool ok = true;
  json list = json::array();
  for (const auto& c : checks) {
    ok = ok && c.pass;
    list.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}});
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "\n";
  }
  json j;
  j["subcommand"] = "verify";
  j["suite"] = s;
  if (extra.contains("bump")) {
    for (auto& [k, v] : extra["bump"].items()) j[k] = v;
  }
  j["checks"] = list;
  j["pass"] = ok;
  out.write_json(".summary.json", j);
  return ok ? 0 : 1;
}

template <class Fn>
int dispatch(const ExperimentConfig& cfg, Fn&& fn) {
  if (cfg.system == "cat") return fn(CatSuspension(cfg.roof));
  return fn(GeodesicSurface());
}

int run(const std::string& sub, const ExperimentConfig& cfg, Derived& derived, Output& out) {
  if (sub == "verify") return run_verify(cfg, out, derived);
  return dispatch(cfg, [&](const auto& sys) {
    if (sub == "spectrum") return run_spectrum(sys, cfg, out, derived);
    if (sub == "central") return run_central(sys, cfg, out, derived);
    if (sub == "perturb-audit") return run_audit(sys, cfg, out, derived);
    if (sub == "visits") return run_visits(sys, cfg, out, derived);
    if (sub == "basin") return run_basin(sys, cfg, out, derived);
    if (sub == "ugibbs") return run_ugibbs(sys, cfg, out, derived);
    throw ConfigError("unknown subcommand '" + sub + "'");
  });
}

std::string flag_name(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hypexp: central exponents of perturbed partially hyperbolic time-1 maps"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::map<std::string, std::string>> flags;
  const std::vector<std::pair<std::string, std::string>> subs{
      {"spectrum", "full Lyapunov spectrum by QR re-orthonormalization"},
      {"central", "central exponent along the tracked E^c_g"},
      {"perturb-audit", "closeness, determinant and inversion audit of h"},
      {"ugibbs", "unstable-disk pushforward cloud and integrals"},
      {"visits", "visit frequency and return times to a region"},
      {"basin", "dispersion of Birkhoff averages across initial points"},
      {"verify", "invariant suites; exit 0 iff all pass"},
  };
  for (const auto& [name, help] : subs) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("--config", config_path, "key = value config file (flags override it)");
    for (const auto& k : config_keys())
      sc->add_option(flag_name(k.name), flags[name][k.name], std::string(k.doc) + " [" + k.kind + "]");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::string sub;
  for (const auto* sc : app.get_subcommands()) sub = sc->get_name();

  ExperimentConfig cfg;
  Derived derived;
  const auto t0 = std::chrono::steady_clock::now();
  int rc = 0;
  std::string error;
  try {
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    auto* sc = app.get_subcommand(sub);
    for (const auto& k : config_keys()) {
      const auto* opt = sc->get_option(flag_name(k.name));
      if (opt->count() > 0) cfg.set(k.name, flags[sub][k.name], "flag " + flag_name(k.name));
    }
  } catch (const std::exception& e) {
    std::cerr << "hypexp: " << e.what() << "\n";
    return 2;
  }

  Output out(cfg.out);
  try {
    rc = run(sub, cfg, derived, out);
  } catch (const ConfigError& e) {
    error = std::string("usage: ") + e.what();
    rc = 2;
  } catch (const PreconditionError& e) {
    error = std::string("precondition: ") + e.what();
    rc = 2;
  } catch (const NumericError& e) {
    error = std::string("numeric: ") + e.what();
    rc = 3;
  } catch (const std::exception& e) {
    error = std::string("numeric: ") + e.what();
    rc = 3;
  }
  if (!error.empty()) std::cerr << "hypexp: " << error << "\n";
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    auto files = out.files();
    files.push_back(out.path(".manifest.json"));
    Output mo(cfg.out);
    mo.write_json(".manifest.json", manifest(sub, cfg, derived, secs, files, error));
  } catch (const std::exception& e) {
    std::cerr << "hypexp: cannot write manifest: " << e.what() << "\n";
    if (rc == 0) rc = 2;
  }
  return rc;
}
