#pragma once

// Line-based `key = value` experiment configuration with `#` comments.
// Every key has a default; values are validated on entry and kept in
// canonical text form so the manifest can echo them verbatim.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hypexp/errors.hpp"

namespace hypexp {

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size() && std::isfinite(out);
}

inline bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) return false;
  try {
    out = std::stoull(s);
  } catch (...) {
    return false;
  }
  return true;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

inline bool parse_reals(const std::string& s, std::vector<double>& out) {
  out.clear();
  for (const auto& part : split(s, ',')) {
    double v;
    if (!parse_real(part, v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

}  // namespace config_detail

struct KeySpec {
  const char* name;
  const char* default_value;
  const char* kind;  // used in messages
  const char* doc;
};

inline const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys{
      {"system", "cat", "cat|geodesic", "dynamical model"},
      {"roof", "sqrt2", "sqrt2|<positive real>", "cat suspension roof height"},
      {"q0", "default", "default|<3 reals>", "chart center: cat x0,x1,s; geodesic KAK angles theta,rho,psi"},
      {"return_check", "strict", "strict|waive", "require f(U) and U disjoint (waive for rational-roof controls)"},
      {"gamma", "auto", "auto|<positive real>", "chart half-width (auto: 0.2 cat, 0.08 geodesic)"},
      {"eps", "0.05", "<real in (0,1/4)>", "support scale"},
      {"t", "auto", "auto|<real>|<k>/4C", "kick strength; auto = min(eps^3, 1/(4C))"},
      {"perturbed", "true", "true|false", "use g = f o H (true) or f (false)"},
      {"steps", "1000000", "<integer >= 1>", "orbit length N"},
      {"settle", "80", "<integer >= 1>", "pull-back length for the central direction"},
      {"resettle", "10000", "<integer >= 1>", "chunk length between fresh pull-backs"},
      {"orbits", "1", "<integer >= 1>", "number of initial conditions K"},
      {"batches", "100", "<integer >= 2>", "batch count for standard errors"},
      {"seed", "1", "<unsigned 64-bit integer>", "master seed"},
      {"start", "random", "random|fiber:<s>|<3 reals>", "initial conditions"},
      {"out", "hypexp_out", "<path stem>", "output path stem"},
      {"disk_base", "random", "random|<3 reals>", "unstable disk center"},
      {"disk_len", "0.01", "<positive real>", "unstable disk half-length"},
      {"samples", "4096", "<integer >= 1>", "disk sample count m"},
      {"iters", "200", "<integer >= 1>", "pushforward iterations n"},
      {"region", "V", "V|U|all|box:<6 reals>", "visit region (box in chart coordinates: lo,hi per axis)"},
      {"grid", "64", "<integer >= 2>", "audit grid points per axis"},
      {"suite", "all", "all|bump|splitting|perturbation|systems|lyapunov|gibbs", "verify suite"},
      {"observables", "coord0,coord1,coord2,cos_coord0", "<comma list>", "basin observables"},
      {"eps_list", "", "<comma list of reals>", "extra central runs for the exponent-vs-eps plot"},
  };
  return keys;
}

class ExperimentConfig {
 public:
  ExperimentConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
    for (const auto& k : config_keys()) apply(k.name, k.default_value, "default");
  }

  /// `where` names the source for error messages ("line 4", "flag --eps").
  void set(const std::string& key, const std::string& raw, const std::string& where) {
    if (!is_key(key)) throw ConfigError(where + ": unknown key '" + key + "'; valid keys: " + valid_keys());
    apply(key, config_detail::trim(raw), where);
  }

  const std::string& text(const std::string& key) const { return values_.at(key); }

  /// Canonical echo: one `key = value` line per key, in table order.
  std::string to_text() const {
    std::string out;
    for (const auto& k : config_keys()) out += std::string(k.name) + " = " + values_.at(k.name) + "\n";
    return out;
  }

  static bool is_key(const std::string& k) {
    const auto& ks = config_keys();
    return std::any_of(ks.begin(), ks.end(), [&](const KeySpec& s) { return k == s.name; });
  }

  static std::string valid_keys() {
    std::string out;
    for (const auto& k : config_keys()) out += (out.empty() ? "" : ", ") + std::string(k.name);
    return out;
  }

  // Typed views.
  std::string system = "cat";
  double roof = std::sqrt(2.0);
  bool q0_default = true;
  std::vector<double> q0;
  bool strict_return = true;
  double gamma = 0;  // 0 = auto
  double eps = 0.05;
  enum class TMode { automatic, value, fraction } t_mode = TMode::automatic;
  double t_value = 0;  // value, or k in k/(4C)
  bool perturbed = true;
  std::uint64_t steps = 1000000, settle = 80, resettle = 10000, orbits = 1, batches = 100, seed = 1;
  enum class StartMode { random, fiber, fixed } start_mode = StartMode::random;
  std::vector<double> start;
  std::string out = "hypexp_out";
  bool disk_base_random = true;
  std::vector<double> disk_base;
  double disk_len = 0.01;
  std::uint64_t samples = 4096, iters = 200, grid = 64;
  std::string region = "V";
  std::vector<double> region_box;
  std::string suite = "all";
  std::vector<std::string> observables;
  std::vector<double> eps_list;

  double resolved_gamma() const { return gamma > 0 ? gamma : (system == "cat" ? 0.2 : 0.08); }

  /// t for bump constant C; rejects values outside [0, 1/(4C)).
  double resolved_t(double C) const {
    double t;
    switch (t_mode) {
      case TMode::automatic: t = std::min(eps * eps * eps, std::nextafter(1.0 / (4.0 * C), 0.0)); break;
      case TMode::fraction: t = t_value / (4.0 * C); break;
      default: t = t_value;
    }
    if (!(t >= 0 && t < 1.0 / (4.0 * C)))
      throw ConfigError("t = " + values_.at("t") + " resolves outside [0, 1/(4C)) with C = " + std::to_string(C));
    return t;
  }

 private:
  [[noreturn]] static void bad(const std::string& where, const std::string& key, const std::string& v,
                               const char* kind) {
    throw ConfigError(where + ": invalid value '" + v + "' for key '" + key + "' (expected " + kind + ")");
  }

  static const KeySpec& spec(const std::string& key) {
    for (const auto& k : config_keys())
      if (key == k.name) return k;
    throw ConfigError("unknown key '" + key + "'");
  }

  void apply(const std::string& key, const std::string& v, const std::string& where) {
    using namespace config_detail;
    const char* kind = spec(key).kind;
    auto real = [&](double lo_excl, double hi_excl) {
      double x;
      if (!parse_real(v, x) || !(x > lo_excl && x < hi_excl)) bad(where, key, v, kind);
      return x;
    };
    auto u64 = [&](std::uint64_t min) {
      std::uint64_t x;
      if (!parse_u64(v, x) || x < min) bad(where, key, v, kind);
      return x;
    };
    auto three = [&](std::vector<double>& dst) {
      if (!parse_reals(v, dst) || dst.size() != 3) bad(where, key, v, kind);
    };
    const double inf = INFINITY;

    if (key == "system") {
      if (v != "cat" && v != "geodesic") bad(where, key, v, kind);
      system = v;
    } else if (key == "roof") {
      roof = v == "sqrt2" ? std::sqrt(2.0) : real(0, inf);
    } else if (key == "q0") {
      q0_default = v == "default";
      if (!q0_default) three(q0);
    } else if (key == "return_check") {
      if (v != "strict" && v != "waive") bad(where, key, v, kind);
      strict_return = v == "strict";
    } else if (key == "gamma") {
      gamma = v == "auto" ? 0.0 : real(0, inf);
    } else if (key == "eps") {
      eps = real(0, 0.25);
    } else if (key == "t") {
      if (v == "auto") {
        t_mode = TMode::automatic;
      } else if (v.size() > 3 && v.substr(v.size() - 3) == "/4C") {
        double k;
        if (!parse_real(v.substr(0, v.size() - 3), k) || k < 0 || k >= 1) bad(where, key, v, kind);
        t_mode = TMode::fraction;
        t_value = k;
      } else {
        t_mode = TMode::value;
        t_value = real(-1e-300, inf);
      }
    } else if (key == "perturbed") {
      if (v != "true" && v != "false") bad(where, key, v, kind);
      perturbed = v == "true";
    } else if (key == "steps") {
      steps = u64(1);
    } else if (key == "settle") {
      settle = u64(1);
    } else if (key == "resettle") {
      resettle = u64(1);
    } else if (key == "orbits") {
      orbits = u64(1);
    } else if (key == "batches") {
      batches = u64(2);
    } else if (key == "seed") {
      seed = u64(0);
    } else if (key == "start") {
      if (v == "random") {
        start_mode = StartMode::random;
      } else if (v.rfind("fiber:", 0) == 0) {
        double s;
        if (!parse_real(v.substr(6), s) || s < 0) bad(where, key, v, kind);
        start_mode = StartMode::fiber;
        start = {s};
      } else {
        start_mode = StartMode::fixed;
        three(start);
      }
    } else if (key == "out") {
      if (v.empty()) bad(where, key, v, kind);
      out = v;
    } else if (key == "disk_base") {
      disk_base_random = v == "random";
      if (!disk_base_random) three(disk_base);
    } else if (key == "disk_len") {
      disk_len = real(0, inf);
    } else if (key == "samples") {
      samples = u64(1);
    } else if (key == "iters") {
      iters = u64(1);
    } else if (key == "region") {
      if (v == "V" || v == "U" || v == "all") {
        region_box.clear();
      } else if (v.rfind("box:", 0) == 0) {
        if (!parse_reals(v.substr(4), region_box) || region_box.size() != 6) bad(where, key, v, kind);
        for (int i = 0; i < 3; ++i)
          if (!(region_box[2 * i] < region_box[2 * i + 1])) bad(where, key, v, kind);
      } else {
        bad(where, key, v, kind);
      }
      region = v;
    } else if (key == "grid") {
      grid = u64(2);
    } else if (key == "suite") {
      static const std::vector<std::string> ok{"all", "bump", "splitting", "perturbation", "systems", "lyapunov",
                                               "gibbs"};
      if (std::find(ok.begin(), ok.end(), v) == ok.end()) bad(where, key, v, kind);
      suite = v;
    } else if (key == "observables") {
      observables = split(v, ',');
      if (observables.empty() || std::any_of(observables.begin(), observables.end(),
                                             [](const std::string& s) { return s.empty(); }))
        bad(where, key, v, kind);
    } else if (key == "eps_list") {
      eps_list.clear();
      if (!v.empty()) {
        if (!parse_reals(v, eps_list)) bad(where, key, v, kind);
        for (double e : eps_list)
          if (!(e > 0 && e < 0.25)) bad(where, key, v, kind);
      }
    }
    values_[key] = v;
  }

  std::map<std::string, std::string> values_;
};

/// Parses config text. Blank lines and `#` comments are ignored.
inline ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = ExperimentConfig{}) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    base.set(config_detail::trim(line.substr(0, eq)), line.substr(eq + 1), where);
  }
  return base;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace hypexp
