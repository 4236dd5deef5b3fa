#pragma once

// Flat key=value run configuration. Every key has a default; files and
// command-line overrides may only set known keys. The resolved map is echoed
// verbatim (sorted, one key per line) and hashed, so a run can be repeated
// from its echo alone.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "phi42/dynamics.hpp"
#include "phi42/gibbs.hpp"
#include "phi42/harness.hpp"

namespace phi42 {

inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> d = {
      {"grid.cutoff_n", "8"},
      {"grid.side_points", "0"},  // 0: dealiased 4N+2
      {"gibbs.a1", "1"},
      {"gibbs.a2", "0"},
      {"gibbs.warmup", "5000"},
      {"gibbs.burn_in", "10000"},
      {"gibbs.thin", "500"},
      {"gibbs.samples", "1000"},
      {"gibbs.target_acceptance", "0.25"},
      {"gibbs.step_size", "0.5"},
      {"sim.dt", "0.001"},
      {"sim.horizon", "1"},
      {"sim.record_stride", "10"},
      {"sim.noise", "true"},
      {"sim.delta", "0.02"},
      {"sim.zero_init", "false"},
      {"besov.alpha", "-0.05"},
      {"besov.p", "inf"},
      {"besov.q", "inf"},
      {"coupling.lambda", "20"},
      {"coupling.R", "1e6"},
      {"coupling.K", "0"},  // 0: quantile of the ensemble's thresholds
      {"coupling.K_quantile", "0.6"},
      {"coupling.gamma", "4"},
      {"coupling.p0", "42"},
      {"coupling.smooth_data", "false"},
      {"coupling.fit_start", "1"},
      {"harness.ensemble", "50"},
      {"harness.threads", "0"},
      {"harness.observables", "wick2;lp:2;mode:1,0;mode:1,1;mode:2,1"},
      {"harness.burn_in", "10"},
      {"harness.batches", "20"},
      {"harness.level", "0.01"},
      {"harness.refine", "true"},
      {"harness.trials", "1000"},
      {"run.seed", "1"},
  };
  return d;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

class RunConfig {
 public:
  RunConfig() : values_(config_defaults()) {}

  /// Reads key=value lines; '#' starts a comment.
  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingConfig, "cannot read config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  static RunConfig parse(const std::string& text, const std::string& origin = "<string>") {
    RunConfig cfg;
    std::istringstream lines(text);
    std::string line;
    int number = 0;
    while (std::getline(lines, line)) {
      ++number;
      const std::string body = trim(line.substr(0, line.find('#')));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      const std::string where = origin + ":" + std::to_string(number);
      if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, where + ": expected key=value");
      cfg.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)), ErrorCode::InvalidArgument);
    }
    cfg.validate(ErrorCode::InvalidArgument);
    return cfg;
  }

  /// Applies "key=value" overrides, then revalidates; failures are InvalidOverride.
  void apply_overrides(const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::InvalidOverride, "expected key=value, got '" + o + "'");
      set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)), ErrorCode::InvalidOverride);
    }
    validate(ErrorCode::InvalidOverride);
  }

  void set(const std::string& key, const std::string& value, ErrorCode code = ErrorCode::InvalidArgument) {
    if (!values_.count(key)) throw Error(code, "unknown key '" + key + "'");
    values_[key] = value;
  }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorCode::InvalidArgument, "unknown key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const std::string& v = raw(key);
    try {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used == v.size()) return x;
    } catch (const std::logic_error&) {
    }
    throw Error(ErrorCode::InvalidArgument, key + ": not a number '" + v + "'");
  }

  long long integer(const std::string& key) const {
    const std::string& v = raw(key);
    long long x = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size())
      throw Error(ErrorCode::InvalidArgument, key + ": not an integer '" + v + "'");
    return x;
  }

  std::uint64_t unsigned64(const std::string& key) const {
    const std::string& v = raw(key);
    std::uint64_t x = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size())
      throw Error(ErrorCode::InvalidArgument, key + ": not an unsigned integer '" + v + "'");
    return x;
  }

  bool boolean(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error(ErrorCode::InvalidArgument, key + ": not a boolean '" + v + "'");
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(raw(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(trim(item)));
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::InvalidArgument, key + ": bad list item '" + item + "'");
      }
    }
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, key + ": empty list");
    return out;
  }

  std::uint64_t seed() const { return unsigned64("run.seed"); }

  GridSpec grid() const {
    const int n = static_cast<int>(integer("grid.cutoff_n"));
    const int side = static_cast<int>(integer("grid.side_points"));
    return side == 0 ? dealiased_grid(n) : make_grid(n, side);
  }

  SimConfig sim() const {
    SimConfig s;
    s.a1 = real("gibbs.a1");
    s.a2 = real("gibbs.a2");
    s.grid = grid();
    s.dt = real("sim.dt");
    s.horizon = real("sim.horizon");
    s.record_stride = static_cast<int>(integer("sim.record_stride"));
    s.besov = {real("besov.alpha"), real("besov.p"), real("besov.q")};
    s.delta = real("sim.delta");
    s.noise = boolean("sim.noise");
    s.validate();
    return s;
  }

  ChainSchedule chain() const {
    ChainSchedule c{integer("gibbs.warmup"), integer("gibbs.burn_in"), integer("gibbs.thin"),
                    real("gibbs.target_acceptance")};
    if (c.warmup < 0 || c.burn_in < 0 || c.thin < 1)
      throw Error(ErrorCode::InvalidArgument, "gibbs schedule needs warmup, burn_in >= 0 and thin >= 1");
    if (!(c.target_acceptance > 0.0 && c.target_acceptance < 1.0))
      throw Error(ErrorCode::InvalidArgument, "gibbs.target_acceptance must be in (0, 1)");
    return c;
  }

  double step_size() const {
    const double s = real("gibbs.step_size");
    if (!(s > 0.0 && s < 1.0)) throw Error(ErrorCode::InvalidArgument, "gibbs.step_size must be in (0, 1)");
    return s;
  }

  std::vector<ObservableSpec> observables() const { return parse_observables(raw("harness.observables")); }

  int threads() const { return static_cast<int>(integer("harness.threads")); }

  int ensemble() const {
    const long long e = integer("harness.ensemble");
    if (e < 1) throw Error(ErrorCode::InvalidArgument, "harness.ensemble must be positive");
    return static_cast<int>(e);
  }

  CouplingParams coupling() const {
    CouplingParams p;
    p.sim = sim();
    p.lambdas = reals("coupling.lambda");
    p.R = real("coupling.R");
    p.K = real("coupling.K");
    p.K_quantile = real("coupling.K_quantile");
    p.gamma = real("coupling.gamma");
    p.ensemble = ensemble();
    p.p0 = real("coupling.p0");
    p.smooth_data = boolean("coupling.smooth_data");
    p.fit_start = real("coupling.fit_start");
    p.threads = threads();
    if (!(p.R > 0.0)) throw Error(ErrorCode::InvalidArgument, "coupling.R must be positive");
    if (!(p.gamma >= 1.0)) throw Error(ErrorCode::InvalidArgument, "coupling.gamma must be >= 1");
    if (!(p.K_quantile > 0.0 && p.K_quantile <= 1.0))
      throw Error(ErrorCode::InvalidArgument, "coupling.K_quantile must be in (0, 1]");
    if (!(p.p0 >= 1.0)) throw Error(ErrorCode::InvalidArgument, "coupling.p0 must be >= 1");
    return p;
  }

  int trials() const {
    const long long t = integer("harness.trials");
    if (t < 2) throw Error(ErrorCode::InvalidArgument, "harness.trials must be >= 2");
    return static_cast<int>(t);
  }

  /// Resolves every section so that a bad value fails before any computation.
  void validate(ErrorCode code) const {
    try {
      sim();
      chain();
      step_size();
      const GridSpec g = grid();
      for (const auto& o : observables())
        if (std::max(std::abs(o.k1), std::abs(o.k2)) > g.cutoff_n)
          throw Error(ErrorCode::InvalidArgument, "observable " + o.name + " is off the grid");
      coupling();
      trials();
      seed();
      if (integer("gibbs.samples") < 1) throw Error(ErrorCode::InvalidArgument, "gibbs.samples must be positive");
      if (!(real("harness.burn_in") >= 0.0)) throw Error(ErrorCode::InvalidArgument, "harness.burn_in must be >= 0");
      if (integer("harness.batches") < 2) throw Error(ErrorCode::InvalidArgument, "harness.batches must be >= 2");
      const double level = real("harness.level");
      if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "harness.level must be in (0, 1)");
      boolean("harness.refine");
      boolean("sim.zero_init");
    } catch (const Error& e) {
      if (e.code() == code) throw;
      throw Error(code, e.what());
    }
  }

  /// Canonical text: every key, sorted.
  std::string echo() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  std::string hash() const { return hex64(fnv1a(echo())); }

  Json to_json() const {
    Json j = Json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace phi42
