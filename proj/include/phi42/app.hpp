#pragma once

// Subcommand dispatch shared by the command-line tool and the tests.
// Each run writes into out_dir only: config.cfg (the resolved echo),
// <subcommand>.csv and <subcommand>.json.

#include <array>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "phi42/config.hpp"
#include "phi42/harness.hpp"

namespace phi42 {

inline constexpr std::array<const char*, 6> kSubcommands = {"simulate", "couple",    "gibbs",
                                                            "invariance", "ergodic", "propcheck"};

struct CliConfig {
  std::string subcommand;
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = ".";
  std::vector<std::string> overrides;
};

inline bool is_subcommand(const std::string& s) {
  for (const char* c : kSubcommands)
    if (s == c) return true;
  return false;
}

inline std::string usage() {
  std::string u = "usage: phi42 <subcommand> --config PATH [--seed U64] [--out DIR] [--set KEY=VALUE ...]\n"
                  "subcommands:";
  for (const char* c : kSubcommands) u += std::string(" ") + c;
  return u + "\n";
}

/// 0 on success; otherwise 10 + the error kind.
inline int exit_code(ErrorCode code) { return 10 + static_cast<int>(code); }

struct Outcome {
  RecordTable table;
  Json summary;
};

inline Outcome run_subcommand(const std::string& sub, const RunConfig& cfg) {
  const RngStream rng(cfg.seed(), 0);
  if (sub == "simulate") {
    SimulateParams p{cfg.sim(), cfg.ensemble(), cfg.boolean("sim.zero_init"), cfg.observables(), cfg.threads()};
    auto r = run_simulation(p, rng);
    return {std::move(r.table), std::move(r.summary)};
  }
  if (sub == "couple") {
    auto r = run_coupling_experiment(cfg.coupling(), rng);
    return {std::move(r.table), std::move(r.summary)};
  }
  if (sub == "gibbs") {
    const SimConfig s = cfg.sim();
    GibbsParams p{s.grid, s.a1, s.a2, cfg.chain(), cfg.step_size(), cfg.integer("gibbs.samples"), cfg.observables()};
    auto r = run_gibbs(p, rng);
    return {std::move(r.table), std::move(r.summary)};
  }
  if (sub == "invariance") {
    InvarianceParams p;
    p.sim = cfg.sim();
    p.horizon = p.sim.horizon;
    p.schedule = cfg.chain();
    p.ensemble = cfg.ensemble();
    p.observables = cfg.observables();
    p.level = cfg.real("harness.level");
    p.refine = cfg.boolean("harness.refine");
    p.threads = cfg.threads();
    auto r = run_invariance_test(p, rng);
    return {std::move(r.table), std::move(r.summary)};
  }
  if (sub == "ergodic") {
    ErgodicParams p;
    p.sim = cfg.sim();
    p.burn_in = cfg.real("harness.burn_in");
    p.batches = static_cast<int>(cfg.integer("harness.batches"));
    p.observables = cfg.observables();
    p.schedule = cfg.chain();
    p.gibbs_samples = cfg.integer("gibbs.samples");
    p.threads = cfg.threads();
    // Zero field and one mu-draw.
    RngStream init_rng = rng.split(1000);
    const std::vector<FourierField> inits = {FourierField(p.sim.grid), sample_gff(p.sim.grid, init_rng)};
    auto r = run_ergodic_average(p, inits, rng);
    return {std::move(r.table), std::move(r.summary)};
  }
  if (sub == "propcheck") {
    VerifierConfig v;
    v.grid = cfg.grid();
    v.alpha = cfg.real("besov.alpha");
    v.delta = cfg.real("sim.delta");
    auto r = run_property_suite(cfg.trials(), rng, v);
    return {std::move(r.table), std::move(r.summary)};
  }
  throw Error(ErrorCode::UnknownSubcommand, "unknown subcommand '" + sub + "'");
}

/// Resolves the configuration, echoes it into out_dir, runs, and writes the records.
inline void run_cli(const CliConfig& cli) {
  if (!is_subcommand(cli.subcommand))
    throw Error(ErrorCode::UnknownSubcommand, "unknown subcommand '" + cli.subcommand + "'");
  if (cli.config_path.empty()) throw Error(ErrorCode::MissingConfig, "--config is required");
  RunConfig cfg = RunConfig::load(cli.config_path);
  std::vector<std::string> overrides = cli.overrides;
  if (cli.seed) overrides.push_back("run.seed=" + std::to_string(*cli.seed));
  cfg.apply_overrides(overrides);

  std::error_code ec;
  std::filesystem::create_directories(cli.out_dir, ec);
  if (ec || !std::filesystem::is_directory(cli.out_dir))
    throw Error(ErrorCode::UnwritableOutput, "cannot create '" + cli.out_dir.string() + "'");
  {
    std::ofstream echo(cli.out_dir / "config.cfg", std::ios::binary);
    echo << cfg.echo();
    if (!echo) throw Error(ErrorCode::UnwritableOutput, "cannot write config echo");
  }

  Outcome out = run_subcommand(cli.subcommand, cfg);
  const RunInfo info{cfg.hash(), cfg.seed()};
  write_csv(cli.out_dir / (cli.subcommand + ".csv"), out.table, info);
  Json summary = {{"subcommand", cli.subcommand}, {"version", kVersion},   {"config_hash", info.config_hash},
                  {"seed", info.seed},            {"config", cfg.to_json()}, {"result", std::move(out.summary)}};
  write_json(cli.out_dir / (cli.subcommand + ".json"), summary);
}

/// run_cli with errors mapped to exit codes and reported on `err`.
inline int dispatch(const CliConfig& cli, std::ostream& err = std::cerr) {
  try {
    run_cli(cli);
    return 0;
  } catch (const Error& e) {
    err << "phi42: " << e.what() << '\n';
    if (e.code() == ErrorCode::UnknownSubcommand) err << usage();
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "phi42: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace phi42
