#include <CLI11.hpp>
#include <iostream>

#include "phi42/app.hpp"

int main(int argc, char** argv) {
  phi42::CliConfig cli;
  std::string config, out = ".";
  std::uint64_t seed = 0;

  CLI::App app{"Stochastic quantization of the Phi^4_2 model on the torus", "phi42"};
  app.add_option("subcommand", cli.subcommand, "one of: simulate couple gibbs invariance ergodic propcheck")
      ->required();
  app.add_option("--config", config, "key=value configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides run.seed)");
  app.add_option("--out", out, "output directory");
  app.add_option("--set", cli.overrides, "KEY=VALUE override, repeatable")->allow_extra_args(false);
  app.set_version_flag("--version", phi42::kVersion);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  cli.config_path = config;
  cli.out_dir = out;
  if (*seed_opt) cli.seed = seed;
  return phi42::dispatch(cli);
}
