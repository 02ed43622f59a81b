// cwe: energies, identity battery and first variation from a JSON run config.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cwe/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Conformal Willmore-type energies of immersed 4-manifolds"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<int> resolution;
  std::optional<std::uint64_t> seed;
  bool flip = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides output.dir)");
    sub->add_option("--threads", threads, "worker threads, 0 = all cores");
    sub->add_option("--resolution", resolution, "quadrature resolution override");
    sub->add_option("--seed", seed, "seed for random node subsets and random fields");
    sub->add_flag("--flip-schouten", flip, "negate the ambient Schouten tensor (mutation check)");
  };
  auto* energy = app.add_subcommand("energy", "integrate the energies and identity residuals");
  auto* verify = app.add_subcommand("verify", "run the identity battery");
  auto* variation = app.add_subcommand("variation", "first variation along perturbation fields");
  for (auto* s : {energy, verify, variation}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cwe::exit_ok : cwe::exit_config;
  }

  cwe::CliOverrides o;
  o.out_dir = out;
  o.threads = threads;
  o.resolution = resolution;
  o.seed = seed;
  o.flip_schouten = flip;
  const std::string command = app.get_subcommands().front()->get_name();
  return cwe::run_command(command, config, o, std::cout, std::cerr);
}
