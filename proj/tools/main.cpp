#include "elastodyn/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <utility>

int main(int argc, char** argv) {
  using namespace elastodyn;
  CLI::App app{"Damped nonlinear elastodynamics: backward Euler / Galerkin solver and diagnostics"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  const std::pair<const char*, const char*> commands[] = {
      {"solve", "run one simulation and check energy estimates"},
      {"converge-time", "temporal convergence study over a tau ladder"},
      {"converge-space", "spatial convergence study over FEM meshes"},
      {"verify-orlicz", "Young, Luxemburg, Hoelder and norm-modular checks"},
      {"verify-nfun", "sampled N-function, delta2 and growth diagnostics"},
      {"probe-unique", "perturbed-guess probe of the one-step solution"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides [output] dir)");
    sub->add_option("--seed", seed, "seed for all random sampling (overrides seed)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_code::ok : exit_code::config_error;
  }
  const auto command = parse_command(app.get_subcommands().front()->get_name());
  std::optional<std::filesystem::path> out_dir;
  if (out) out_dir = *out;
  return run_cli(*command, config, out_dir, seed, std::cout, std::cerr);
}
