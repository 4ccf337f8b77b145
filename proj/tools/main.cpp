// sepdiff: exact and simulated self-diffusion of a tagged particle in the
// simple exclusion process on a finite torus.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sepdiff/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Tagged-particle self-diffusion in the simple exclusion process"};
  app.set_version_flag("--version", SEPDIFF_VERSION);
  app.require_subcommand(1);

  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  int threads = 1;

  const char* commands[][2] = {
      {"exact", "finite-volume diffusion matrix by exact linear solves"},
      {"sweep", "diffusion matrix along a sequence of tori at fixed density"},
      {"mc", "Monte Carlo estimate of drift and diffusion at T and 2T"},
      {"diagnostics", "variational inequalities, gap, sector constant, multiscale checks"},
      {"arbitrate-sign", "pick the correction sign that matches simulation"},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c[0], c[1]);
    sub->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "override the master seed");
    sub->add_option("--threads", threads, "worker threads")->capture_default_str()->check(CLI::Range(1, 1024));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : sepdiff::kExitValidation;
  }

  const CLI::App* sub = app.get_subcommands().front();
  sepdiff::CommandContext ctx;
  ctx.out_dir = out;
  ctx.threads = threads;
  if (sub->count("--seed") > 0) ctx.seed_override = seed;
  return sepdiff::run_command(sub->get_name(), config, ctx, std::cerr);
}
