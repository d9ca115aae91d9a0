// semrom: full-order sweeps, reduced models and ROM stabilization from a JSON config.

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

#include "semrom/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory (overrides the config and SEMROM_OUT)");
  cmd->add_option("--seed", f.seed, "random seed (overrides the config)");
  cmd->add_option("--threads", f.threads, "worker threads for PSO evaluations")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--verbose,-v", f.verbose, "per-step progress");
}

semrom::CommandContext context(const Flags& f, const CLI::App* cmd) {
  semrom::CommandContext ctx;
  ctx.config = f.config.empty() ? semrom::parse_config("{}") : semrom::load_config(f.config);
  // --out, then "output" in the file, then SEMROM_OUT, then ./out.
  if (!f.out.empty()) {
    ctx.config.output = f.out;
  } else if (const char* root = std::getenv("SEMROM_OUT"); root && *root && !ctx.config.output_given) {
    ctx.config.output = root;
  }
  if (cmd->count("--seed")) ctx.config.seed = f.seed;
  if (f.threads > 0) ctx.config.threads = f.threads;
  ctx.log = &std::cerr;
  ctx.verbose = f.verbose;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral element flow solver with reduced-order models"};
  app.require_subcommand(1);

  Flags flags;
  auto* fom = app.add_subcommand("fom", "full-order viscosity sweep -> snapshots.bin");
  auto* rom = app.add_subcommand("rom", "POD, reduced model and error table");
  auto* dg = app.add_subcommand("dgmini", "1D DG advection trajectory -> trajectory.bin");
  auto* stab = app.add_subcommand("stab", "eigenvalue-replacement stabilization report");
  auto* report = app.add_subcommand("report", "summarize an output directory");
  for (auto* cmd : {fom, rom, dg, stab, report}) add_common(cmd, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto* cmd : {fom, rom, dg, stab, report}) {
      if (!cmd->parsed()) continue;
      const semrom::CommandContext ctx = context(flags, cmd);
      if (cmd == fom) return semrom::cmd_fom(ctx);
      if (cmd == rom) return semrom::cmd_rom(ctx);
      if (cmd == dg) return semrom::cmd_dgmini(ctx);
      if (cmd == stab) return semrom::cmd_stab(ctx);
      return semrom::cmd_report(ctx, std::cout);
    }
  } catch (const semrom::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
