#pragma once

#include <iosfwd>
#include <memory>
#include <string>

#include "semrom/config.hpp"
#include "semrom/oseen.hpp"

namespace semrom {

/// Flow problem described by the problem section: mesh preset or file,
/// velocity order, inflow profile and the Dirichlet data per label.
std::unique_ptr<FlowProblem> make_flow_problem(const ProblemConfig& problem);

/// Where a command writes. Timing measurements go to timings_<verb>.json;
/// every other output is a pure function of the config and seed.
struct CommandContext {
  RunConfig config;
  std::ostream* log = nullptr;  ///< progress lines; null silences them
  bool verbose = false;

  std::string path(const std::string& name) const;
};

/// Each returns the process exit code.
int cmd_fom(const CommandContext& ctx);
int cmd_rom(const CommandContext& ctx);
int cmd_dgmini(const CommandContext& ctx);
int cmd_stab(const CommandContext& ctx);
/// Summary of every archive and report in the output directory, to `out`
/// and to summary.txt.
int cmd_report(const CommandContext& ctx, std::ostream& out);

}  // namespace semrom
