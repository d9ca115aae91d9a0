#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace semrom {

struct PsoOptions {
  int swarm = 40;
  double inertia = 0.729;
  double cognitive = 1.494;
  double social = 1.494;
  int iterations = 200;
  std::uint64_t seed = 42;
  std::vector<double> lower, upper;  ///< search box, one entry per coordinate
  int threads = 1;                   ///< objective evaluations in parallel
};

struct PsoResult {
  std::vector<double> best;
  double best_value = 0.0;
  std::vector<double> trace;  ///< best value after the initial swarm and each iteration
  long evaluations = 0;
};

/// Must be safe to call concurrently when threads > 1. NaN counts as +inf.
using PsoObjective = std::function<double(std::span<const double>)>;

/// Global-best particle swarm. Random draws happen in a fixed order on the
/// calling thread and the best is reduced in particle order, so results do
/// not depend on the thread count.
PsoResult pso_minimize(const PsoOptions& options, const PsoObjective& objective);

}  // namespace semrom
