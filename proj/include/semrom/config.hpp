#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semrom/error.hpp"

namespace semrom {

/// Bad configuration. `field` is the dotted path of the offending entry
/// ("rom.tol"); empty for syntax errors, which carry a line number instead.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what, int line = 0);
  const std::string& field() const noexcept { return field_; }
  int line() const noexcept { return line_; }

 private:
  std::string field_;
  int line_;
};

struct ProblemConfig {
  std::string mesh = "expansion";  ///< "channel", "expansion" or "file"
  std::string mesh_file;
  std::vector<int> cells;          ///< channel: nx ny; expansion: inlet main per_third
  int order = 6;
  double inflow_peak = 0.0;        ///< 0 selects the preset (1 channel, 3 expansion)
  /// Dirichlet velocity per boundary label as two expressions in x, y.
  std::map<std::string, std::vector<std::string>> dirichlet;
};

struct ParameterConfig {
  std::vector<double> values;  ///< explicit list, or filled from the range
  double lower = 0.0, upper = 0.0;
  int count = 0;
  std::string spacing = "log";  ///< "log" or "linear"
  /// Values in descending order (the continuation order).
  std::vector<double> descending() const;
};

struct FomConfig {
  double tol = 1e-4;
  int max_iter = 100;
};

struct RomConfig {
  std::vector<double> thresholds = {0.99, 0.9999};
  std::vector<int> basis_sizes;  ///< empty: 0..rank
  double tol = 1e-4;
  int max_iter = 100;
  std::string inner_product = "euclidean";
  std::string singular_policy = "report";
  std::string validation = "snapshots";  ///< "snapshots" or "none"
  std::string snapshots;  ///< archive path; empty: <output>/snapshots.bin
};

struct AffineConfig {
  std::vector<std::string> thetas;
  std::vector<std::string> sources;
  bool enabled() const { return !thetas.empty(); }
};

struct PsoConfig {
  int swarm = 40;
  double inertia = 0.729;
  double cognitive = 1.494;
  double social = 1.494;
  int iterations = 200;
  std::vector<double> lower, upper;
};

struct StabConfig {
  int modes = 8;
  double margin = 0.0;
  bool search_imaginary = false;
  std::optional<double> c1;
  std::string weight = "identity";  ///< "identity" or "lyapunov"
  std::string trajectory;  ///< archive path; empty: <output>/trajectory.bin
  PsoConfig pso;
};

struct DgConfig {
  int cells = 8;
  int order = 6;
  double speed = 1.0;
  double diffusivity = 0.0;
  std::string flux = "upwind";
  std::string initial = "sin(2*pi*x)";
  double t_final = 1.0;
  int snapshots = 60;  ///< stored states, the initial one included
  double dt = 0.0;     ///< 0: CFL step adjusted to land on the snapshot times
};

struct RunConfig {
  ProblemConfig problem;
  ParameterConfig parameters;
  FomConfig fom;
  RomConfig rom;
  AffineConfig affine;
  StabConfig stab;
  DgConfig dgmini;
  std::string output = "out";
  bool output_given = false;  ///< "output" appeared in the file
  std::uint64_t seed = 42;
  int threads = 1;
  std::string source_dir;  ///< relative paths resolve against this
};

/// JSON sections. Every malformed or unknown field raises ConfigError naming it.
RunConfig parse_config(const std::string& text, const std::string& source_dir = ".");
RunConfig load_config(const std::string& path);

}  // namespace semrom
