#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace semrom {

/// Binary archive: a magic line, one line of JSON header, then every matrix
/// as little-endian float64 in column-major order.
///
///     SEMROM-ARCHIVE 1
///     {"kind": ..., "signature": ..., "matrices": [{"name", "rows", "cols", "checksum"}], ...}
///     <payload>
struct Archive {
  std::string kind;                 ///< "snapshots", "basis", "model", "trajectory"
  std::uint64_t signature = 0;      ///< grid signature of the producing discretization
  std::string level;                ///< "system", "local", "modal", "reduced"
  std::vector<std::string> layout;  ///< component layout of the rows
  std::string axis;                 ///< "nu" or "time"
  std::vector<double> axis_values;  ///< parameter values or time grid, one per column
  nlohmann::json attributes = nlohmann::json::object();
  std::vector<std::pair<std::string, Eigen::MatrixXd>> matrices;

  void add(std::string name, Eigen::MatrixXd m) { matrices.emplace_back(std::move(name), std::move(m)); }
  bool has(const std::string& name) const;
  /// Throws StructuralError naming the missing matrix.
  const Eigen::MatrixXd& matrix(const std::string& name) const;
};

/// Atomic: writes a temporary file next to `path`, then renames it.
void write_archive(const std::string& path, const Archive& archive);

/// Verifies magic, header, byte length and every matrix checksum.
Archive read_archive(const std::string& path);

/// Writes text atomically (temp file then rename).
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace semrom
