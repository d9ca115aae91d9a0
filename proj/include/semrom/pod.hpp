#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "semrom/oseen.hpp"

namespace semrom {

/// Lifted snapshot columns in the local stacked numbering (v_bnd, p, v_int).
struct SnapshotSet {
  std::vector<double> parameters;  ///< one per column, in input order
  Eigen::MatrixXd states;          ///< lifted columns
  Eigen::VectorXd lifting;         ///< subtracted from every column
  int lifting_column = -1;         ///< source of the lifting (-1: external)
  std::uint64_t signature = 0;     ///< discretization signature (0: unknown)

  int size() const { return static_cast<int>(states.cols()); }
  int dimension() const { return static_cast<int>(states.rows()); }
};

/// Snapshot set from full-order solutions. Columns follow the input order;
/// the solution with the largest nu is the lifting.
SnapshotSet build_snapshot_set(const FlowProblem& problem,
                               const std::vector<SteadySolution>& solutions);

/// Generic variant: `columns` are raw states, `lifting` is subtracted from each.
SnapshotSet build_snapshot_set(std::vector<double> parameters, const Eigen::MatrixXd& columns,
                               const Eigen::VectorXd& lifting);

enum class InnerProduct {
  euclidean,  ///< plain coefficient inner product
  mass,       ///< diagonal quadrature mass on each coefficient
};

struct PodOptions {
  InnerProduct inner_product = InnerProduct::euclidean;
  Eigen::VectorXd weights;  ///< diagonal weights for InnerProduct::mass
};

struct PodBasis {
  Eigen::MatrixXd modes_local;     ///< N_delta x N, orthonormal in the chosen inner product
  Eigen::MatrixXd modes_physical;  ///< (u_x, u_y, p) at quadrature points; empty if not built
  Eigen::VectorXd singular_values; ///< all of them, descending
  double energy_threshold = 1.0;
  InnerProduct inner_product = InnerProduct::euclidean;
  Eigen::VectorXd weights;         ///< empty for euclidean

  int size() const { return static_cast<int>(modes_local.cols()); }
  int dimension() const { return static_cast<int>(modes_local.rows()); }
  /// The leading `n` modes.
  PodBasis truncated(int n) const;
  /// Content checksum of the local modes.
  std::uint64_t checksum() const;
};

/// Smallest N whose cumulative squared singular values reach `threshold` of the total.
int energy_count(const Eigen::VectorXd& singular_values, double threshold);

PodBasis pod(const SnapshotSet& snapshots, double threshold, const PodOptions& options = {});

/// Same, and also evaluates the modes at quadrature points.
PodBasis pod(const FlowProblem& problem, const SnapshotSet& snapshots, double threshold,
             const PodOptions& options = {});

/// Mass weights for PodOptions from the flow problem.
PodOptions mass_weighted(const FlowProblem& problem);

/// Stacked local vector -> (u_x, u_y, p) at quadrature points.
Eigen::VectorXd stacked_to_physical(const FlowProblem& problem, const Eigen::VectorXd& local);

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& full);
Eigen::VectorXd lift(const PodBasis& basis, const Eigen::VectorXd& reduced,
                     const Eigen::VectorXd& lifting);

/// FNV-1a over the raw bytes of a matrix.
std::uint64_t matrix_checksum(const Eigen::MatrixXd& m, std::uint64_t seed = 0);

}  // namespace semrom
