#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "semrom/expression.hpp"
#include "semrom/oseen.hpp"
#include "semrom/pod.hpp"

namespace semrom {

struct AffineTerm {
  std::string name;
  Expression theta;
  SparseMatrix matrix;
};

/// A(mu) = sum_i theta_i(mu) A_i with a parameter-independent right-hand side.
class AffineOperator {
 public:
  AffineOperator() = default;
  AffineOperator(std::vector<AffineTerm> terms, Eigen::VectorXd rhs);

  const std::vector<AffineTerm>& terms() const { return terms_; }
  const Eigen::VectorXd& rhs() const { return rhs_; }
  int term_count() const { return static_cast<int>(terms_.size()); }
  int size() const { return terms_.empty() ? 0 : static_cast<int>(terms_[0].matrix.rows()); }
  /// Number of parameter components the expressions need (at least 1).
  int parameter_count() const;

  std::vector<double> coefficients(std::span<const double> mu) const;
  SparseMatrix evaluate(std::span<const double> mu) const;

 private:
  std::vector<AffineTerm> terms_;
  Eigen::VectorXd rhs_;
};

/// Two-term split of the Stokes operator in local stacked numbering:
/// theta = nu on the viscous blocks, theta = 1 on the divergence couplings.
AffineOperator affine_decompose_viscosity(const FlowProblem& problem,
                                          const VectorFunction& body_force = {});

struct AffineSpec {
  std::vector<std::string> thetas;   ///< expression strings
  std::vector<std::string> sources;  ///< matrix sources, one per expression
};

/// Turns a matrix source string into a matrix.
using MatrixResolver = std::function<SparseMatrix(const std::string& source)>;

/// Throws ParseError for bad expressions and StructuralError when counts or
/// sizes disagree. An empty rhs means zero.
AffineOperator affine_decompose_user(const AffineSpec& spec, const MatrixResolver& resolve,
                                     Eigen::VectorXd rhs = {});

/// Named local-level flow matrices ("viscous", "divergence", "velocity_mass"),
/// falling back to Matrix Market files for "file:<path>".
MatrixResolver flow_matrix_resolver(const FlowProblem& problem);
/// Named scalar forms (see ScalarForm), falling back to "file:<path>".
MatrixResolver scalar_matrix_resolver(const Discretization& disc);

SparseMatrix read_matrix_market(const std::string& path);

struct ParameterDomain {
  std::vector<double> lower, upper;
  bool contains(std::span<const double> mu) const;
};

struct OfflineOptions {
  const FlowProblem* flow = nullptr;        ///< enables advection and the velocity norm
  const SnapshotSet* snapshots = nullptr;   ///< warm-start coordinates and domain
  ParameterDomain domain;                   ///< overrides the snapshot range if set
};

/// Everything the online stage needs; no member is touched online except
/// the N-sized ones.
struct ReducedModel {
  std::vector<Expression> thetas;
  std::vector<Eigen::MatrixXd> reduced_affine;   ///< V^T A_i V
  std::vector<Eigen::VectorXd> affine_on_lift;   ///< V^T A_i x_L
  Eigen::VectorXd reduced_rhs;                   ///< V^T b

  bool has_advection = false;
  std::vector<Eigen::MatrixXd> advection;  ///< V^T N(phi_j) V, one per mode
  Eigen::MatrixXd advection_lift;          ///< V^T N(x_L) V
  Eigen::MatrixXd advection_mode_on_lift;  ///< column j: V^T N(phi_j) x_L
  Eigen::VectorXd advection_lift_on_lift;  ///< V^T N(x_L) x_L

  /// Norm used for the change criterion: |x_L + V a|^2 = c + 2 g.a + a.G a.
  Eigen::MatrixXd gram;
  Eigen::VectorXd gram_lift;
  double lift_norm2 = 0.0;

  std::vector<std::vector<double>> snapshot_parameters;
  Eigen::MatrixXd snapshot_coordinates;  ///< N x (snapshots)
  ParameterDomain domain;

  std::shared_ptr<const PodBasis> basis;  ///< full basis the model was built from
  Eigen::VectorXd lifting;
  std::uint64_t basis_checksum = 0;

  int size() const { return static_cast<int>(reduced_rhs.size()); }
  int term_count() const { return static_cast<int>(reduced_affine.size()); }
  /// Leading n x n blocks; no full-order work.
  ReducedModel truncated(int n) const;
  /// lifting + V_n a, the only full-size operation.
  Eigen::VectorXd lift(const Eigen::VectorXd& coordinates) const;
};

ReducedModel offline_build(const AffineOperator& affine, const PodBasis& basis,
                           const Eigen::VectorXd& lifting, const OfflineOptions& options = {});

/// What online_solve does with a singular reduced matrix.
enum class SingularPolicy {
  report,        ///< throw SolverError (default)
  minimum_norm,  ///< opt-in: minimum-norm correction of the current iterate
};

SingularPolicy singular_policy_from_string(const std::string& name);

struct OnlineResult {
  Eigen::VectorXd coordinates;
  int iterations = 0;
  bool converged = false;
  int rank_deficiency = 0;  ///< largest null-space dimension met (minimum_norm only)
  double linear_residual = 0.0;  ///< normwise backward error of the last dense solve
  std::vector<double> history;
};

/// Reduced Oseen iteration. `initial` empty selects the stored snapshot
/// coordinates nearest to mu. Throws ConvergenceError, SolverError (singular
/// reduced matrix) or InvalidArgument (mu outside the domain).
OnlineResult online_solve(const ReducedModel& model, std::span<const double> mu, double tol,
                          int max_iter, const Eigen::VectorXd* initial = nullptr,
                          SingularPolicy policy = SingularPolicy::report);

/// Reduced matrix and right-hand side at coordinates `a`.
void reduced_system(const ReducedModel& model, std::span<const double> mu,
                    const Eigen::VectorXd& a, Eigen::MatrixXd& matrix, Eigen::VectorXd& rhs);

struct ErrorRow {
  int n = 0;
  double mean_error = 0.0;
  double max_error = 0.0;
  double online_seconds = 0.0;
  int failures = 0;  ///< solves that failed (counted as infinite error)
  int rank_deficient = 0;  ///< solves that needed the minimum-norm fallback
  std::vector<double> errors;
};

/// Truncates the model to each size, solves at every validation nu and
/// compares velocities against the full-order solutions.
std::vector<ErrorRow> error_sweep(const ReducedModel& model, const FlowProblem& problem,
                                  const std::vector<SteadySolution>& validation,
                                  const std::vector<int>& basis_sizes, double tol,
                                  int max_iter,
                                  SingularPolicy policy = SingularPolicy::report);

}  // namespace semrom
