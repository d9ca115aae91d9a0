#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "semrom/discretization.hpp"

namespace semrom {

using SparseMatrix = Eigen::SparseMatrix<double>;
using VectorFunction = std::function<Eigen::Vector2d(double x, double y)>;

/// Re = U L / nu. All arguments must be positive.
double reynolds(double velocity, double length, double viscosity);

struct FlowParameters {
  double nu = 1.0;
  double velocity_scale = 1.0;  ///< U
  double length_scale = 1.0;    ///< L
  VectorFunction body_force;    ///< empty means f = 0

  double reynolds() const { return semrom::reynolds(velocity_scale, length_scale, nu); }
  void validate() const;
};

/// Boundary data keyed by mesh edge label. Dirichlet data is the velocity
/// trace; Neumann data is the traction nu du/dn - p n (zero when a Neumann
/// label has no entry: the do-nothing outflow).
struct BoundaryConditions {
  std::map<std::string, VectorFunction> dirichlet;
  std::map<std::string, VectorFunction> neumann;
  std::optional<FieldState> initial_guess;  ///< global velocity field

  /// Checks every tagged edge has data matching its kind.
  void validate(const Mesh& mesh) const;
};

/// Index bookkeeping for the coupled velocity/pressure unknowns.
///
/// The global (system) vector is ordered (v_bnd, p, v_int): velocity unknowns
/// on element boundaries (both components), all pressure unknowns, then
/// element-interior velocity unknowns. The local (stacked) vector uses the
/// same three groups with per-element copies.
class SystemLayout {
 public:
  explicit SystemLayout(const Discretization& disc);

  int size() const { return size_; }
  int local_size() const { return local_size_; }
  int num_velocity_boundary() const { return 2 * nvb_; }
  int num_pressure() const { return np_; }
  int num_velocity_interior() const { return 2 * nvi_; }

  int velocity_index(int component, int node) const {
    return node < nvb_ ? component * nvb_ + node
                       : 2 * nvb_ + np_ + component * nvi_ + (node - nvb_);
  }
  int pressure_index(int node) const { return 2 * nvb_ + node; }
  int local_velocity_index(int component, int element, int node) const {
    return local_velocity_[(component * ne_ + element) * npe_ + node];
  }
  int local_pressure_index(int element, int node) const {
    return local_velocity_bnd_total_ + element * npp_ + node;
  }

  /// System vector -> local stacked vector (duplicates shared values).
  Eigen::VectorXd scatter(const Eigen::VectorXd& system) const;
  /// Local stacked vector -> system vector.
  Eigen::VectorXd gather(const Eigen::VectorXd& local, GatherMode mode) const;
  /// Scatter as a sparse (local x system) matrix.
  const SparseMatrix& scatter_matrix() const { return scatter_; }

  FieldState velocity(const Eigen::VectorXd& system) const;        ///< global, 2 comps
  FieldState pressure(const Eigen::VectorXd& system) const;        ///< global, scalar
  FieldState local_velocity(const Eigen::VectorXd& local) const;   ///< local, 2 comps
  FieldState local_pressure(const Eigen::VectorXd& local) const;   ///< local, scalar
  Eigen::VectorXd compose(const FieldState& velocity, const FieldState& pressure) const;

  /// Zero-mask of the velocity rows in local stacked numbering.
  std::vector<int> local_velocity_indices() const;

 private:
  const Discretization* disc_;
  int ne_, npe_, npp_, nvb_, nvi_, np_;
  int size_ = 0, local_size_ = 0, local_velocity_bnd_total_ = 0;
  std::vector<int> local_velocity_;
  SparseMatrix scatter_;
};

/// Six-block Oseen saddle-point system
///
///     [ A       -D_bnd^T  B ] [v_bnd]   [f_bnd]
///     [ -D_bnd   0   -D_int ] [  p  ] = [ f_p ]
///     [ Bt      -D_int^T  C ] [v_int]   [f_int]
///
/// with Dirichlet unknowns eliminated into the right-hand sides. B couples
/// boundary rows to interior columns, Bt interior rows to boundary columns.
struct BlockSystem {
  SparseMatrix A, B, Bt, C, D_bnd, D_int;
  Eigen::VectorXd f_bnd, f_p, f_int;

  std::vector<int> bnd_free;   ///< system indices of the v_bnd unknowns
  std::vector<int> pressure;   ///< system indices of p
  std::vector<int> interior;   ///< system indices of v_int
  std::vector<int> dirichlet;  ///< eliminated system indices
  Eigen::VectorXd dirichlet_values;
  int system_size = 0;

  /// Pure-Dirichlet configurations fix the pressure mean with one extra row.
  bool pin_pressure_mean = false;
  Eigen::VectorXd pressure_mass;  ///< integral of each pressure basis function

  /// Full system vector from the block unknowns plus Dirichlet values.
  Eigen::VectorXd expand(const Eigen::VectorXd& v_bnd, const Eigen::VectorXd& p,
                         const Eigen::VectorXd& v_int) const;
};

struct BlockSolution {
  Eigen::VectorXd v_bnd, p, v_int;
  double relative_residual = 0.0;
};

/// Discretized incompressible flow problem: caches the element operators that
/// do not depend on the advecting field.
class FlowProblem {
 public:
  FlowProblem(std::shared_ptr<const Discretization> disc, BoundaryConditions bc);

  const Discretization& discretization() const { return *disc_; }
  std::shared_ptr<const Discretization> discretization_ptr() const { return disc_; }
  const SystemLayout& layout() const { return layout_; }
  const BoundaryConditions& boundary_conditions() const { return bc_; }

  /// Global system matrices (Dirichlet unknowns not yet eliminated).
  SparseMatrix viscous() const;                   ///< vector Laplacian, both components
  SparseMatrix divergence_coupling() const;       ///< -D and -D^T blocks
  SparseMatrix advection(const FieldState& w) const;  ///< (w . grad) u, w at any level
  Eigen::VectorXd load(const VectorFunction& body_force) const;

  /// Element-local (block-diagonal) versions in the stacked local numbering.
  SparseMatrix local_viscous() const;
  SparseMatrix local_divergence_coupling() const;
  SparseMatrix local_advection(const FieldState& w) const;
  Eigen::VectorXd local_load(const VectorFunction& body_force) const;
  /// Velocity L2 mass matrix (pressure rows empty), local numbering.
  SparseMatrix local_velocity_mass() const;
  /// Integral of every local basis function (velocity and pressure).
  Eigen::VectorXd local_mass_weights() const;

  /// System vector holding Dirichlet values (zero elsewhere).
  const Eigen::VectorXd& dirichlet_lift() const { return dirichlet_lift_; }
  const std::vector<int>& dirichlet_indices() const { return dirichlet_; }
  bool has_neumann_boundary() const { return has_neumann_; }
  const Eigen::VectorXd& pressure_mass() const { return pressure_mass_; }

  /// Advecting field at quadrature points (2 components).
  FieldState physical_velocity(const FieldState& w) const;
  /// Velocity of a system vector at quadrature points.
  FieldState physical_velocity_of(const Eigen::VectorXd& system) const;

  /// Splits a full system matrix/load into the six blocks.
  BlockSystem make_block_system(const SparseMatrix& matrix,
                                const Eigen::VectorXd& rhs) const;

 private:
  struct ElementOperators {
    Eigen::MatrixXd basis, grad_x, grad_y;  ///< (quad points) x (velocity nodes)
    Eigen::MatrixXd pbasis;                 ///< (quad points) x (pressure nodes)
    Eigen::MatrixXd stiffness;              ///< scalar Laplacian, exactly symmetric
    Eigen::MatrixXd div_x, div_y;           ///< (pressure nodes) x (velocity nodes)
  };

  enum class Target { global, local };
  SparseMatrix assemble_velocity(
      Target target,
      const std::function<Eigen::MatrixXd(int element)>& element_matrix) const;
  SparseMatrix assemble_divergence(Target target) const;
  Eigen::VectorXd assemble_load(Target target, const VectorFunction& body_force) const;

  std::shared_ptr<const Discretization> disc_;
  BoundaryConditions bc_;
  SystemLayout layout_;
  std::vector<ElementOperators> ops_;
  Eigen::VectorXd dirichlet_lift_;
  std::vector<int> dirichlet_;
  Eigen::VectorXd pressure_mass_;
  bool has_neumann_ = false;
};

/// Oseen system linearized at the advecting field `u_k` (any level, 2 comps).
BlockSystem assemble_oseen(const FlowProblem& problem, const FieldState& u_k,
                           const FlowParameters& params);

/// Monolithic sparse LU solve of the block system.
BlockSolution solve_block(const BlockSystem& system);

struct SteadySolution {
  FieldState velocity;   ///< global, 2 components
  FieldState pressure;   ///< global, scalar (degree P-1)
  Eigen::VectorXd state; ///< system vector (v_bnd, p, v_int)
  double nu = 0.0;
  std::uint64_t signature = 0;  ///< discretization signature
  std::vector<double> history;  ///< relative change per iterate
  int iterations = 0;
  bool converged = false;
};

/// Single linear solve at a given advecting field.
SteadySolution solve_linearized(const FlowProblem& problem, const FieldState& u_k,
                                const FlowParameters& params);

/// Fixed-point (Oseen) iteration. Starts from bc.initial_guess, or from the
/// Stokes solution when none is given. Stops when the relative L2 change of
/// the velocity drops below `tol`.
SteadySolution oseen_iterate(const FlowProblem& problem, const FlowParameters& params,
                             double tol, int max_iter,
                             const std::optional<FieldState>& initial_guess = std::nullopt);

struct SweepResult {
  std::vector<SteadySolution> solutions;
  std::optional<double> failed_nu;
  std::string failure;
  bool complete() const { return !failed_nu.has_value(); }
};

/// Viscosity continuation over a descending list; each solve warm-starts
/// from the previous solution.
SweepResult continuation_sweep(const FlowProblem& problem,
                               const std::vector<double>& nu_descending,
                               const FlowParameters& base, double tol, int max_iter);

/// Relative L2 norm of the velocity difference between two system vectors.
double relative_velocity_error(const FlowProblem& problem, const Eigen::VectorXd& approx,
                               const Eigen::VectorXd& reference);

/// Logarithmically spaced values from hi down to lo (count >= 1).
std::vector<double> log_spaced_descending(double lo, double hi, int count);

}  // namespace semrom
