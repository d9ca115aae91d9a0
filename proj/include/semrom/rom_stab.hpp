#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "semrom/dg_mini.hpp"
#include "semrom/pso.hpp"

namespace semrom {

/// Linear Galerkin ROM da/dt = A_r a with reference coefficient samples.
struct LinearRom {
  Eigen::MatrixXd reduced;       ///< A_r, N_m x N_m
  Eigen::MatrixXd basis;         ///< V, N_delta x N_m (empty for constructed instances)
  Eigen::MatrixXd weight;        ///< W_s (empty means identity)
  Eigen::MatrixXd coefficients;  ///< a_FOM, one column per sample
  double dt = 0.0;               ///< spacing of the samples

  int modes() const { return static_cast<int>(reduced.rows()); }
  int samples() const { return static_cast<int>(coefficients.cols()); }
};

/// V = leading left singular vectors of the W_s-weighted snapshots with
/// V^T W_s V = I, A_r = V^T W_s L V, a_FOM = V^T W_s u. Empty weight means identity.
LinearRom galerkin_reduce(const Eigen::MatrixXd& full_operator, const Trajectory& snapshots,
                          int modes, const Eigen::MatrixXd& weight = {});

/// Diagonal W_s = diag(d) with sym(W_s L) as negative as a projected
/// subgradient search can make it (largest eigenvalue reported).
struct LyapunovWeight {
  Eigen::VectorXd diagonal;
  double symmetric_max = 0.0;  ///< largest eigenvalue of sym(diag(d) L)
  bool feasible = false;       ///< symmetric_max <= 1e-10 |L|
  int iterations = 0;
};
LyapunovWeight diagonal_lyapunov_weight(const Eigen::MatrixXd& full_operator,
                                        int max_iter = 500);

struct PowerDiagnostic {
  std::vector<double> power;  ///< W(t_k) = sum_i a_i(t_k)^2
  double slope = 0.0;         ///< alpha
  double intercept = 0.0;     ///< beta
};

/// Ordinary least squares fit W(t) = alpha t + beta with t_k = k dt.
PowerDiagnostic power_slope(const Eigen::MatrixXd& coefficients, double dt);

/// Constraint offset: max(1e-5, alpha_FOM).
double c2_rule(double alpha_fom);

/// Spectrum of A_r with the searched coordinates: the real parts (and, if
/// requested, the imaginary parts) of eigenvalues with Re > -margin. A
/// conjugate pair shares its coordinates.
class EigenReplacement {
 public:
  EigenReplacement(const Eigen::MatrixXd& reduced, double margin, bool search_imaginary);

  const Eigen::VectorXcd& eigenvalues() const { return values_; }
  const Eigen::MatrixXcd& eigenvectors() const { return vectors_; }
  double condition() const { return condition_; }
  int coordinates() const { return static_cast<int>(coord_eigen_.size()); }
  /// Eigenvalue index driven by each coordinate.
  const std::vector<int>& coordinate_eigenvalues() const { return coord_eigen_; }
  /// True where the coordinate sets an imaginary part.
  const std::vector<bool>& coordinate_is_imaginary() const { return coord_imag_; }
  /// Coordinates reproducing the original spectrum.
  std::vector<double> identity() const;
  /// Default PSO box: [Re - 2|Re| - 1, 0] for real parts, [0, 2|Im|] for imaginary parts.
  void default_bounds(std::vector<double>& lower, std::vector<double>& upper) const;

  Eigen::VectorXcd replaced_spectrum(std::span<const double> x) const;
  /// X diag(lambda') X^-1; throws Error if the imaginary residue exceeds 1e-10.
  Eigen::MatrixXd reconstruct(std::span<const double> x) const;

 private:
  Eigen::MatrixXd original_;
  Eigen::VectorXcd values_;
  Eigen::MatrixXcd vectors_, inverse_;
  std::vector<int> partner_;
  std::vector<int> coord_eigen_;
  std::vector<bool> coord_imag_;
  double condition_ = 1.0;
};

/// Throws IllConditionedError when cond(X) > 1e12.
EigenReplacement eigen_replace(const Eigen::MatrixXd& reduced, double margin = 0.0,
                               bool search_imaginary = false);

struct ObjectiveTerms {
  double mismatch = 0.0;  ///< sum_k |a_ROM(t_k) - a_FOM(t_k)|^2
  double slope = 0.0;     ///< alpha_ROM
  double value = 0.0;     ///< mismatch + c1 (alpha_ROM + c2); +inf on blow-up
};

/// RK4 from a_FOM(t_0) over the sample horizon with the given operator.
/// Throws InstabilityError on blow-up.
Eigen::MatrixXd integrate_rom(const Eigen::MatrixXd& reduced, const LinearRom& rom);

ObjectiveTerms objective_terms(const Eigen::MatrixXd& reduced, const LinearRom& rom, double c1,
                               double c2);

/// Objective of one replacement vector.
double objective(const EigenReplacement& replacement, std::span<const double> x,
                 const LinearRom& rom, double c1, double c2);

struct StabilizeOptions {
  PsoOptions pso;                ///< empty bounds select the default box
  double margin = 0.0;
  bool search_imaginary = false;
  std::optional<double> c1;      ///< default: baseline mismatch / max(|alpha|, c2)
  std::optional<double> alpha_fom;  ///< default: power slope of a_FOM
};

struct StabilizedRom {
  Eigen::MatrixXd reduced;
  Eigen::VectorXcd eigenvalues_before, eigenvalues_after;
  std::vector<double> replacement;
  double alpha_fom = 0.0, c1 = 0.0, c2 = 0.0;
  ObjectiveTerms before, after;
  std::vector<double> trace;
  bool searched = false;   ///< false when nothing needed replacing
  bool improved = false;   ///< PSO beat the unmodified operator
  bool success = false;    ///< alpha_ROM < 0 after stabilization
  std::string message;
};

StabilizedRom stabilize(const LinearRom& rom, const StabilizeOptions& options);

}  // namespace semrom
