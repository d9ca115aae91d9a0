#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace semrom {

enum class FluxScheme { upwind, central };

FluxScheme flux_scheme_from_string(const std::string& name);
std::string to_string(FluxScheme f);

/// Semi-discrete periodic 1D advection-diffusion u_t + c u_x = nu u_xx on
/// [0, 1] with an orthonormal Legendre basis per cell (identity mass matrix).
/// State layout: cell-major, index = cell * (P + 1) + mode.
struct DgOperator {
  Eigen::MatrixXd matrix;  ///< du/dt = matrix * u
  int cells = 0;
  int order = 0;
  double speed = 0.0;
  double diffusivity = 0.0;
  FluxScheme flux = FluxScheme::upwind;

  int size() const { return static_cast<int>(matrix.rows()); }
  double cell_width() const { return 1.0 / cells; }
};

/// Upwind or central advection flux; diffusion by local DG with alternating
/// traces, which gives the symmetric negative semidefinite part -nu G^T G.
DgOperator build_dg_operator(int cells, int order, double speed, double diffusivity,
                             FluxScheme flux);

/// dt = 0.5 h / ((2P + 1) |c|), capped by 0.5 h^2 / ((P + 1)^4 nu).
double cfl_timestep(int cells, int order, double speed, double diffusivity);

/// L2 projection of f onto the DG space.
Eigen::VectorXd dg_project(const DgOperator& op, const std::function<double(double)>& f);
/// Evaluates a DG state at x in [0, 1).
double dg_evaluate(const DgOperator& op, const Eigen::VectorXd& u, double x);
/// L2 distance between a DG state and a function.
double dg_l2_error(const DgOperator& op, const Eigen::VectorXd& u,
                   const std::function<double(double)>& f);
/// Integral of u over [0, 1].
double dg_mass(const DgOperator& op, const Eigen::VectorXd& u);

struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXd states;  ///< one column per time
  double dt = 0.0;

  int size() const { return static_cast<int>(states.cols()); }
};

/// Classical RK4 for du/dt = L u. Keeps every `stride`-th state (plus the
/// initial one). Throws InstabilityError when |u| exceeds 1e3 |u0|.
Trajectory rk4_run(const Eigen::MatrixXd& L, const Eigen::VectorXd& u0, double dt, int steps,
                   int stride = 1);
inline Trajectory rk4_run(const DgOperator& op, const Eigen::VectorXd& u0, double dt,
                          int steps, int stride = 1) {
  return rk4_run(op.matrix, u0, dt, steps, stride);
}

}  // namespace semrom
