#include "semrom/dg_mini.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semrom/error.hpp"
#include "semrom/quadrature.hpp"

namespace semrom {

FluxScheme flux_scheme_from_string(const std::string& name) {
  if (name == "upwind") return FluxScheme::upwind;
  if (name == "central") return FluxScheme::central;
  throw InvalidArgument("unknown flux scheme '" + name + "' (upwind, central)");
}

std::string to_string(FluxScheme f) { return f == FluxScheme::upwind ? "upwind" : "central"; }

namespace {

// Orthonormal basis on a cell of width h: phi_k = sqrt((2k+1)/h) L_k(xi).
double norm_factor(int k, double h) { return std::sqrt((2.0 * k + 1.0) / h); }

}  // namespace

DgOperator build_dg_operator(int cells, int order, double speed, double diffusivity,
                             FluxScheme flux) {
  if (cells < 2) throw InvalidArgument("dg: need at least 2 cells");
  if (order < 1) throw InvalidArgument("dg: polynomial degree must be at least 1");
  if (!(diffusivity >= 0.0)) throw InvalidArgument("dg: diffusivity must be non-negative");

  const int np = order + 1;
  const int n = cells * np;
  const double h = 1.0 / cells;

  // S(k, j) = integral of phi_k' phi_j over a cell.
  const QuadratureRule q = gauss_rule(np + 1);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(np, np);
  for (Eigen::Index a = 0; a < q.nodes.size(); ++a) {
    for (int k = 0; k < np; ++k) {
      const double dk = legendre(k, q.nodes[a]).derivative;
      for (int j = 0; j < np; ++j) s(k, j) += q.weights[a] * dk * legendre(j, q.nodes[a]).value;
    }
  }
  Eigen::VectorXd right(np), left(np);  // traces at the cell ends
  for (int k = 0; k < np; ++k) {
    s.row(k) *= norm_factor(k, h);
    right[k] = norm_factor(k, h);
    left[k] = (k % 2 ? -1.0 : 1.0) * norm_factor(k, h);
  }
  // The 2/h of d/dx cancels the h/2 Jacobian.
  for (int j = 0; j < np; ++j) s.col(j) *= norm_factor(j, h);

  auto block = [np](Eigen::MatrixXd& m, int ci, int cj) { return m.block(ci * np, cj * np, np, np); };
  auto prev = [cells](int i) { return (i + cells - 1) % cells; };
  auto next = [cells](int i) { return (i + 1) % cells; };

  Eigen::MatrixXd adv = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < cells; ++i) {
    block(adv, i, i) += speed * s;
    // Interface fluxes: -F_R phi_k(x_R) + F_L phi_k(x_L).
    if (flux == FluxScheme::upwind) {
      if (speed >= 0.0) {
        block(adv, i, i) -= speed * right * right.transpose();
        block(adv, i, prev(i)) += speed * left * right.transpose();
      } else {
        block(adv, i, next(i)) -= speed * right * left.transpose();
        block(adv, i, i) += speed * left * left.transpose();
      }
    } else {
      block(adv, i, i) -= 0.5 * speed * right * right.transpose();
      block(adv, i, next(i)) -= 0.5 * speed * right * left.transpose();
      block(adv, i, prev(i)) += 0.5 * speed * left * right.transpose();
      block(adv, i, i) += 0.5 * speed * left * left.transpose();
    }
  }

  DgOperator op;
  op.matrix = adv;
  if (diffusivity > 0.0) {
    // Gradient q = G u with the trace of u taken from the left cell.
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < cells; ++i) {
      block(g, i, i) += -s + right * right.transpose();
      block(g, i, prev(i)) -= left * right.transpose();
    }
    op.matrix -= diffusivity * g.transpose() * g;
  }
  op.cells = cells;
  op.order = order;
  op.speed = speed;
  op.diffusivity = diffusivity;
  op.flux = flux;
  return op;
}

double cfl_timestep(int cells, int order, double speed, double diffusivity) {
  if (cells < 1 || order < 0) throw InvalidArgument("cfl_timestep: bad discretization");
  const double h = 1.0 / cells;
  const double p2 = 2.0 * order + 1.0;
  double dt = std::abs(speed) > 0.0 ? 0.5 * h / (p2 * std::abs(speed))
                                    : std::numeric_limits<double>::infinity();
  // The LDG diffusion spectrum stays below 2.25 nu (P+1)^4 / h^2.
  if (diffusivity > 0.0) dt = std::min(dt, 0.5 * h * h / (std::pow(order + 1.0, 4) * diffusivity));
  if (!std::isfinite(dt)) throw InvalidArgument("cfl_timestep: zero speed and diffusivity");
  return dt;
}

Eigen::VectorXd dg_project(const DgOperator& op, const std::function<double(double)>& f) {
  const int np = op.order + 1;
  const double h = op.cell_width();
  const QuadratureRule q = gauss_rule(np + 6);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(op.size());
  for (int i = 0; i < op.cells; ++i) {
    for (Eigen::Index a = 0; a < q.nodes.size(); ++a) {
      const double x = (i + 0.5 * (q.nodes[a] + 1.0)) * h;
      const double fx = f(x) * q.weights[a] * h / 2.0;
      for (int k = 0; k < np; ++k) {
        u[i * np + k] += fx * norm_factor(k, h) * legendre(k, q.nodes[a]).value;
      }
    }
  }
  return u;
}

double dg_evaluate(const DgOperator& op, const Eigen::VectorXd& u, double x) {
  const int np = op.order + 1;
  const double h = op.cell_width();
  x -= std::floor(x);
  const int i = std::min(op.cells - 1, static_cast<int>(x / h));
  const double xi = 2.0 * (x - i * h) / h - 1.0;
  double v = 0.0;
  for (int k = 0; k < np; ++k) v += u[i * np + k] * norm_factor(k, h) * legendre(k, xi).value;
  return v;
}

double dg_l2_error(const DgOperator& op, const Eigen::VectorXd& u,
                   const std::function<double(double)>& f) {
  const double h = op.cell_width();
  const QuadratureRule q = gauss_rule(op.order + 7);
  double sum = 0.0;
  for (int i = 0; i < op.cells; ++i) {
    for (Eigen::Index a = 0; a < q.nodes.size(); ++a) {
      const double x = (i + 0.5 * (q.nodes[a] + 1.0)) * h;
      const double d = dg_evaluate(op, u, x) - f(x);
      sum += q.weights[a] * h / 2.0 * d * d;
    }
  }
  return std::sqrt(sum);
}

double dg_mass(const DgOperator& op, const Eigen::VectorXd& u) {
  const int np = op.order + 1;
  const double h = op.cell_width();
  double m = 0.0;
  for (int i = 0; i < op.cells; ++i) m += std::sqrt(h) * u[i * np];
  return m;
}

Trajectory rk4_run(const Eigen::MatrixXd& L, const Eigen::VectorXd& u0, double dt, int steps,
                   int stride) {
  if (L.rows() != L.cols() || L.rows() != u0.size()) {
    throw StructuralError("rk4_run: operator and state sizes disagree");
  }
  if (!(dt > 0.0)) throw InvalidArgument("rk4_run: dt must be positive");
  if (steps < 0 || stride < 1) throw InvalidArgument("rk4_run: bad step count or stride");

  Trajectory t;
  t.dt = dt;
  const int kept = steps / stride + 1;
  t.states.resize(u0.size(), kept);
  t.states.col(0) = u0;
  t.times.push_back(0.0);

  const double limit = 1e3 * std::max(u0.norm(), 1e-300);
  Eigen::VectorXd u = u0, k1, k2, k3, k4;
  for (int s = 1; s <= steps; ++s) {
    k1 = L * u;
    k2 = L * (u + 0.5 * dt * k1);
    k3 = L * (u + 0.5 * dt * k2);
    k4 = L * (u + dt * k3);
    u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double norm = u.norm();
    if (!std::isfinite(norm) || norm > limit) {
      throw InstabilityError("rk4_run: state norm grew from " + std::to_string(u0.norm()) +
                                 " to " + std::to_string(norm) + " at step " +
                                 std::to_string(s) + " (dt=" + std::to_string(dt) + ")",
                             s);
    }
    if (s % stride == 0) {
      t.states.col(s / stride) = u;
      t.times.push_back(s * dt);
    }
  }
  return t;
}

}  // namespace semrom
