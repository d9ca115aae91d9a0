#include "semrom/rom_cg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/SparseExtra>

#include "semrom/error.hpp"
#include "semrom/scalar_forms.hpp"

namespace semrom {

namespace {

std::string format_mu(std::span<const double> mu) {
  std::ostringstream s;
  s.precision(6);
  s << '(';
  for (std::size_t i = 0; i < mu.size(); ++i) s << (i ? ", " : "") << mu[i];
  s << ')';
  return s.str();
}

const std::string kFilePrefix = "file:";

}  // namespace

// ---------------------------------------------------------------------------
// Affine operators

AffineOperator::AffineOperator(std::vector<AffineTerm> terms, Eigen::VectorXd rhs)
    : terms_(std::move(terms)), rhs_(std::move(rhs)) {
  if (terms_.empty()) throw StructuralError("affine operator needs at least one term");
  const auto rows = terms_[0].matrix.rows();
  for (const auto& t : terms_) {
    if (t.matrix.rows() != rows || t.matrix.cols() != rows) {
      throw StructuralError("affine term '" + t.name + "' is " +
                            std::to_string(t.matrix.rows()) + "x" +
                            std::to_string(t.matrix.cols()) + ", expected " +
                            std::to_string(rows) + "x" + std::to_string(rows));
    }
  }
  if (rhs_.size() == 0) rhs_ = Eigen::VectorXd::Zero(rows);
  if (rhs_.size() != rows) throw StructuralError("affine right-hand side has the wrong length");
}

int AffineOperator::parameter_count() const {
  int n = 1;
  for (const auto& t : terms_) n = std::max(n, t.theta.parameter_count());
  return n;
}

std::vector<double> AffineOperator::coefficients(std::span<const double> mu) const {
  std::vector<double> c;
  c.reserve(terms_.size());
  for (const auto& t : terms_) c.push_back(t.theta(mu));
  return c;
}

SparseMatrix AffineOperator::evaluate(std::span<const double> mu) const {
  const auto c = coefficients(mu);
  SparseMatrix sum = c[0] * terms_[0].matrix;
  for (std::size_t i = 1; i < terms_.size(); ++i) sum += c[i] * terms_[i].matrix;
  return sum;
}

AffineOperator affine_decompose_viscosity(const FlowProblem& problem,
                                          const VectorFunction& body_force) {
  std::vector<AffineTerm> terms;
  terms.push_back({"viscous", Expression::parse("mu0"), problem.local_viscous()});
  terms.push_back({"divergence", Expression::parse("1"), problem.local_divergence_coupling()});
  return AffineOperator(std::move(terms), problem.local_load(body_force));
}

AffineOperator affine_decompose_user(const AffineSpec& spec, const MatrixResolver& resolve,
                                     Eigen::VectorXd rhs) {
  if (spec.thetas.size() != spec.sources.size()) {
    throw StructuralError("affine spec lists " + std::to_string(spec.thetas.size()) +
                          " expressions but " + std::to_string(spec.sources.size()) +
                          " matrix sources");
  }
  std::vector<AffineTerm> terms;
  for (std::size_t i = 0; i < spec.thetas.size(); ++i) {
    terms.push_back({spec.sources[i], Expression::parse(spec.thetas[i]),
                     resolve(spec.sources[i])});
  }
  return AffineOperator(std::move(terms), std::move(rhs));
}

SparseMatrix read_matrix_market(const std::string& path) {
  SparseMatrix m;
  if (!Eigen::loadMarket(m, path)) throw InvalidArgument("cannot read matrix file '" + path + "'");
  return m;
}

MatrixResolver flow_matrix_resolver(const FlowProblem& problem) {
  return [&problem](const std::string& source) -> SparseMatrix {
    if (source == "viscous") return problem.local_viscous();
    if (source == "divergence") return problem.local_divergence_coupling();
    if (source == "velocity_mass") return problem.local_velocity_mass();
    if (source.rfind(kFilePrefix, 0) == 0) {
      return read_matrix_market(source.substr(kFilePrefix.size()));
    }
    throw InvalidArgument("unknown matrix source '" + source + "'");
  };
}

MatrixResolver scalar_matrix_resolver(const Discretization& disc) {
  return [&disc](const std::string& source) -> SparseMatrix {
    if (source.rfind(kFilePrefix, 0) == 0) {
      return read_matrix_market(source.substr(kFilePrefix.size()));
    }
    return assemble_scalar(disc, scalar_form_from_string(source));
  };
}

bool ParameterDomain::contains(std::span<const double> mu) const {
  if (lower.empty()) return true;
  if (mu.size() < lower.size()) return false;
  for (std::size_t i = 0; i < lower.size(); ++i) {
    const double slack = 1e-12 * std::max(std::abs(lower[i]), std::abs(upper[i]));
    if (mu[i] < lower[i] - slack || mu[i] > upper[i] + slack) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Offline stage

ReducedModel offline_build(const AffineOperator& affine, const PodBasis& basis,
                           const Eigen::VectorXd& lifting, const OfflineOptions& options) {
  const Eigen::MatrixXd& v = basis.modes_local;
  const int n = basis.size();
  if (affine.size() != basis.dimension() || lifting.size() != basis.dimension()) {
    throw StructuralError("offline_build: operator size " + std::to_string(affine.size()) +
                          ", basis dimension " + std::to_string(basis.dimension()) +
                          ", lifting length " + std::to_string(lifting.size()));
  }

  ReducedModel m;
  for (const auto& t : affine.terms()) {
    m.thetas.push_back(t.theta);
    m.reduced_affine.push_back(v.transpose() * (t.matrix * v));
    m.affine_on_lift.push_back(v.transpose() * (t.matrix * lifting));
  }
  m.reduced_rhs = v.transpose() * affine.rhs();

  const FlowProblem* flow = options.flow;
  if (flow) {
    if (flow->layout().local_size() != basis.dimension()) {
      throw StructuralError("offline_build: flow problem does not match the basis");
    }
    if (basis.modes_physical.cols() != n) {
      throw StructuralError("offline_build: basis has no physical modes");
    }
    const int nv = flow->discretization().physical_size(2);
    auto physical = [&](const Eigen::VectorXd& values) {
      return FieldState{Level::physical, 2, values.head(nv)};
    };
    m.has_advection = true;
    const SparseMatrix nl = flow->local_advection(physical(stacked_to_physical(*flow, lifting)));
    m.advection_lift = v.transpose() * (nl * v);
    m.advection_lift_on_lift = v.transpose() * (nl * lifting);
    m.advection_mode_on_lift.resize(n, n);
    for (int j = 0; j < n; ++j) {
      const SparseMatrix nj = flow->local_advection(physical(basis.modes_physical.col(j)));
      m.advection.push_back(v.transpose() * (nj * v));
      m.advection_mode_on_lift.col(j) = v.transpose() * (nj * lifting);
    }
    const SparseMatrix mass = flow->local_velocity_mass();
    m.gram = v.transpose() * (mass * v);
    m.gram_lift = v.transpose() * (mass * lifting);
    m.lift_norm2 = lifting.dot(mass * lifting);
  } else {
    m.gram = v.transpose() * v;
    m.gram_lift = v.transpose() * lifting;
    m.lift_norm2 = lifting.squaredNorm();
  }

  if (options.snapshots) {
    const SnapshotSet& s = *options.snapshots;
    if (s.dimension() != basis.dimension()) {
      throw StructuralError("offline_build: snapshots do not match the basis");
    }
    m.snapshot_coordinates.resize(n, s.size());
    for (int k = 0; k < s.size(); ++k) {
      m.snapshot_coordinates.col(k) = project(basis, s.states.col(k));
      m.snapshot_parameters.push_back({s.parameters[k]});
    }
    const auto [lo, hi] = std::minmax_element(s.parameters.begin(), s.parameters.end());
    m.domain = {{*lo}, {*hi}};
  }
  if (!options.domain.lower.empty()) m.domain = options.domain;

  m.basis = std::make_shared<const PodBasis>(basis);
  m.lifting = lifting;
  m.basis_checksum = basis.checksum();
  return m;
}

ReducedModel ReducedModel::truncated(int n) const {
  if (n < 0 || n > size()) {
    throw InvalidArgument("requested " + std::to_string(n) + " modes but the model has " +
                          std::to_string(size()));
  }
  ReducedModel t;
  t.thetas = thetas;
  for (const auto& a : reduced_affine) t.reduced_affine.push_back(a.topLeftCorner(n, n));
  for (const auto& r : affine_on_lift) t.affine_on_lift.push_back(r.head(n));
  t.reduced_rhs = reduced_rhs.head(n);
  t.has_advection = has_advection;
  if (has_advection) {
    for (int j = 0; j < n; ++j) t.advection.push_back(advection[j].topLeftCorner(n, n));
    t.advection_lift = advection_lift.topLeftCorner(n, n);
    t.advection_mode_on_lift = advection_mode_on_lift.topLeftCorner(n, n);
    t.advection_lift_on_lift = advection_lift_on_lift.head(n);
  }
  t.gram = gram.topLeftCorner(n, n);
  t.gram_lift = gram_lift.head(n);
  t.lift_norm2 = lift_norm2;
  t.snapshot_parameters = snapshot_parameters;
  if (snapshot_coordinates.size()) t.snapshot_coordinates = snapshot_coordinates.topRows(n);
  t.domain = domain;
  t.basis = basis;
  t.lifting = lifting;
  t.basis_checksum = basis_checksum;
  return t;
}

Eigen::VectorXd ReducedModel::lift(const Eigen::VectorXd& coordinates) const {
  if (coordinates.size() != size()) throw StructuralError("lift: wrong coordinate count");
  return lifting + basis->modes_local.leftCols(size()) * coordinates;
}

// ---------------------------------------------------------------------------
// Online stage

void reduced_system(const ReducedModel& m, std::span<const double> mu, const Eigen::VectorXd& a,
                    Eigen::MatrixXd& matrix, Eigen::VectorXd& rhs) {
  const int n = m.size();
  matrix.setZero(n, n);
  rhs = m.reduced_rhs;
  for (int i = 0; i < m.term_count(); ++i) {
    const double theta = m.thetas[i](mu);
    matrix.noalias() += theta * m.reduced_affine[i];
    rhs.noalias() -= theta * m.affine_on_lift[i];
  }
  if (!m.has_advection) return;
  matrix += m.advection_lift;
  rhs -= m.advection_lift_on_lift;
  for (int j = 0; j < n; ++j) {
    if (a[j] == 0.0) continue;
    matrix.noalias() += a[j] * m.advection[j];
    rhs.noalias() -= a[j] * m.advection_mode_on_lift.col(j);
  }
}

SingularPolicy singular_policy_from_string(const std::string& name) {
  if (name == "report") return SingularPolicy::report;
  if (name == "minimum_norm") return SingularPolicy::minimum_norm;
  throw InvalidArgument("unknown singular policy '" + name + "' (report, minimum_norm)");
}

OnlineResult online_solve(const ReducedModel& m, std::span<const double> mu, double tol,
                          int max_iter, const Eigen::VectorXd* initial,
                          SingularPolicy policy) {
  if (!(tol > 0.0)) throw InvalidArgument("online_solve: tol must be positive");
  if (max_iter < 1) throw InvalidArgument("online_solve: max_iter must be at least 1");
  if (!m.domain.contains(mu)) {
    throw InvalidArgument("online_solve: mu=" + format_mu(mu) + " outside the parameter domain");
  }
  const int n = m.size();
  OnlineResult out;
  if (n == 0) {
    out.coordinates.resize(0);
    out.converged = true;
    return out;
  }

  Eigen::VectorXd a;
  if (initial) {
    if (initial->size() != n) throw StructuralError("online_solve: initial guess has wrong size");
    a = *initial;
  } else if (m.snapshot_coordinates.cols() > 0) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m.snapshot_parameters.size(); ++k) {
      double d = 0.0;
      const auto& p = m.snapshot_parameters[k];
      for (std::size_t i = 0; i < p.size() && i < mu.size(); ++i) d += (p[i] - mu[i]) * (p[i] - mu[i]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    a = m.snapshot_coordinates.col(static_cast<Eigen::Index>(best));
  } else {
    a = Eigen::VectorXd::Zero(n);
  }

  // Size of the terms that cancel to form the right-hand side.
  double data_scale = m.reduced_rhs.norm();
  for (int i = 0; i < m.term_count(); ++i) {
    data_scale += std::abs(m.thetas[i](mu)) * m.affine_on_lift[i].norm();
  }
  if (m.has_advection) data_scale += m.advection_lift_on_lift.norm();

  Eigen::MatrixXd matrix;
  Eigen::VectorXd rhs, next, d;
  const int iters = m.has_advection ? max_iter : 1;
  for (int k = 1; k <= iters; ++k) {
    reduced_system(m, mu, a, matrix, rhs);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(matrix);
    const double rc = lu.rcond();
    const double rn = rhs.norm();
    if (rc > 1e-14) {
      next = lu.solve(rhs);
    } else if (policy == SingularPolicy::minimum_norm) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
      cod.setThreshold(1e-12);
      cod.compute(matrix);
      // Minimum-norm correction: the null-space part of the current iterate
      // (from the warm start) is kept rather than zeroed.
      next = a + cod.solve(rhs - matrix * a);
      out.rank_deficiency = std::max(out.rank_deficiency, n - static_cast<int>(cod.rank()));
    } else {
      throw SolverError("online_solve: singular reduced matrix (N=" + std::to_string(n) +
                            ", mu=" + format_mu(mu) + ", rcond=" + std::to_string(rc) + ")",
                        rc);
    }
    // Normwise backward error, meaningful also when rhs is near zero.
    const double scale = matrix.norm() * next.norm() + std::max(rn, data_scale);
    out.linear_residual = (matrix * next - rhs).norm() / (scale > 0.0 ? scale : 1.0);
    if (out.linear_residual > 1e-8) {
      throw SolverError("online_solve: inconsistent singular reduced system (N=" +
                            std::to_string(n) + ", mu=" + format_mu(mu) + ")",
                        rc);
    }
    if (!next.allFinite()) {
      throw ConvergenceError("online_solve: non-finite iterate at mu=" + format_mu(mu),
                             out.history);
    }
    d = next - a;
    const double norm2 = m.lift_norm2 + 2.0 * m.gram_lift.dot(next) + next.dot(m.gram * next);
    const double change = std::sqrt(std::max(0.0, d.dot(m.gram * d))) /
                          std::max(std::sqrt(std::max(norm2, 0.0)), 1e-300);
    a.swap(next);
    out.iterations = k;
    out.history.push_back(change);
    if (!m.has_advection || change < tol) {
      out.converged = true;
      out.coordinates = std::move(a);
      return out;
    }
  }
  throw ConvergenceError("online_solve: no convergence in " + std::to_string(max_iter) +
                             " iterations at mu=" + format_mu(mu) + " (N=" +
                             std::to_string(n) + ")",
                         out.history);
}

// ---------------------------------------------------------------------------
// Error sweep

std::vector<ErrorRow> error_sweep(const ReducedModel& model, const FlowProblem& problem,
                                  const std::vector<SteadySolution>& validation,
                                  const std::vector<int>& basis_sizes, double tol,
                                  int max_iter, SingularPolicy policy) {
  if (validation.empty()) throw InvalidArgument("error_sweep: no validation solutions");
  const auto& layout = problem.layout();
  std::vector<ErrorRow> rows;
  for (int n : basis_sizes) {
    if (n < 0 || n > model.size()) {
      throw InvalidArgument("error_sweep: N=" + std::to_string(n) + " exceeds the " +
                            std::to_string(model.size()) + " available modes");
    }
    const ReducedModel m = model.truncated(n);
    ErrorRow row;
    row.n = n;
    std::vector<Eigen::VectorXd> coords(validation.size());
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<bool> ok(validation.size(), true);
    for (std::size_t k = 0; k < validation.size(); ++k) {
      const double mu[1] = {validation[k].nu};
      // Stored snapshot coordinates are the preferred warm start; without
      // them, the nearest parameter solved so far.
      const Eigen::VectorXd* start = nullptr;
      double best = std::numeric_limits<double>::infinity();
      const std::size_t solved = m.snapshot_coordinates.cols() > 0 ? 0 : k;
      for (std::size_t j = 0; j < solved; ++j) {
        const double dist = std::abs(validation[j].nu - mu[0]);
        if (ok[j] && dist < best) {
          best = dist;
          start = &coords[j];
        }
      }
      try {
        OnlineResult r = online_solve(m, mu, tol, max_iter, start, policy);
        if (r.rank_deficiency > 0) ++row.rank_deficient;
        coords[k] = std::move(r.coordinates);
      } catch (const Error&) {
        ok[k] = false;
      }
    }
    row.online_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    double sum = 0.0;
    for (std::size_t k = 0; k < validation.size(); ++k) {
      double err = std::numeric_limits<double>::infinity();
      if (ok[k]) {
        const Eigen::VectorXd state = layout.gather(m.lift(coords[k]), GatherMode::average);
        err = relative_velocity_error(problem, state, validation[k].state);
      } else {
        ++row.failures;
      }
      row.errors.push_back(err);
      sum += err;
      row.max_error = std::max(row.max_error, err);
    }
    row.mean_error = sum / static_cast<double>(validation.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace semrom
