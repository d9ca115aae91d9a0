#include "semrom/rom_stab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "semrom/error.hpp"

namespace semrom {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

LinearRom galerkin_reduce(const Eigen::MatrixXd& full_operator, const Trajectory& snapshots,
                          int modes, const Eigen::MatrixXd& weight) {
  const Eigen::Index n = full_operator.rows();
  if (full_operator.cols() != n || snapshots.states.rows() != n) {
    throw StructuralError("galerkin_reduce: operator and snapshot sizes disagree");
  }
  if (snapshots.size() < 2) throw InvalidArgument("galerkin_reduce: need at least 2 snapshots");
  if (modes < 1) throw InvalidArgument("galerkin_reduce: need at least one mode");

  // W = C C^T; the SVD of C^T X gives V = C^-T U with V^T W V = I.
  Eigen::MatrixXd chol;
  if (weight.size()) {
    if (weight.rows() != n || weight.cols() != n) {
      throw StructuralError("galerkin_reduce: weight has the wrong size");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(weight);
    if (llt.info() != Eigen::Success) {
      throw InvalidArgument("galerkin_reduce: weight is not symmetric positive definite");
    }
    chol = llt.matrixL();
  }
  const Eigen::MatrixXd xw =
      weight.size() ? Eigen::MatrixXd(chol.transpose() * snapshots.states) : snapshots.states;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(xw, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double floor = sv[0] * 1e-12 * static_cast<double>(std::max(xw.rows(), xw.cols()));
  const int rank = static_cast<int>((sv.array() > floor).count());
  if (modes > rank) {
    throw InvalidArgument("galerkin_reduce: " + std::to_string(modes) +
                          " modes requested but the snapshots have rank " +
                          std::to_string(rank));
  }
  Eigen::MatrixXd u = svd.matrixU().leftCols(modes);
  for (int j = 0; j < modes; ++j) {
    Eigen::Index imax = 0;
    u.col(j).cwiseAbs().maxCoeff(&imax);
    if (u(imax, j) < 0.0) u.col(j) *= -1.0;
  }

  LinearRom rom;
  if (weight.size()) {
    rom.basis = chol.transpose().triangularView<Eigen::Upper>().solve(u);
    rom.weight = weight;
    const Eigen::MatrixXd wv = weight * rom.basis;
    rom.reduced = wv.transpose() * full_operator * rom.basis;
    rom.coefficients = wv.transpose() * snapshots.states;
  } else {
    rom.basis = u;
    rom.reduced = u.transpose() * full_operator * u;
    rom.coefficients = u.transpose() * snapshots.states;
  }
  rom.dt = snapshots.times.size() > 1 ? snapshots.times[1] - snapshots.times[0] : snapshots.dt;
  return rom;
}

LyapunovWeight diagonal_lyapunov_weight(const Eigen::MatrixXd& l, int max_iter) {
  const Eigen::Index n = l.rows();
  if (l.cols() != n || n == 0) throw StructuralError("lyapunov weight: operator must be square");
  const double tol = 1e-10 * std::max(1.0, l.norm());

  auto top = [&](const Eigen::VectorXd& d, Eigen::VectorXd& vec) {
    const Eigen::MatrixXd dl = d.asDiagonal() * l;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (dl + dl.transpose()));
    vec = es.eigenvectors().col(n - 1);
    return es.eigenvalues()[n - 1];
  };

  LyapunovWeight best;
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n), v;
  best.diagonal = d;
  best.symmetric_max = top(d, v);
  int it = 0;
  for (; it < max_iter && best.symmetric_max > tol; ++it) {
    // Subgradient of lambda_max(sym(D L)) with respect to d_i is v_i (L v)_i.
    const Eigen::VectorXd g = v.cwiseProduct(l * v);
    const double gn = g.norm();
    if (gn == 0.0) break;
    d -= (0.5 / std::sqrt(it + 1.0)) * (g / gn);
    d = d.cwiseMax(1e-6);
    d *= static_cast<double>(n) / d.sum();
    const double f = top(d, v);
    if (f < best.symmetric_max) {
      best.symmetric_max = f;
      best.diagonal = d;
    }
  }
  best.iterations = it;
  best.feasible = best.symmetric_max <= tol;
  return best;
}

PowerDiagnostic power_slope(const Eigen::MatrixXd& a, double dt) {
  const Eigen::Index m = a.cols();
  if (m < 2) throw InvalidArgument("power_slope: need at least 2 samples");
  if (!(dt > 0.0)) throw InvalidArgument("power_slope: dt must be positive");
  PowerDiagnostic p;
  p.power.resize(static_cast<std::size_t>(m));
  double tm = 0.0, wm = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    p.power[k] = a.col(k).squaredNorm();
    tm += k * dt;
    wm += p.power[k];
  }
  tm /= static_cast<double>(m);
  wm /= static_cast<double>(m);
  double stt = 0.0, stw = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double dtk = k * dt - tm;
    stt += dtk * dtk;
    stw += dtk * (p.power[k] - wm);
  }
  p.slope = stw / stt;
  p.intercept = wm - p.slope * tm;
  return p;
}

double c2_rule(double alpha_fom) {
  if (!std::isfinite(alpha_fom)) throw InvalidArgument("c2_rule: alpha_FOM must be finite");
  return std::max(1e-5, alpha_fom);
}

// ---------------------------------------------------------------------------
// Eigenvalue replacement

EigenReplacement::EigenReplacement(const Eigen::MatrixXd& a, double margin,
                                   bool search_imaginary)
    : original_(a) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || n == 0) throw StructuralError("eigen_replace: operator must be square");
  Eigen::EigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw SolverError("eigen_replace: eigensolver failed", 0.0);
  values_ = es.eigenvalues();
  vectors_ = es.eigenvectors();

  // Pair conjugates and make each pair exactly conjugate.
  const double scale = std::max(1.0, a.norm());
  partner_.assign(static_cast<std::size_t>(n), -1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (values_[i].imag() <= 1e-12 * scale || partner_[i] >= 0) continue;
    Eigen::Index best = -1;
    double dist = kInf;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || partner_[j] >= 0 || values_[j].imag() >= 0.0) continue;
      const double d = std::abs(values_[j] - std::conj(values_[i]));
      if (d < dist) {
        dist = d;
        best = j;
      }
    }
    if (best < 0) throw SolverError("eigen_replace: spectrum is not conjugate-closed", 0.0);
    partner_[i] = static_cast<int>(best);
    partner_[best] = static_cast<int>(i);
    values_[best] = std::conj(values_[i]);
    vectors_.col(best) = vectors_.col(i).conjugate();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (partner_[i] < 0) values_[i] = values_[i].real();
  }

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(vectors_);
  const auto& s = svd.singularValues();
  condition_ = s[n - 1] > 0.0 ? s[0] / s[n - 1] : kInf;
  if (!(condition_ <= 1e12)) {
    throw IllConditionedError("eigen_replace: eigenvector matrix condition number " +
                                  std::to_string(condition_) + " exceeds 1e12",
                              condition_);
  }
  inverse_ = vectors_.inverse();

  std::vector<int> reps;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool representative = partner_[i] < 0 || values_[i].imag() > 0.0;
    if (representative && values_[i].real() > -margin) reps.push_back(static_cast<int>(i));
  }
  std::stable_sort(reps.begin(), reps.end(), [this](int x, int y) {
    return values_[x].real() > values_[y].real();
  });
  for (int i : reps) {
    coord_eigen_.push_back(i);
    coord_imag_.push_back(false);
    if (search_imaginary && partner_[i] >= 0) {
      coord_eigen_.push_back(i);
      coord_imag_.push_back(true);
    }
  }
}

std::vector<double> EigenReplacement::identity() const {
  std::vector<double> x;
  for (std::size_t c = 0; c < coord_eigen_.size(); ++c) {
    const auto& lam = values_[coord_eigen_[c]];
    x.push_back(coord_imag_[c] ? lam.imag() : lam.real());
  }
  return x;
}

void EigenReplacement::default_bounds(std::vector<double>& lower,
                                      std::vector<double>& upper) const {
  lower.clear();
  upper.clear();
  for (std::size_t c = 0; c < coord_eigen_.size(); ++c) {
    const auto& lam = values_[coord_eigen_[c]];
    if (coord_imag_[c]) {
      lower.push_back(0.0);
      upper.push_back(2.0 * std::abs(lam.imag()));
    } else {
      lower.push_back(lam.real() - 2.0 * std::abs(lam.real()) - 1.0);
      upper.push_back(0.0);
    }
  }
}

Eigen::VectorXcd EigenReplacement::replaced_spectrum(std::span<const double> x) const {
  if (x.size() != coord_eigen_.size()) {
    throw StructuralError("eigen_replace: expected " + std::to_string(coord_eigen_.size()) +
                          " coordinates, got " + std::to_string(x.size()));
  }
  Eigen::VectorXcd lam = values_;
  for (std::size_t c = 0; c < x.size(); ++c) {
    const int i = coord_eigen_[c];
    lam[i] = coord_imag_[c] ? std::complex<double>(lam[i].real(), x[c])
                            : std::complex<double>(x[c], lam[i].imag());
    if (partner_[i] >= 0) lam[partner_[i]] = std::conj(lam[i]);
  }
  return lam;
}

Eigen::MatrixXd EigenReplacement::reconstruct(std::span<const double> x) const {
  const Eigen::VectorXcd lam = replaced_spectrum(x);
  const Eigen::MatrixXcd m = vectors_ * lam.asDiagonal() * inverse_;
  const Eigen::MatrixXd re = m.real();
  const double residue = m.imag().norm();
  if (residue > 1e-10 * std::max(1.0, re.norm())) {
    throw Error("eigen_replace: reconstructed operator has imaginary residue " +
                std::to_string(residue));
  }
  return re;
}

EigenReplacement eigen_replace(const Eigen::MatrixXd& reduced, double margin,
                               bool search_imaginary) {
  return EigenReplacement(reduced, margin, search_imaginary);
}

// ---------------------------------------------------------------------------
// Objective

Eigen::MatrixXd integrate_rom(const Eigen::MatrixXd& reduced, const LinearRom& rom) {
  if (reduced.rows() != rom.coefficients.rows()) {
    throw StructuralError("integrate_rom: operator and coefficients disagree");
  }
  if (rom.samples() < 1) throw InvalidArgument("integrate_rom: no reference samples");
  // Sub-step so that dt |A| stays inside the RK4 stability region.
  const int sub = std::max(1, static_cast<int>(std::ceil(rom.dt * reduced.norm())));
  const Trajectory t = rk4_run(reduced, rom.coefficients.col(0), rom.dt / sub,
                               (rom.samples() - 1) * sub, sub);
  return t.states;
}

ObjectiveTerms objective_terms(const Eigen::MatrixXd& reduced, const LinearRom& rom, double c1,
                               double c2) {
  ObjectiveTerms t;
  try {
    const Eigen::MatrixXd a = integrate_rom(reduced, rom);
    t.mismatch = (a - rom.coefficients).squaredNorm();
    t.slope = power_slope(a, rom.dt).slope;
    t.value = t.mismatch + c1 * (t.slope + c2);
  } catch (const InstabilityError&) {
    t.mismatch = t.slope = t.value = kInf;
  }
  return t;
}

double objective(const EigenReplacement& replacement, std::span<const double> x,
                 const LinearRom& rom, double c1, double c2) {
  Eigen::MatrixXd a;
  try {
    a = replacement.reconstruct(x);
  } catch (const IllConditionedError&) {
    throw;
  } catch (const Error&) {
    return kInf;
  }
  return objective_terms(a, rom, c1, c2).value;
}

// ---------------------------------------------------------------------------
// Pipeline

StabilizedRom stabilize(const LinearRom& rom, const StabilizeOptions& options) {
  StabilizedRom out;
  out.alpha_fom = options.alpha_fom ? *options.alpha_fom
                                    : power_slope(rom.coefficients, rom.dt).slope;
  out.c2 = c2_rule(out.alpha_fom);

  const EigenReplacement rep = eigen_replace(rom.reduced, options.margin,
                                             options.search_imaginary);
  out.eigenvalues_before = rep.eigenvalues();

  const ObjectiveTerms base = objective_terms(rom.reduced, rom, 0.0, out.c2);
  if (options.c1) {
    out.c1 = *options.c1;
  } else if (std::isfinite(base.mismatch)) {
    out.c1 = base.mismatch / std::max(std::abs(base.slope), out.c2);
  } else {
    out.c1 = 1.0;  // the unmodified operator blows up: no baseline to balance against
  }
  out.before = objective_terms(rom.reduced, rom, out.c1, out.c2);

  out.reduced = rom.reduced;
  out.replacement = rep.identity();
  out.after = out.before;
  if (rep.coordinates() == 0) {
    out.eigenvalues_after = out.eigenvalues_before;
    out.success = out.after.slope < 0.0;
    out.message = "no replacement needed: no eigenvalue inside the search margin";
    return out;
  }

  out.searched = true;
  PsoOptions pso = options.pso;
  if (pso.lower.empty()) rep.default_bounds(pso.lower, pso.upper);
  const double c1 = out.c1, c2 = out.c2;
  const PsoResult r = pso_minimize(pso, [&](std::span<const double> x) {
    return objective(rep, x, rom, c1, c2);
  });
  out.trace = r.trace;

  std::ostringstream msg;
  if (r.best_value < out.before.value) {
    out.improved = true;
    out.replacement = r.best;
    out.reduced = rep.reconstruct(r.best);
    out.after = objective_terms(out.reduced, rom, c1, c2);
    out.eigenvalues_after = rep.replaced_spectrum(r.best);
    msg << "replacement improved the objective from " << out.before.value << " to "
        << out.after.value;
  } else {
    out.eigenvalues_after = out.eigenvalues_before;
    msg << "no replacement improved on the unmodified operator (best " << r.best_value
        << " vs " << out.before.value << ")";
  }
  out.success = out.after.slope < 0.0;
  if (!out.success) msg << "; power slope is still non-negative";
  out.message = msg.str();
  return out;
}

}  // namespace semrom
