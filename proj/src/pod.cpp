#include "semrom/pod.hpp"

#include <algorithm>
#include <cmath>

#include "semrom/error.hpp"

namespace semrom {

std::uint64_t matrix_checksum(const Eigen::MatrixXd& m, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  const auto* p = reinterpret_cast<const unsigned char*>(m.data());
  const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  const auto* d = reinterpret_cast<const unsigned char*>(dims);
  for (std::size_t i = 0; i < sizeof(dims); ++i) {
    h ^= d[i];
    h *= 1099511628211ULL;
  }
  return h;
}

SnapshotSet build_snapshot_set(std::vector<double> parameters, const Eigen::MatrixXd& columns,
                               const Eigen::VectorXd& lifting) {
  if (columns.cols() == 0) throw InvalidArgument("snapshot set needs at least one column");
  if (static_cast<Eigen::Index>(parameters.size()) != columns.cols()) {
    throw StructuralError("snapshot set: " + std::to_string(parameters.size()) +
                          " parameters for " + std::to_string(columns.cols()) + " columns");
  }
  if (lifting.size() != columns.rows()) {
    throw StructuralError("snapshot set: lifting length does not match the columns");
  }
  SnapshotSet s;
  s.parameters = std::move(parameters);
  s.states = columns.colwise() - lifting;
  s.lifting = lifting;
  return s;
}

SnapshotSet build_snapshot_set(const FlowProblem& problem,
                               const std::vector<SteadySolution>& solutions) {
  if (solutions.empty()) throw InvalidArgument("snapshot set needs at least one solution");
  const auto& layout = problem.layout();
  const std::uint64_t sig = problem.discretization().signature();
  Eigen::MatrixXd cols(layout.local_size(), static_cast<Eigen::Index>(solutions.size()));
  std::vector<double> nu;
  int top = 0;
  for (std::size_t k = 0; k < solutions.size(); ++k) {
    const auto& s = solutions[k];
    if ((s.signature != 0 && s.signature != sig) || s.state.size() != layout.size()) {
      throw StructuralError("snapshot " + std::to_string(k) +
                            " comes from a different discretization");
    }
    cols.col(static_cast<Eigen::Index>(k)) = layout.scatter(s.state);
    nu.push_back(s.nu);
    if (s.nu > solutions[top].nu) top = static_cast<int>(k);
  }
  const Eigen::VectorXd lifting = cols.col(top);
  SnapshotSet set = build_snapshot_set(std::move(nu), cols, lifting);
  set.lifting_column = top;
  set.signature = sig;
  return set;
}

int energy_count(const Eigen::VectorXd& sv, double threshold) {
  if (!(threshold > 0.0) || threshold > 1.0) {
    throw InvalidArgument("energy threshold must lie in (0, 1]");
  }
  const double total = sv.squaredNorm();
  if (!(total > 0.0)) throw InvalidArgument("snapshot matrix is zero: no basis");
  // Modes below roundoff carry no information; never count them.
  const double floor = sv[0] * 1e-13 * static_cast<double>(sv.size());
  double acc = 0.0;
  int n = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] <= floor) break;
    acc += sv[i] * sv[i];
    n = static_cast<int>(i) + 1;
    // threshold 1 keeps the numerical rank; roundoff in the running sum
    // would otherwise stop early.
    if (threshold < 1.0 && acc >= threshold * total) break;
  }
  return n;
}

PodBasis PodBasis::truncated(int n) const {
  if (n < 0 || n > size()) {
    throw InvalidArgument("requested " + std::to_string(n) + " modes but the basis has " +
                          std::to_string(size()));
  }
  PodBasis out = *this;
  out.modes_local = modes_local.leftCols(n);
  if (modes_physical.cols() > 0) out.modes_physical = modes_physical.leftCols(n);
  return out;
}

std::uint64_t PodBasis::checksum() const { return matrix_checksum(modes_local); }

PodBasis pod(const SnapshotSet& snapshots, double threshold, const PodOptions& options) {
  const Eigen::MatrixXd& x = snapshots.states;
  if (x.size() == 0) throw InvalidArgument("empty snapshot set");
  if (!(threshold > 0.0) || threshold > 1.0) {
    throw InvalidArgument("energy threshold must lie in (0, 1]");
  }

  Eigen::VectorXd sqrt_w;
  if (options.inner_product == InnerProduct::mass) {
    if (options.weights.size() != x.rows()) {
      throw StructuralError("mass weights length does not match the snapshots");
    }
    if ((options.weights.array() <= 0.0).any()) {
      throw InvalidArgument("mass weights must be positive");
    }
    sqrt_w = options.weights.array().sqrt();
  }
  const Eigen::MatrixXd xw = sqrt_w.size() ? Eigen::MatrixXd(sqrt_w.asDiagonal() * x) : x;
  Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> svd(
      xw, Eigen::ComputeThinU);

  PodBasis b;
  b.singular_values = svd.singularValues();
  b.energy_threshold = threshold;
  b.inner_product = options.inner_product;
  if (sqrt_w.size()) b.weights = options.weights;
  const int n = energy_count(b.singular_values, threshold);

  Eigen::MatrixXd modes = svd.matrixU().leftCols(n);
  if (sqrt_w.size()) modes = sqrt_w.cwiseInverse().asDiagonal() * modes;
  // Fix the sign so the largest entry of each mode is positive.
  for (int j = 0; j < n; ++j) {
    Eigen::Index imax = 0;
    modes.col(j).cwiseAbs().maxCoeff(&imax);
    if (modes(imax, j) < 0.0) modes.col(j) *= -1.0;
  }
  b.modes_local = std::move(modes);
  return b;
}

Eigen::VectorXd stacked_to_physical(const FlowProblem& problem, const Eigen::VectorXd& local) {
  const auto& disc = problem.discretization();
  const auto& layout = problem.layout();
  const FieldState u = to_physical(disc, disc.velocity(), layout.local_velocity(local));
  const FieldState p = to_physical(disc, disc.pressure(), layout.local_pressure(local));
  Eigen::VectorXd out(u.values.size() + p.values.size());
  out << u.values, p.values;
  return out;
}

PodBasis pod(const FlowProblem& problem, const SnapshotSet& snapshots, double threshold,
             const PodOptions& options) {
  if (snapshots.dimension() != problem.layout().local_size()) {
    throw StructuralError("snapshots do not match the flow problem");
  }
  PodBasis b = pod(snapshots, threshold, options);
  const int nphys = problem.discretization().physical_size(3);
  b.modes_physical.resize(nphys, b.size());
  for (int j = 0; j < b.size(); ++j) {
    b.modes_physical.col(j) = stacked_to_physical(problem, b.modes_local.col(j));
  }
  return b;
}

PodOptions mass_weighted(const FlowProblem& problem) {
  return {InnerProduct::mass, problem.local_mass_weights()};
}

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& full) {
  if (full.size() != basis.dimension()) {
    throw StructuralError("project: vector length " + std::to_string(full.size()) +
                          " does not match basis dimension " +
                          std::to_string(basis.dimension()));
  }
  if (basis.weights.size()) {
    return basis.modes_local.transpose() * basis.weights.cwiseProduct(full);
  }
  return basis.modes_local.transpose() * full;
}

Eigen::VectorXd lift(const PodBasis& basis, const Eigen::VectorXd& reduced,
                     const Eigen::VectorXd& lifting) {
  if (reduced.size() != basis.size() || lifting.size() != basis.dimension()) {
    throw StructuralError("lift: dimensions do not match the basis");
  }
  return lifting + basis.modes_local * reduced;
}

}  // namespace semrom
