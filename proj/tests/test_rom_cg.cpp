#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <new>
#include <random>

#include <unsupported/Eigen/SparseExtra>

#include "doctest.h"

#include "flow_fixtures.hpp"
#include "semrom/error.hpp"
#include "semrom/rom_cg.hpp"
#include "semrom/scalar_forms.hpp"

using namespace semrom;

// Allocation audit: records the largest single allocation while armed.
namespace audit {
std::atomic<bool> armed{false};
std::atomic<std::size_t> largest{0};
std::atomic<long> count{0};
}  // namespace audit

void* operator new(std::size_t n) {
  if (audit::armed.load(std::memory_order_relaxed)) {
    audit::count.fetch_add(1, std::memory_order_relaxed);
    std::size_t prev = audit::largest.load(std::memory_order_relaxed);
    while (n > prev && !audit::largest.compare_exchange_weak(prev, n)) {
    }
  }
  if (void* p = std::malloc(n ? n : 1)) return p;
  throw std::bad_alloc();
}
void operator delete(void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }

namespace {

constexpr double kFomTol = 1e-7;

struct Study {
  FlowProblem problem = fixtures::expansion(4, 2, 10, 1);
  std::vector<SteadySolution> solutions;
  SnapshotSet snapshots;
  PodBasis basis;
  AffineOperator affine;
  ReducedModel model;

  Study() {
    auto r = continuation_sweep(problem, log_spaced_descending(0.5, 10, 12), FlowParameters{}, kFomTol, 200);
    REQUIRE(r.complete());
    solutions = std::move(r.solutions);
    snapshots = build_snapshot_set(problem, solutions);
    basis = pod(problem, snapshots, 1.0);
    affine = affine_decompose_viscosity(problem);
    OfflineOptions oo;
    oo.flow = &problem;
    oo.snapshots = &snapshots;
    model = offline_build(affine, basis, snapshots.lifting, oo);
  }
};

const Study& study() {
  static const Study s;
  return s;
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / b.norm(); }
double rel(const SparseMatrix& a, const SparseMatrix& b) { return SparseMatrix(a - b).norm() / b.norm(); }

FieldState local_velocity(const FlowProblem& p, const Eigen::VectorXd& stacked) {
  const int nv = p.discretization().physical_size(2);
  return {Level::physical, 2, stacked_to_physical(p, stacked).head(nv)};
}

}  // namespace

TEST_CASE("viscosity decomposition reproduces the assembled Stokes blocks") {
  const FlowProblem prob = fixtures::expansion(5, 1, 6, 1);
  const AffineOperator aff = affine_decompose_viscosity(prob);
  CHECK(aff.term_count() == 2);
  const double one[1] = {1.0};
  CHECK(aff.coefficients(one) == std::vector<double>{1.0, 1.0});

  const SparseMatrix& s = prob.layout().scatter_matrix();
  for (double nu : {0.15, 0.5, 3.0}) {
    const double mu[1] = {nu};
    const SparseMatrix global = s.transpose() * aff.evaluate(mu) * s;
    const BlockSystem via_affine = prob.make_block_system(global, Eigen::VectorXd::Zero(global.rows()));
    const BlockSystem direct = assemble_oseen(prob, fixtures::zero_field(prob), fixtures::viscosity(nu));
    CHECK(rel(via_affine.A, direct.A) <= 1e-12);
    CHECK(rel(via_affine.B, direct.B) <= 1e-12);
    CHECK(rel(via_affine.Bt, direct.Bt) <= 1e-12);
    CHECK(rel(via_affine.C, direct.C) <= 1e-12);
    CHECK(rel(via_affine.D_bnd, direct.D_bnd) <= 1e-12);
    CHECK(rel(via_affine.D_int, direct.D_int) <= 1e-12);
  }
}

TEST_CASE("user affine specifications") {
  const FlowProblem prob = fixtures::expansion(3, 1, 4, 1);
  SUBCASE("[mu0, 1] matches the built-in split") {
    const AffineOperator user = affine_decompose_user({{"mu0", "1"}, {"viscous", "divergence"}},
                                                      flow_matrix_resolver(prob));
    const AffineOperator ref = affine_decompose_viscosity(prob);
    for (double nu : {0.2, 7.0}) {
      const double mu[1] = {nu};
      CHECK(SparseMatrix(user.evaluate(mu) - ref.evaluate(mu)).norm() == 0.0);
    }
  }
  SUBCASE("arithmetic, parse errors and count mismatches") {
    const AffineOperator a = affine_decompose_user({{"1/mu0"}, {"viscous"}}, flow_matrix_resolver(prob));
    const double four[1] = {4.0};
    CHECK(a.coefficients(four)[0] == 0.25);
    try {
      affine_decompose_user({{"mu0 * (2 +"}, {"viscous"}}, flow_matrix_resolver(prob));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.position() > 0);
      CHECK(e.position() <= 10);
    }
    CHECK_THROWS_AS(affine_decompose_user({{"mu0", "1"}, {"viscous"}}, flow_matrix_resolver(prob)),
                    StructuralError);
    CHECK_THROWS_AS(affine_decompose_user({{"1"}, {"no_such_matrix"}}, flow_matrix_resolver(prob)),
                    InvalidArgument);
  }
  SUBCASE("three-term stretch of a single element, in memory and from files") {
    // Laplacian plus x-convection on [0, s] x [0, 1]: dx-stiffness scales as
    // 1/s, dy-stiffness as s, x-convection not at all.
    const Discretization unit(make_rectangle_mesh(0, 1, 0, 1, 1, 1), 6);
    const auto dir = std::filesystem::temp_directory_path() / "semrom_stretch";
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    for (auto form : {"stiffness_y", "stiffness_x", "convection_x"}) {
      files.push_back((dir / (std::string(form) + ".mtx")).string());
      Eigen::saveMarket(assemble_scalar(unit, scalar_form_from_string(form)), files.back());
    }
    const AffineSpec named{{"mu0", "1/mu0", "1"}, {"stiffness_y", "stiffness_x", "convection_x"}};
    const AffineSpec from_files{{"mu0", "1/mu0", "1"},
                                {"file:" + files[0], "file:" + files[1], "file:" + files[2]}};
    for (const auto& spec : {named, from_files}) {
      const AffineOperator aff = affine_decompose_user(spec, scalar_matrix_resolver(unit));
      for (double stretch : {0.25, 1.0, 3.7}) {
        const Discretization wide(make_rectangle_mesh(0, stretch, 0, 1, 1, 1), 6);
        const SparseMatrix direct = assemble_scalar(wide, ScalarForm::stiffness_x) +
                                    assemble_scalar(wide, ScalarForm::stiffness_y) +
                                    assemble_scalar(wide, ScalarForm::convection_x);
        const double mu[1] = {stretch};
        CHECK(rel(aff.evaluate(mu), direct) <= 1e-12);
      }
    }
  }
}

TEST_CASE("offline projections") {
  const auto& s = study();
  SUBCASE("reduced affine terms equal projection after assembly") {
    const Eigen::MatrixXd& v = s.basis.modes_local;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.5, 10.0);
    for (int k = 0; k < 5; ++k) {
      const double mu[1] = {u(rng)};
      const SparseMatrix assembled = mu[0] * s.problem.local_viscous() + s.problem.local_divergence_coupling();
      const Eigen::MatrixXd direct = v.transpose() * (assembled * v);
      Eigen::MatrixXd from_affine = Eigen::MatrixXd::Zero(v.cols(), v.cols());
      const auto th = s.affine.coefficients(mu);
      for (int i = 0; i < s.model.term_count(); ++i) from_affine += th[i] * s.model.reduced_affine[i];
      CHECK(rel(from_affine, direct) <= 1e-12);
    }
  }
  SUBCASE("single mode: scalar e^T A e; single term theta=1 is a plain Galerkin projection") {
    const PodBasis one = s.basis.truncated(1);
    const AffineOperator plain = affine_decompose_user({{"1"}, {"viscous"}}, flow_matrix_resolver(s.problem));
    const ReducedModel m = offline_build(plain, one, s.snapshots.lifting);
    const Eigen::VectorXd e = one.modes_local.col(0);
    CHECK(m.reduced_affine[0].rows() == 1);
    CHECK(std::abs(m.reduced_affine[0](0, 0) - e.dot(s.problem.local_viscous() * e)) <=
          1e-14 * std::abs(m.reduced_affine[0](0, 0)));
  }
  SUBCASE("advection tensor is linear in the advecting field") {
    const Eigen::MatrixXd& v = s.basis.modes_local;
    const Eigen::VectorXd w = v.col(0) + v.col(1);
    const Eigen::MatrixXd direct = v.transpose() * (s.problem.local_advection(local_velocity(s.problem, w)) * v);
    CHECK(rel(s.model.advection[0] + s.model.advection[1], direct) <= 1e-12);
  }
  SUBCASE("random three-mode basis: tensor contraction equals assembly and projection") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n01;
    Eigen::MatrixXd raw(s.basis.dimension(), 3);
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = n01(rng);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    PodBasis b;
    b.modes_local = qr.householderQ() * Eigen::MatrixXd::Identity(raw.rows(), 3);
    b.modes_physical.resize(s.problem.discretization().physical_size(3), 3);
    for (int j = 0; j < 3; ++j) b.modes_physical.col(j) = stacked_to_physical(s.problem, b.modes_local.col(j));
    OfflineOptions oo;
    oo.flow = &s.problem;
    const ReducedModel m = offline_build(s.affine, b, s.snapshots.lifting, oo);
    for (int k = 0; k < 5; ++k) {
      Eigen::Vector3d a(n01(rng), n01(rng), n01(rng));
      Eigen::MatrixXd contracted = Eigen::MatrixXd::Zero(3, 3);
      for (int j = 0; j < 3; ++j) contracted += a[j] * m.advection[j];
      const SparseMatrix nl = s.problem.local_advection(local_velocity(s.problem, b.modes_local * a));
      const Eigen::MatrixXd direct = b.modes_local.transpose() * (nl * b.modes_local);
      CHECK((contracted - direct).norm() <= 1e-10 * direct.norm());
    }
    const SparseMatrix nl_lift = s.problem.local_advection(local_velocity(s.problem, s.snapshots.lifting));
    CHECK(rel(m.advection_lift, Eigen::MatrixXd(b.modes_local.transpose() * (nl_lift * b.modes_local))) <= 1e-12);
  }
  SUBCASE("a = e1 contributes exactly the first slice") {
    const AffineOperator zero = affine_decompose_user({{"0*mu0"}, {"viscous"}}, flow_matrix_resolver(s.problem));
    OfflineOptions oo;
    oo.flow = &s.problem;
    const PodBasis b = s.basis.truncated(4);
    const ReducedModel m = offline_build(zero, b, Eigen::VectorXd::Zero(b.dimension()), oo);
    Eigen::MatrixXd matrix;
    Eigen::VectorXd rhs;
    const double mu[1] = {1.0};
    reduced_system(m, mu, Eigen::VectorXd::Unit(4, 0), matrix, rhs);
    CHECK((matrix.array() == m.advection[0].array()).all());
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(offline_build(s.affine, s.basis, Eigen::VectorXd::Zero(3)), StructuralError);
  }
}

TEST_CASE("online solves") {
  const auto& s = study();
  SUBCASE("full rank at snapshot parameters reproduces the snapshots") {
    // Coupled velocity/pressure modes can make the reduced saddle system
    // exactly singular; the consistent minimum-norm solve is used here.
    const int rank = s.model.size();
    for (std::size_t k = 0; k < s.solutions.size(); k += 3) {
      const double mu[1] = {s.solutions[k].nu};
      const OnlineResult r = online_solve(s.model, mu, kFomTol, 100, nullptr, SingularPolicy::minimum_norm);
      CHECK(r.converged);
      CHECK(r.linear_residual < 1e-10);
      const Eigen::VectorXd state = s.problem.layout().gather(s.model.lift(r.coordinates), GatherMode::average);
      CHECK(relative_velocity_error(s.problem, state, s.solutions[k].state) <= 10 * kFomTol);
      CHECK(rank == s.model.size());
    }
  }
  SUBCASE("two-snapshot basis recovers the second snapshot") {
    const std::vector<SteadySolution> two = {s.solutions[0], s.solutions[5]};
    const SnapshotSet set = build_snapshot_set(s.problem, two);
    const PodBasis b = pod(s.problem, set, 1.0);
    REQUIRE(b.size() == 1);
    OfflineOptions oo;
    oo.flow = &s.problem;
    oo.snapshots = &set;
    const ReducedModel m = offline_build(s.affine, b, set.lifting, oo);
    const double mu[1] = {two[1].nu};
    const OnlineResult r = online_solve(m, mu, kFomTol, 100, nullptr, SingularPolicy::minimum_norm);
    const Eigen::VectorXd state = s.problem.layout().gather(m.lift(r.coordinates), GatherMode::average);
    CHECK(relative_velocity_error(s.problem, state, two[1].state) <= 10 * kFomTol);
  }
  SUBCASE("outside the domain, bad tolerance") {
    const double mu[1] = {50.0};
    CHECK_THROWS_AS(online_solve(s.model, mu, 1e-6, 10), InvalidArgument);
    const double ok[1] = {1.0};
    CHECK_THROWS_AS(online_solve(s.model, ok, 0.0, 10), InvalidArgument);
  }
  SUBCASE("singular reduced matrices are reported with N and mu unless minimum_norm is chosen") {
    // Find a size whose reduced matrix is singular, if any; the velocity
    // answer of the minimum-norm solve must then still be accurate.
    for (int n = 1; n <= s.model.size(); ++n) {
      const ReducedModel m = s.model.truncated(n);
      const double mu[1] = {s.solutions[4].nu};
      try {
        online_solve(m, mu, kFomTol, 100);
      } catch (const SolverError& e) {
        const std::string what = e.what();
        CHECK(what.find("N=" + std::to_string(n)) != std::string::npos);
        CHECK(what.find("mu=") != std::string::npos);
        const OnlineResult r = online_solve(m, mu, kFomTol, 100, nullptr, SingularPolicy::minimum_norm);
        CHECK(r.rank_deficiency > 0);
        CHECK(r.linear_residual < 1e-10);
      }
    }
  }
  SUBCASE("no allocation of full-order size during an online solve") {
    const ReducedModel m = s.model.truncated(s.model.size());
    const double mu[1] = {1.3};
    const std::size_t full = static_cast<std::size_t>(s.basis.dimension()) * sizeof(double);
    audit::largest = 0;
    audit::count = 0;
    audit::armed = true;
    const OnlineResult r = online_solve(m, mu, kFomTol, 100, nullptr, SingularPolicy::minimum_norm);
    audit::armed = false;
    CHECK(r.converged);
    CHECK(audit::count.load() > 0);  // the audit is live
    CHECK(audit::largest.load() < full);
    MESSAGE("largest online allocation " << audit::largest.load() << " bytes vs N_delta*8 = " << full);
  }
}

TEST_CASE("error sweep") {
  const auto& s = study();
  const auto rows = error_sweep(s.model, s.problem, s.solutions, {0, 1, 2, s.model.size()}, kFomTol, 100,
                                SingularPolicy::minimum_norm);
  REQUIRE(rows.size() == 4);
  // N = 0: distance of the lifting to each solution.
  const Eigen::VectorXd lift = s.problem.layout().gather(s.snapshots.lifting, GatherMode::average);
  for (std::size_t k = 0; k < s.solutions.size(); ++k) {
    CHECK(std::abs(rows[0].errors[k] - relative_velocity_error(s.problem, lift, s.solutions[k].state)) <= 1e-14);
  }
  CHECK(rows[0].failures == 0);
  CHECK(rows[3].max_error <= 10 * kFomTol);
  CHECK(rows[1].mean_error < rows[0].mean_error);
  CHECK_THROWS_AS(error_sweep(s.model, s.problem, s.solutions, {s.model.size() + 1}, kFomTol, 100),
                  InvalidArgument);
}
