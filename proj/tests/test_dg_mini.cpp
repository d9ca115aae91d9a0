#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "doctest.h"

#include "semrom/dg_mini.hpp"
#include "semrom/error.hpp"

using namespace semrom;

namespace {

constexpr double kPi = std::numbers::pi;

double sine(double x) { return std::sin(2 * kPi * x); }

// Transport error after exactly one period with `steps` equal steps.
double period_error(const DgOperator& op, int steps) {
  const Eigen::VectorXd u0 = dg_project(op, sine);
  const Trajectory t = rk4_run(op, u0, 1.0 / steps, steps, steps);
  return dg_l2_error(op, t.states.rightCols(1), sine);
}

int period_steps(int cells, int order) {
  return static_cast<int>(std::ceil(1.0 / cfl_timestep(cells, order, 1.0, 0.0)));
}

}  // namespace

TEST_CASE("operator structure") {
  for (auto flux : {FluxScheme::upwind, FluxScheme::central}) {
    for (double nu : {0.0, 0.01}) {
      const DgOperator op = build_dg_operator(6, 4, 1.0, nu, flux);
      const Eigen::VectorXd ones = dg_project(op, [](double) { return 1.0; });
      CHECK((op.matrix * ones).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(dg_mass(op, ones) == doctest::Approx(1.0).epsilon(1e-13));
    }
  }
  SUBCASE("upwind spectrum in the closed left half-plane") {
    for (int p : {1, 3, 6}) {
      for (double nu : {0.0, 0.005}) {
        const DgOperator op = build_dg_operator(8, p, 1.0, nu, FluxScheme::upwind);
        const Eigen::EigenSolver<Eigen::MatrixXd> es(op.matrix, false);
        CHECK(es.eigenvalues().real().maxCoeff() <= 1e-10);
      }
    }
  }
  SUBCASE("pure diffusion is symmetric negative semidefinite") {
    const DgOperator op = build_dg_operator(8, 5, 0.0, 0.02, FluxScheme::upwind);
    CHECK((op.matrix - op.matrix.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (op.matrix + op.matrix.transpose()));
    CHECK(es.eigenvalues().maxCoeff() <= 1e-10);
    CHECK(es.eigenvalues().minCoeff() < -1.0);  // and not trivially zero
  }
  SUBCASE("arguments") {
    CHECK_THROWS_AS(build_dg_operator(8, 4, 1.0, -0.1, FluxScheme::upwind), InvalidArgument);
    CHECK_THROWS_AS(build_dg_operator(1, 4, 1.0, 0.0, FluxScheme::upwind), InvalidArgument);
    CHECK_THROWS_AS(build_dg_operator(8, 0, 1.0, 0.0, FluxScheme::upwind), InvalidArgument);
    CHECK_THROWS_AS(flux_scheme_from_string("hllc"), InvalidArgument);
    CHECK(flux_scheme_from_string(to_string(FluxScheme::central)) == FluxScheme::central);
  }
}

TEST_CASE("projection and evaluation") {
  const DgOperator op = build_dg_operator(4, 5, 1.0, 0.0, FluxScheme::upwind);
  const auto cubic = [](double x) { return x * x * x - 0.5 * x + 2.0; };
  const Eigen::VectorXd u = dg_project(op, cubic);
  for (double x : {0.0, 0.13, 0.5, 0.77, 0.999}) CHECK(dg_evaluate(op, u, x) == doctest::Approx(cubic(x)).epsilon(1e-12));
  CHECK(dg_l2_error(op, u, cubic) < 1e-12);
  // Integral of x^3 - x/2 + 2 over [0, 1].
  CHECK(dg_mass(op, u) == doctest::Approx(0.25 - 0.25 + 2.0).epsilon(1e-13));
}

TEST_CASE("RK4 on small systems") {
  const Eigen::MatrixXd minus_one = Eigen::MatrixXd::Constant(1, 1, -1.0);
  const Trajectory t = rk4_run(minus_one, Eigen::VectorXd::Ones(1), 0.1, 1);
  REQUIRE(t.size() == 2);
  CHECK(std::abs(t.states(0, 1) - 0.90483750) < 1e-8);
  CHECK(std::abs(t.states(0, 1) - std::exp(-0.1)) < 1e-7);

  const Eigen::VectorXd u0 = Eigen::VectorXd::LinSpaced(5, -1, 3);
  const Trajectory still = rk4_run(Eigen::MatrixXd::Zero(5, 5), u0, 0.3, 7, 2);
  CHECK(still.size() == 4);  // initial state plus steps 2, 4, 6
  for (int k = 0; k < still.size(); ++k) CHECK((still.states.col(k) - u0).norm() == 0.0);
  for (int k = 1; k < still.size(); ++k) CHECK(still.times[k] > still.times[k - 1]);
  CHECK(still.times.back() == doctest::Approx(1.8));

  const Eigen::MatrixXd growth = Eigen::MatrixXd::Constant(1, 1, 5.0);
  CHECK_THROWS_AS(rk4_run(growth, Eigen::VectorXd::Ones(1), 0.1, 100), InstabilityError);
  CHECK_THROWS_AS(rk4_run(minus_one, Eigen::VectorXd::Ones(2), 0.1, 1), StructuralError);
  CHECK_THROWS_AS(rk4_run(minus_one, Eigen::VectorXd::Ones(1), 0.0, 1), InvalidArgument);
}

TEST_CASE("periodic transport") {
  const DgOperator op = build_dg_operator(8, 6, 1.0, 0.0, FluxScheme::upwind);
  SUBCASE("one period at the CFL step") {
    CHECK(period_error(op, period_steps(8, 6)) < 1e-4);
  }
  SUBCASE("mass is conserved") {
    const Eigen::VectorXd u0 = dg_project(op, [](double x) { return 1.0 + std::exp(-50 * (x - 0.3) * (x - 0.3)); });
    const int n = period_steps(8, 6);
    const Trajectory t = rk4_run(op, u0, 1.0 / n, n, 10);
    const double m0 = dg_mass(op, u0);
    for (int k = 0; k < t.size(); ++k) CHECK(std::abs(dg_mass(op, t.states.col(k)) - m0) <= 1e-10);
  }
  SUBCASE("fourth order in time") {
    // Coarse in time and fine in space so the temporal error dominates.
    const DgOperator fine = build_dg_operator(8, 8, 1.0, 0.0, FluxScheme::upwind);
    const int n = period_steps(8, 8);
    const double coarse = period_error(fine, n);
    const double halved = period_error(fine, 2 * n);
    MESSAGE("RK4 factor " << coarse / halved);
    CHECK(coarse / halved >= 12.0);
    CHECK(coarse / halved <= 20.0);
  }
  SUBCASE("spectral convergence in the degree") {
    double previous = 1.0;
    for (int p = 2; p <= 7; ++p) {
      const DgOperator o = build_dg_operator(4, p, 1.0, 0.0, FluxScheme::upwind);
      const double e = period_error(o, 4 * period_steps(4, p));
      CHECK(e < 0.3 * previous);
      previous = e;
    }
  }
}

TEST_CASE("CFL rule") {
  CHECK(cfl_timestep(8, 6, 1.0, 0.0) == doctest::Approx(0.5 / 8 / 13));
  CHECK(cfl_timestep(8, 6, -2.0, 0.0) == doctest::Approx(0.25 / 8 / 13));
  // The diffusive cap takes over for strong diffusion.
  CHECK(cfl_timestep(8, 6, 1.0, 1.0) == doctest::Approx(0.5 / 64 / std::pow(7.0, 4)));
  CHECK_THROWS_AS(cfl_timestep(8, 6, 0.0, 0.0), InvalidArgument);
}
