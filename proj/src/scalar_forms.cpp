#include "semrom/scalar_forms.hpp"

#include <vector>

#include "semrom/error.hpp"

namespace semrom {

ScalarForm scalar_form_from_string(const std::string& name) {
  if (name == "mass") return ScalarForm::mass;
  if (name == "stiffness_x") return ScalarForm::stiffness_x;
  if (name == "stiffness_y") return ScalarForm::stiffness_y;
  if (name == "convection_x") return ScalarForm::convection_x;
  if (name == "convection_y") return ScalarForm::convection_y;
  throw InvalidArgument("unknown scalar form '" + name + "'");
}

Eigen::SparseMatrix<double> assemble_scalar(const Discretization& disc, ScalarForm form) {
  const auto& vs = disc.velocity();
  const int nq = disc.quad_points();
  const int n1 = vs.order() + 1;
  const int npe = vs.nodes_per_element();
  const auto& b1 = vs.basis_at_quadrature();
  const auto& d1 = vs.deriv_at_quadrature();

  Eigen::MatrixXd basis(nq * nq, npe), dxi(nq * nq, npe), deta(nq * nq, npe);
  for (int b = 0; b < nq; ++b) {
    for (int a = 0; a < nq; ++a) {
      for (int j = 0; j < n1; ++j) {
        for (int i = 0; i < n1; ++i) {
          basis(a + nq * b, i + n1 * j) = b1(a, i) * b1(b, j);
          dxi(a + nq * b, i + n1 * j) = d1(a, i) * b1(b, j);
          deta(a + nq * b, i + n1 * j) = b1(a, i) * d1(b, j);
        }
      }
    }
  }

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(disc.num_elements()) * npe * npe);
  for (int e = 0; e < disc.num_elements(); ++e) {
    const auto& g = disc.geometry(e);
    const Eigen::MatrixXd gx = g.dxi_dx.asDiagonal() * dxi + g.deta_dx.asDiagonal() * deta;
    const Eigen::MatrixXd gy = g.dxi_dy.asDiagonal() * dxi + g.deta_dy.asDiagonal() * deta;
    Eigen::MatrixXd m;
    switch (form) {
      case ScalarForm::mass: m = basis.transpose() * g.jw.asDiagonal() * basis; break;
      case ScalarForm::stiffness_x: m = gx.transpose() * g.jw.asDiagonal() * gx; break;
      case ScalarForm::stiffness_y: m = gy.transpose() * g.jw.asDiagonal() * gy; break;
      case ScalarForm::convection_x: m = basis.transpose() * g.jw.asDiagonal() * gx; break;
      case ScalarForm::convection_y: m = basis.transpose() * g.jw.asDiagonal() * gy; break;
    }
    for (int j = 0; j < npe; ++j) {
      for (int i = 0; i < npe; ++i) {
        t.emplace_back(vs.global_index(e, i), vs.global_index(e, j), m(i, j));
      }
    }
  }
  Eigen::SparseMatrix<double> s(vs.num_global(), vs.num_global());
  s.setFromTriplets(t.begin(), t.end());
  return s;
}

}  // namespace semrom
