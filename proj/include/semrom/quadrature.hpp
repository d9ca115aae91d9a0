#pragma once

#include <Eigen/Dense>

namespace semrom {

/// Nodes and weights of a 1D rule on [-1, 1].
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Legendre polynomial L_n(x) and its derivative.
struct LegendreValue {
  double value;
  double derivative;
};
LegendreValue legendre(int n, double x);

/// Gauss-Lobatto-Legendre rule with order+1 points; exact to degree 2*order-1.
QuadratureRule gll_rule(int order);

/// Gauss-Legendre rule with n points; exact to degree 2n-1.
QuadratureRule gauss_rule(int n);

/// Nodal differentiation matrix for the Lagrange basis on `nodes`.
/// Rows sum to zero by construction.
Eigen::MatrixXd diff_matrix(const Eigen::VectorXd& nodes);

/// Differentiation matrix on the GLL nodes of the given order.
Eigen::MatrixXd diff_matrix(int order);

/// Matrix evaluating the Lagrange interpolant through `nodes` at `points`.
Eigen::MatrixXd interpolation_matrix(const Eigen::VectorXd& nodes,
                                     const Eigen::VectorXd& points);

/// GLL reference data for a nodal basis of degree P.
struct ReferenceElement {
  int order = 0;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  Eigen::MatrixXd diff;
};

ReferenceElement make_reference_element(int order);

}  // namespace semrom
