#include "semrom/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "semrom/error.hpp"

namespace semrom {

LegendreValue legendre(int n, double x) {
  if (n < 0) throw InvalidArgument("legendre: negative degree");
  if (n == 0) return {1.0, 0.0};
  double p_prev = 1.0, p = x;
  double d_prev = 0.0, d = 1.0;
  for (int k = 2; k <= n; ++k) {
    const double p_next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k;
    const double d_next = d_prev + (2.0 * k - 1.0) * p;
    p_prev = p;
    p = p_next;
    d_prev = d;
    d = d_next;
  }
  return {p, d};
}

QuadratureRule gll_rule(int order) {
  if (order < 1) {
    throw InvalidArgument("gll_rule: order must be >= 1 (got " +
                          std::to_string(order) + ")");
  }
  const int n = order + 1;
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) {
    x[i] = -std::cos(std::numbers::pi * i / order);
  }
  // Newton iteration on (1 - x^2) L'_P(x) written as x L_P - L_{P-1} = 0.
  for (int i = 1; i < n - 1; ++i) {
    double xi = x[i];
    for (int it = 0; it < 100; ++it) {
      const double lp = legendre(order, xi).value;
      const double lpm = legendre(order - 1, xi).value;
      const double dx = (xi * lp - lpm) / (n * lp);
      xi -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    x[i] = xi;
  }
  x[0] = -1.0;
  x[n - 1] = 1.0;
  for (int i = 0; i < n / 2; ++i) {
    const double s = 0.5 * (x[n - 1 - i] - x[i]);
    x[i] = -s;
    x[n - 1 - i] = s;
  }
  if (n % 2 == 1) x[n / 2] = 0.0;

  QuadratureRule rule{x, Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    const double lp = legendre(order, x[i]).value;
    rule.weights[i] = 2.0 / (order * (order + 1.0) * lp * lp);
  }
  for (int i = 0; i < n / 2; ++i) {
    const double w = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  return rule;
}

QuadratureRule gauss_rule(int n) {
  if (n < 1) throw InvalidArgument("gauss_rule: need at least one point");
  QuadratureRule rule{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    double xi = -std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto lv = legendre(n, xi);
      const double dx = lv.value / lv.derivative;
      xi -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const auto lv = legendre(n, xi);
    rule.nodes[i] = xi;
    rule.weights[i] = 2.0 / ((1.0 - xi * xi) * lv.derivative * lv.derivative);
  }
  for (int i = 0; i < n / 2; ++i) {
    const double s = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    rule.nodes[i] = -s;
    rule.nodes[n - 1 - i] = s;
    const double w = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

namespace {

Eigen::VectorXd barycentric_weights(const Eigen::VectorXd& nodes) {
  const auto n = nodes.size();
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != j) w[j] *= nodes[j] - nodes[k];
    }
    w[j] = 1.0 / w[j];
  }
  return w;
}

}  // namespace

Eigen::MatrixXd diff_matrix(const Eigen::VectorXd& nodes) {
  const auto n = nodes.size();
  const Eigen::VectorXd w = barycentric_weights(nodes);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      d(i, j) = (w[j] / w[i]) / (nodes[i] - nodes[j]);
      row += d(i, j);
    }
    d(i, i) = -row;
  }
  return d;
}

Eigen::MatrixXd diff_matrix(int order) {
  return diff_matrix(gll_rule(order).nodes);
}

Eigen::MatrixXd interpolation_matrix(const Eigen::VectorXd& nodes,
                                     const Eigen::VectorXd& points) {
  const auto n = nodes.size();
  const auto m = points.size();
  const Eigen::VectorXd w = barycentric_weights(nodes);
  Eigen::MatrixXd interp = Eigen::MatrixXd::Zero(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double x = points[i];
    Eigen::Index hit = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (x == nodes[j]) hit = j;
    }
    if (hit >= 0) {
      interp(i, hit) = 1.0;
      continue;
    }
    double denom = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double t = w[j] / (x - nodes[j]);
      interp(i, j) = t;
      denom += t;
    }
    interp.row(i) /= denom;
  }
  return interp;
}

ReferenceElement make_reference_element(int order) {
  auto rule = gll_rule(order);
  ReferenceElement ref;
  ref.order = order;
  ref.diff = diff_matrix(rule.nodes);
  ref.nodes = std::move(rule.nodes);
  ref.weights = std::move(rule.weights);
  return ref;
}

}  // namespace semrom
