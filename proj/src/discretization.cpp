#include "semrom/discretization.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "semrom/error.hpp"

namespace semrom {

NodalSpace::NodalSpace(const Mesh& mesh, int order, const Eigen::VectorXd& quad_nodes)
    : order_(order),
      num_elements_(mesh.num_elements()),
      ref_(make_reference_element(order)) {
  basis_q_ = interpolation_matrix(ref_.nodes, quad_nodes);
  deriv_q_ = basis_q_ * ref_.diff;

  const int p = order_;
  const int npe = nodes_per_element();
  local_to_global_.assign(static_cast<std::size_t>(num_elements_) * npe, -1);

  // Vertices numbered in order of first appearance.
  std::map<int, int> first_seen;
  int next = 0;
  for (int e = 0; e < num_elements_; ++e) {
    for (int v : mesh.elements()[e]) {
      if (first_seen.try_emplace(v, next).second) ++next;
    }
  }
  std::map<std::pair<int, int>, int> edge_base;
  if (p > 1) {
    for (int e = 0; e < num_elements_; ++e) {
      for (int k = 0; k < 4; ++k) {
        const auto [a, b] = mesh.edge_vertices(e, k);
        if (edge_base.try_emplace({std::min(a, b), std::max(a, b)}, next).second) {
          next += p - 1;
        }
      }
    }
  }
  num_boundary_ = next;
  for (int e = 0; e < num_elements_; ++e) {
    const auto& corners = mesh.elements()[e];
    auto* l2g = &local_to_global_[static_cast<std::size_t>(e) * npe];
    l2g[0] = first_seen[corners[0]];
    l2g[p] = first_seen[corners[1]];
    l2g[p + (p + 1) * p] = first_seen[corners[2]];
    l2g[(p + 1) * p] = first_seen[corners[3]];
    for (int k = 0; k < 4 && p > 1; ++k) {
      const auto [a, b] = mesh.edge_vertices(e, k);
      const int base = edge_base[{std::min(a, b), std::max(a, b)}];
      const auto nodes = edge_nodes(k);
      for (int t = 1; t < p; ++t) {
        const int c = (a < b) ? t - 1 : p - 1 - t;
        l2g[nodes[t]] = base + c;
      }
    }
    for (int j = 1; j < p; ++j) {
      for (int i = 1; i < p; ++i) l2g[i + (p + 1) * j] = next++;
    }
  }
  num_global_ = next;
  multiplicity_.assign(num_global_, 0);
  for (int g : local_to_global_) {
    if (g < 0 || g >= num_global_) throw StructuralError("incomplete local-to-global map");
    ++multiplicity_[g];
  }
  for (int m : multiplicity_) {
    if (m == 0) throw StructuralError("local-to-global map is not surjective");
  }
}

std::vector<int> NodalSpace::edge_nodes(int local_edge) const {
  const int p = order_;
  std::vector<int> nodes(p + 1);
  for (int t = 0; t <= p; ++t) {
    switch (local_edge) {
      case 0: nodes[t] = t; break;
      case 1: nodes[t] = p + (p + 1) * t; break;
      case 2: nodes[t] = (p - t) + (p + 1) * p; break;
      case 3: nodes[t] = (p + 1) * (p - t); break;
      default: throw InvalidArgument("edge index must be 0..3");
    }
  }
  return nodes;
}

namespace {

Eigen::Matrix<double, 4, 1> bilinear_shape(double xi, double eta) {
  Eigen::Matrix<double, 4, 1> n;
  n << (1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta),
      (1 - xi) * (1 + eta);
  return 0.25 * n;
}

}  // namespace

Discretization::Discretization(Mesh mesh, int order, int quad_points)
    : mesh_(std::move(mesh)),
      order_(order),
      quad_(gll_rule(quad_points == 0 ? order : quad_points - 1)),
      velocity_(mesh_, order, quad_.nodes) {
  if (quad_points != 0 && quad_points < order + 1) {
    throw InvalidArgument("quadrature needs at least P+1 points per direction");
  }
  if (order >= 2) pressure_.emplace(mesh_, order - 1, quad_.nodes);

  const int nq = this->quad_points();
  geometry_.resize(mesh_.num_elements());
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    auto& g = geometry_[e];
    for (auto* v : {&g.x, &g.y, &g.jac, &g.jw, &g.dxi_dx, &g.dxi_dy, &g.deta_dx,
                    &g.deta_dy}) {
      v->resize(nq * nq);
    }
    for (int b = 0; b < nq; ++b) {
      for (int a = 0; a < nq; ++a) {
        const int q = a + nq * b;
        const double xi = quad_.nodes[a], eta = quad_.nodes[b];
        const Eigen::Vector2d x = map_point(e, xi, eta);
        const Eigen::Matrix2d jm = jacobian(e, xi, eta);
        const double det = jm.determinant();
        if (!(det > 0.0)) {
          throw GeometryError("element " + std::to_string(e) +
                              " has non-positive Jacobian " + std::to_string(det));
        }
        g.x[q] = x.x();
        g.y[q] = x.y();
        g.jac[q] = det;
        g.jw[q] = quad_.weights[a] * quad_.weights[b] * det;
        // inverse of [[dx/dxi, dx/deta], [dy/dxi, dy/deta]]
        g.dxi_dx[q] = jm(1, 1) / det;
        g.dxi_dy[q] = -jm(0, 1) / det;
        g.deta_dx[q] = -jm(1, 0) / det;
        g.deta_dy[q] = jm(0, 0) / det;
      }
    }
  }
}

const NodalSpace& Discretization::pressure() const {
  if (!pressure_) throw InvalidArgument("pressure space requires order >= 2");
  return *pressure_;
}

Eigen::Vector2d Discretization::map_point(int element, double xi, double eta) const {
  const auto n = bilinear_shape(xi, eta);
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  const auto& el = mesh_.elements()[element];
  for (int a = 0; a < 4; ++a) x += n[a] * mesh_.vertices()[el[a]];
  return x;
}

Eigen::Matrix2d Discretization::jacobian(int element, double xi, double eta) const {
  const double dn_dxi[4] = {-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)};
  const double dn_deta[4] = {-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)};
  Eigen::Matrix2d j = Eigen::Matrix2d::Zero();
  const auto& el = mesh_.elements()[element];
  for (int a = 0; a < 4; ++a) {
    const auto& v = mesh_.vertices()[el[a]];
    j(0, 0) += 0.25 * dn_dxi[a] * v.x();
    j(0, 1) += 0.25 * dn_deta[a] * v.x();
    j(1, 0) += 0.25 * dn_dxi[a] * v.y();
    j(1, 1) += 0.25 * dn_deta[a] * v.y();
  }
  return j;
}

std::vector<Eigen::Vector2d> Discretization::node_coordinates(
    const NodalSpace& space) const {
  std::vector<Eigen::Vector2d> coords(space.num_global());
  std::vector<bool> done(space.num_global(), false);
  const int n1 = space.order() + 1;
  const auto& nodes = space.reference().nodes;
  for (int e = 0; e < num_elements(); ++e) {
    for (int j = 0; j < n1; ++j) {
      for (int i = 0; i < n1; ++i) {
        const int g = space.global_index(e, i + n1 * j);
        if (done[g]) continue;
        coords[g] = map_point(e, nodes[i], nodes[j]);
        done[g] = true;
      }
    }
  }
  return coords;
}

std::uint64_t Discretization::signature() const {
  std::uint64_t h = mesh_.signature();
  for (std::uint64_t v : {static_cast<std::uint64_t>(order_),
                          static_cast<std::uint64_t>(quad_points())}) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

FieldState scatter(const NodalSpace& space, const FieldState& global) {
  if (global.level != Level::global) throw InvalidArgument("scatter expects a global field");
  const int ng = space.num_global();
  const int nl = space.local_size();
  if (global.values.size() != static_cast<Eigen::Index>(ng) * global.components) {
    throw StructuralError("scatter: global vector has wrong length");
  }
  FieldState local{Level::local, global.components,
                   Eigen::VectorXd(static_cast<Eigen::Index>(nl) * global.components)};
  const auto& l2g = space.local_to_global();
  for (int c = 0; c < global.components; ++c) {
    for (int i = 0; i < nl; ++i) {
      local.values[c * nl + i] = global.values[c * ng + l2g[i]];
    }
  }
  return local;
}

FieldState gather(const NodalSpace& space, const FieldState& local, GatherMode mode) {
  if (local.level != Level::local) throw InvalidArgument("gather expects a local field");
  const int ng = space.num_global();
  const int nl = space.local_size();
  if (local.values.size() != static_cast<Eigen::Index>(nl) * local.components) {
    throw StructuralError("gather: local vector has wrong length");
  }
  FieldState global{Level::global, local.components,
                    Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ng) * local.components)};
  const auto& l2g = space.local_to_global();
  if (mode == GatherMode::sum) {
    for (int c = 0; c < local.components; ++c) {
      for (int i = 0; i < nl; ++i) global.values[c * ng + l2g[i]] += local.values[c * nl + i];
    }
    return global;
  }
  // Mean written as first copy + mean deviation, so identical copies
  // reproduce the value bit for bit.
  std::vector<int> first(ng, -1);
  for (int i = 0; i < nl; ++i) {
    if (first[l2g[i]] < 0) first[l2g[i]] = i;
  }
  for (int c = 0; c < local.components; ++c) {
    Eigen::VectorXd dev = Eigen::VectorXd::Zero(ng);
    for (int i = 0; i < nl; ++i) {
      const int g = l2g[i];
      dev[g] += local.values[c * nl + i] - local.values[c * nl + first[g]];
    }
    for (int g = 0; g < ng; ++g) {
      global.values[c * ng + g] =
          local.values[c * nl + first[g]] + dev[g] / space.multiplicity(g);
    }
  }
  return global;
}

FieldState to_physical(const Discretization& disc, const NodalSpace& space,
                       const FieldState& local) {
  if (local.level != Level::local) throw InvalidArgument("to_physical expects a local field");
  const int npe = space.nodes_per_element();
  const int n1 = space.order() + 1;
  const int nq = disc.quad_points();
  const int ne = disc.num_elements();
  const int nl = space.local_size();
  if (local.values.size() != static_cast<Eigen::Index>(nl) * local.components) {
    throw StructuralError("to_physical: local vector has wrong length");
  }
  const int nqe = nq * nq;
  FieldState phys{Level::physical, local.components,
                  Eigen::VectorXd(static_cast<Eigen::Index>(ne) * nqe * local.components)};
  const Eigen::MatrixXd& b = space.basis_at_quadrature();
  for (int c = 0; c < local.components; ++c) {
    for (int e = 0; e < ne; ++e) {
      Eigen::Map<const Eigen::MatrixXd> ue(local.values.data() + c * nl + e * npe, n1, n1);
      Eigen::Map<Eigen::MatrixXd> out(phys.values.data() + (c * ne + e) * nqe, nq, nq);
      out.noalias() = b * ue * b.transpose();
    }
  }
  return phys;
}

double integrate_l2(const Discretization& disc, const FieldState& a, const FieldState& b) {
  if (a.level != Level::physical || b.level != Level::physical) {
    throw InvalidArgument("integrate_l2 expects physical fields");
  }
  if (a.components != b.components || a.values.size() != b.values.size() ||
      a.values.size() != disc.physical_size(a.components)) {
    throw StructuralError("integrate_l2: mismatched field sizes");
  }
  const int nqe = disc.points_per_element();
  const int ne = disc.num_elements();
  double total = 0.0;
  for (int c = 0; c < a.components; ++c) {
    for (int e = 0; e < ne; ++e) {
      const auto& jw = disc.geometry(e).jw;
      const Eigen::Index off = static_cast<Eigen::Index>(c * ne + e) * nqe;
      total += (jw.array() * a.values.segment(off, nqe).array() *
                b.values.segment(off, nqe).array())
                   .sum();
    }
  }
  return total;
}

double l2_norm(const Discretization& disc, const FieldState& a) {
  return std::sqrt(std::max(0.0, integrate_l2(disc, a, a)));
}

FieldState interpolate(const Discretization& disc, const NodalSpace& space,
                       int components, const PointFunction& f) {
  const auto coords = disc.node_coordinates(space);
  const int ng = space.num_global();
  FieldState g{Level::global, components,
               Eigen::VectorXd(static_cast<Eigen::Index>(ng) * components)};
  for (int c = 0; c < components; ++c) {
    for (int i = 0; i < ng; ++i) g.values[c * ng + i] = f(c, coords[i].x(), coords[i].y());
  }
  return g;
}

FieldState sample_physical(const Discretization& disc, int components,
                           const PointFunction& f) {
  const int nqe = disc.points_per_element();
  const int ne = disc.num_elements();
  FieldState phys{Level::physical, components,
                  Eigen::VectorXd(disc.physical_size(components))};
  for (int c = 0; c < components; ++c) {
    for (int e = 0; e < ne; ++e) {
      const auto& g = disc.geometry(e);
      for (int q = 0; q < nqe; ++q) {
        phys.values[(c * ne + e) * nqe + q] = f(c, g.x[q], g.y[q]);
      }
    }
  }
  return phys;
}

}  // namespace semrom
