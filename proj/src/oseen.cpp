#include "semrom/oseen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/SparseLU>

#include "semrom/error.hpp"

namespace semrom {

double reynolds(double velocity, double length, double viscosity) {
  if (!(velocity > 0.0) || !(length > 0.0) || !(viscosity > 0.0)) {
    throw InvalidArgument("reynolds: U, L and nu must be positive");
  }
  return velocity * length / viscosity;
}

void FlowParameters::validate() const {
  if (!(nu > 0.0)) throw InvalidArgument("viscosity must be positive");
  if (!(velocity_scale > 0.0) || !(length_scale > 0.0)) {
    throw InvalidArgument("characteristic velocity and length must be positive");
  }
}

void BoundaryConditions::validate(const Mesh& mesh) const {
  for (const auto& be : mesh.boundary()) {
    if (be.kind == BoundaryKind::dirichlet) {
      if (!dirichlet.count(be.label)) {
        throw InvalidArgument("no Dirichlet data for boundary label '" + be.label + "'");
      }
      if (neumann.count(be.label)) {
        throw InvalidArgument("label '" + be.label + "' is tagged Dirichlet but has Neumann data");
      }
    } else if (dirichlet.count(be.label)) {
      throw InvalidArgument("label '" + be.label + "' is tagged Neumann but has Dirichlet data");
    }
  }
}

// ---------------------------------------------------------------------------
// SystemLayout

SystemLayout::SystemLayout(const Discretization& disc) : disc_(&disc) {
  const auto& vs = disc.velocity();
  const auto& ps = disc.pressure();
  ne_ = disc.num_elements();
  npe_ = vs.nodes_per_element();
  npp_ = ps.nodes_per_element();
  nvb_ = vs.num_element_boundary();
  nvi_ = vs.num_global() - nvb_;
  np_ = ps.num_global();
  size_ = 2 * vs.num_global() + np_;

  const int p = vs.order();
  const int n1 = p + 1;
  auto is_boundary_node = [&](int l) {
    const int i = l % n1, j = l / n1;
    return i == 0 || i == p || j == 0 || j == p;
  };
  local_velocity_.assign(static_cast<std::size_t>(2) * ne_ * npe_, -1);
  int next = 0;
  for (int c = 0; c < 2; ++c) {
    for (int e = 0; e < ne_; ++e) {
      for (int l = 0; l < npe_; ++l) {
        if (is_boundary_node(l)) local_velocity_[(c * ne_ + e) * npe_ + l] = next++;
      }
    }
  }
  local_velocity_bnd_total_ = next;
  next += ne_ * npp_;
  for (int c = 0; c < 2; ++c) {
    for (int e = 0; e < ne_; ++e) {
      for (int l = 0; l < npe_; ++l) {
        if (!is_boundary_node(l)) local_velocity_[(c * ne_ + e) * npe_ + l] = next++;
      }
    }
  }
  local_size_ = next;

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(local_size_);
  for (int c = 0; c < 2; ++c) {
    for (int e = 0; e < ne_; ++e) {
      for (int l = 0; l < npe_; ++l) {
        t.emplace_back(local_velocity_index(c, e, l), velocity_index(c, vs.global_index(e, l)),
                       1.0);
      }
    }
  }
  for (int e = 0; e < ne_; ++e) {
    for (int l = 0; l < npp_; ++l) {
      t.emplace_back(local_pressure_index(e, l), pressure_index(ps.global_index(e, l)), 1.0);
    }
  }
  scatter_.resize(local_size_, size_);
  scatter_.setFromTriplets(t.begin(), t.end());
}

Eigen::VectorXd SystemLayout::scatter(const Eigen::VectorXd& system) const {
  if (system.size() != size_) throw StructuralError("layout scatter: wrong vector length");
  Eigen::VectorXd local(local_size_);
  const auto& vs = disc_->velocity();
  const auto& ps = disc_->pressure();
  for (int c = 0; c < 2; ++c) {
    for (int e = 0; e < ne_; ++e) {
      for (int l = 0; l < npe_; ++l) {
        local[local_velocity_index(c, e, l)] = system[velocity_index(c, vs.global_index(e, l))];
      }
    }
  }
  for (int e = 0; e < ne_; ++e) {
    for (int l = 0; l < npp_; ++l) {
      local[local_pressure_index(e, l)] = system[pressure_index(ps.global_index(e, l))];
    }
  }
  return local;
}

Eigen::VectorXd SystemLayout::gather(const Eigen::VectorXd& local, GatherMode mode) const {
  FieldState v = local_velocity(local);
  FieldState p = local_pressure(local);
  return compose(semrom::gather(disc_->velocity(), v, mode),
                 semrom::gather(disc_->pressure(), p, mode));
}

FieldState SystemLayout::velocity(const Eigen::VectorXd& system) const {
  if (system.size() != size_) throw StructuralError("layout: wrong system vector length");
  const int ng = nvb_ + nvi_;
  FieldState f{Level::global, 2, Eigen::VectorXd(2 * ng)};
  for (int c = 0; c < 2; ++c) {
    for (int g = 0; g < ng; ++g) f.values[c * ng + g] = system[velocity_index(c, g)];
  }
  return f;
}

FieldState SystemLayout::pressure(const Eigen::VectorXd& system) const {
  if (system.size() != size_) throw StructuralError("layout: wrong system vector length");
  return {Level::global, 1, system.segment(2 * nvb_, np_)};
}

FieldState SystemLayout::local_velocity(const Eigen::VectorXd& local) const {
  if (local.size() != local_size_) throw StructuralError("layout: wrong local vector length");
  FieldState f{Level::local, 2, Eigen::VectorXd(2 * ne_ * npe_)};
  for (int i = 0; i < 2 * ne_ * npe_; ++i) f.values[i] = local[local_velocity_[i]];
  return f;
}

FieldState SystemLayout::local_pressure(const Eigen::VectorXd& local) const {
  if (local.size() != local_size_) throw StructuralError("layout: wrong local vector length");
  return {Level::local, 1, local.segment(local_velocity_bnd_total_, ne_ * npp_)};
}

Eigen::VectorXd SystemLayout::compose(const FieldState& velocity,
                                      const FieldState& pressure) const {
  const int ng = nvb_ + nvi_;
  if (velocity.level != Level::global || pressure.level != Level::global ||
      velocity.values.size() != 2 * ng || pressure.values.size() != np_) {
    throw StructuralError("layout compose: expected global velocity and pressure fields");
  }
  Eigen::VectorXd system(size_);
  for (int c = 0; c < 2; ++c) {
    for (int g = 0; g < ng; ++g) system[velocity_index(c, g)] = velocity.values[c * ng + g];
  }
  system.segment(2 * nvb_, np_) = pressure.values;
  return system;
}

std::vector<int> SystemLayout::local_velocity_indices() const {
  std::vector<int> idx(local_velocity_.begin(), local_velocity_.end());
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------
// BlockSystem

Eigen::VectorXd BlockSystem::expand(const Eigen::VectorXd& v_bnd, const Eigen::VectorXd& p,
                                    const Eigen::VectorXd& v_int) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(system_size);
  for (std::size_t i = 0; i < bnd_free.size(); ++i) x[bnd_free[i]] = v_bnd[i];
  for (std::size_t i = 0; i < pressure.size(); ++i) x[pressure[i]] = p[i];
  for (std::size_t i = 0; i < interior.size(); ++i) x[interior[i]] = v_int[i];
  for (std::size_t i = 0; i < dirichlet.size(); ++i) x[dirichlet[i]] = dirichlet_values[i];
  return x;
}

// ---------------------------------------------------------------------------
// FlowProblem

FlowProblem::FlowProblem(std::shared_ptr<const Discretization> disc, BoundaryConditions bc)
    : disc_(std::move(disc)), bc_(std::move(bc)), layout_(*disc_) {
  const auto& d = *disc_;
  bc_.validate(d.mesh());
  const auto& vs = d.velocity();
  const auto& ps = d.pressure();
  const int nq = d.quad_points();
  const int nqe = nq * nq;
  const int n1 = vs.order() + 1;
  const int npe = vs.nodes_per_element();
  const int m1 = ps.order() + 1;
  const int npp = ps.nodes_per_element();
  const auto& b1 = vs.basis_at_quadrature();
  const auto& d1 = vs.deriv_at_quadrature();
  const auto& pb1 = ps.basis_at_quadrature();

  Eigen::MatrixXd basis(nqe, npe), dxi(nqe, npe), deta(nqe, npe), pbasis(nqe, npp);
  for (int b = 0; b < nq; ++b) {
    for (int a = 0; a < nq; ++a) {
      const int q = a + nq * b;
      for (int j = 0; j < n1; ++j) {
        for (int i = 0; i < n1; ++i) {
          basis(q, i + n1 * j) = b1(a, i) * b1(b, j);
          dxi(q, i + n1 * j) = d1(a, i) * b1(b, j);
          deta(q, i + n1 * j) = b1(a, i) * d1(b, j);
        }
      }
      for (int j = 0; j < m1; ++j) {
        for (int i = 0; i < m1; ++i) pbasis(q, i + m1 * j) = pb1(a, i) * pb1(b, j);
      }
    }
  }

  ops_.resize(d.num_elements());
  pressure_mass_ = Eigen::VectorXd::Zero(ps.num_global());
  for (int e = 0; e < d.num_elements(); ++e) {
    const auto& g = d.geometry(e);
    auto& op = ops_[e];
    op.basis = basis;
    op.pbasis = pbasis;
    op.grad_x = g.dxi_dx.asDiagonal() * dxi + g.deta_dx.asDiagonal() * deta;
    op.grad_y = g.dxi_dy.asDiagonal() * dxi + g.deta_dy.asDiagonal() * deta;
    const Eigen::MatrixXd k = op.grad_x.transpose() * g.jw.asDiagonal() * op.grad_x +
                              op.grad_y.transpose() * g.jw.asDiagonal() * op.grad_y;
    op.stiffness = 0.5 * (k + k.transpose());
    op.div_x = pbasis.transpose() * g.jw.asDiagonal() * op.grad_x;
    op.div_y = pbasis.transpose() * g.jw.asDiagonal() * op.grad_y;
    const Eigen::VectorXd pm = pbasis.transpose() * g.jw;
    for (int l = 0; l < npp; ++l) pressure_mass_[ps.global_index(e, l)] += pm[l];
  }

  // Dirichlet values, boundary edges processed in tag order.
  dirichlet_lift_ = Eigen::VectorXd::Zero(layout_.size());
  std::set<int> fixed;
  for (const auto& be : d.mesh().boundary()) {
    if (be.kind == BoundaryKind::neumann) {
      has_neumann_ = true;
      continue;
    }
    const auto& data = bc_.dirichlet.at(be.label);
    for (int l : vs.edge_nodes(be.local_edge)) {
      const int i = l % n1, j = l / n1;
      const Eigen::Vector2d x =
          d.map_point(be.element, vs.reference().nodes[i], vs.reference().nodes[j]);
      const Eigen::Vector2d value = data(x.x(), x.y());
      const int node = vs.global_index(be.element, l);
      for (int c = 0; c < 2; ++c) {
        const int idx = layout_.velocity_index(c, node);
        dirichlet_lift_[idx] = value[c];
        fixed.insert(idx);
      }
    }
  }
  dirichlet_.assign(fixed.begin(), fixed.end());
}

SparseMatrix FlowProblem::assemble_velocity(
    Target target, const std::function<Eigen::MatrixXd(int)>& element_matrix) const {
  const auto& vs = disc_->velocity();
  const int npe = vs.nodes_per_element();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(2) * disc_->num_elements() * npe * npe);
  for (int e = 0; e < disc_->num_elements(); ++e) {
    const Eigen::MatrixXd m = element_matrix(e);
    for (int c = 0; c < 2; ++c) {
      for (int j = 0; j < npe; ++j) {
        const int col = target == Target::global
                            ? layout_.velocity_index(c, vs.global_index(e, j))
                            : layout_.local_velocity_index(c, e, j);
        for (int i = 0; i < npe; ++i) {
          const int row = target == Target::global
                              ? layout_.velocity_index(c, vs.global_index(e, i))
                              : layout_.local_velocity_index(c, e, i);
          t.emplace_back(row, col, m(i, j));
        }
      }
    }
  }
  const int n = target == Target::global ? layout_.size() : layout_.local_size();
  SparseMatrix s(n, n);
  s.setFromTriplets(t.begin(), t.end());
  return s;
}

SparseMatrix FlowProblem::assemble_divergence(Target target) const {
  const auto& vs = disc_->velocity();
  const auto& ps = disc_->pressure();
  const int npe = vs.nodes_per_element();
  const int npp = ps.nodes_per_element();
  std::vector<Eigen::Triplet<double>> t;
  for (int e = 0; e < disc_->num_elements(); ++e) {
    const auto& op = ops_[e];
    for (int c = 0; c < 2; ++c) {
      const Eigen::MatrixXd& dm = c == 0 ? op.div_x : op.div_y;
      for (int j = 0; j < npe; ++j) {
        const int v = target == Target::global
                          ? layout_.velocity_index(c, vs.global_index(e, j))
                          : layout_.local_velocity_index(c, e, j);
        for (int k = 0; k < npp; ++k) {
          const int p = target == Target::global
                            ? layout_.pressure_index(ps.global_index(e, k))
                            : layout_.local_pressure_index(e, k);
          t.emplace_back(p, v, -dm(k, j));
          t.emplace_back(v, p, -dm(k, j));
        }
      }
    }
  }
  const int n = target == Target::global ? layout_.size() : layout_.local_size();
  SparseMatrix s(n, n);
  s.setFromTriplets(t.begin(), t.end());
  return s;
}

Eigen::VectorXd FlowProblem::assemble_load(Target target,
                                           const VectorFunction& body_force) const {
  const auto& d = *disc_;
  const auto& vs = d.velocity();
  const int n = target == Target::global ? layout_.size() : layout_.local_size();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  auto index = [&](int c, int e, int l) {
    return target == Target::global ? layout_.velocity_index(c, vs.global_index(e, l))
                                    : layout_.local_velocity_index(c, e, l);
  };
  if (body_force) {
    for (int e = 0; e < d.num_elements(); ++e) {
      const auto& g = d.geometry(e);
      Eigen::VectorXd fx(g.x.size()), fy(g.x.size());
      for (Eigen::Index q = 0; q < g.x.size(); ++q) {
        const Eigen::Vector2d v = body_force(g.x[q], g.y[q]);
        fx[q] = g.jw[q] * v.x();
        fy[q] = g.jw[q] * v.y();
      }
      const Eigen::VectorXd lx = ops_[e].basis.transpose() * fx;
      const Eigen::VectorXd ly = ops_[e].basis.transpose() * fy;
      for (int l = 0; l < vs.nodes_per_element(); ++l) {
        f[index(0, e, l)] += lx[l];
        f[index(1, e, l)] += ly[l];
      }
    }
  }
  const auto& rule = d.quadrature();
  const Eigen::MatrixXd& b1 = vs.basis_at_quadrature();
  for (const auto& be : d.mesh().boundary()) {
    if (be.kind != BoundaryKind::neumann) continue;
    auto it = bc_.neumann.find(be.label);
    if (it == bc_.neumann.end()) continue;
    const auto [va, vb] = d.mesh().edge_vertices(be.element, be.local_edge);
    const Eigen::Vector2d xa = d.mesh().vertices()[va], xb = d.mesh().vertices()[vb];
    const double half_length = 0.5 * (xb - xa).norm();
    const auto nodes = vs.edge_nodes(be.local_edge);
    for (Eigen::Index a = 0; a < rule.nodes.size(); ++a) {
      const double t = rule.nodes[a];
      const Eigen::Vector2d x = 0.5 * (1 - t) * xa + 0.5 * (1 + t) * xb;
      const Eigen::Vector2d h = it->second(x.x(), x.y());
      for (std::size_t m = 0; m < nodes.size(); ++m) {
        const double w = rule.weights[a] * half_length * b1(a, static_cast<Eigen::Index>(m));
        f[index(0, be.element, nodes[m])] += w * h.x();
        f[index(1, be.element, nodes[m])] += w * h.y();
      }
    }
  }
  return f;
}

SparseMatrix FlowProblem::viscous() const {
  return assemble_velocity(Target::global, [this](int e) { return ops_[e].stiffness; });
}

SparseMatrix FlowProblem::local_viscous() const {
  return assemble_velocity(Target::local, [this](int e) { return ops_[e].stiffness; });
}

SparseMatrix FlowProblem::divergence_coupling() const {
  return assemble_divergence(Target::global);
}

SparseMatrix FlowProblem::local_divergence_coupling() const {
  return assemble_divergence(Target::local);
}

FieldState FlowProblem::physical_velocity(const FieldState& w) const {
  if (w.components != 2) throw InvalidArgument("advecting field must have 2 components");
  switch (w.level) {
    case Level::physical:
      if (w.values.size() != disc_->physical_size(2)) {
        throw StructuralError("advecting field has wrong physical size");
      }
      return w;
    case Level::local: return to_physical(*disc_, disc_->velocity(), w);
    case Level::global:
      return to_physical(*disc_, disc_->velocity(), semrom::scatter(disc_->velocity(), w));
  }
  return w;
}

FieldState FlowProblem::physical_velocity_of(const Eigen::VectorXd& system) const {
  return physical_velocity(layout_.velocity(system));
}

namespace {

Eigen::MatrixXd advection_element(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& gx,
                                  const Eigen::MatrixXd& gy, const Eigen::VectorXd& jw,
                                  const double* wx, const double* wy) {
  const Eigen::Index nqe = jw.size();
  Eigen::Map<const Eigen::VectorXd> ux(wx, nqe), uy(wy, nqe);
  const Eigen::VectorXd cx = jw.cwiseProduct(ux);
  const Eigen::VectorXd cy = jw.cwiseProduct(uy);
  return basis.transpose() * (cx.asDiagonal() * gx + cy.asDiagonal() * gy);
}

}  // namespace

SparseMatrix FlowProblem::advection(const FieldState& w) const {
  const FieldState phys = physical_velocity(w);
  const int nqe = disc_->points_per_element();
  const int ne = disc_->num_elements();
  return assemble_velocity(Target::global, [&](int e) {
    const auto& op = ops_[e];
    return advection_element(op.basis, op.grad_x, op.grad_y, disc_->geometry(e).jw,
                             phys.values.data() + e * nqe,
                             phys.values.data() + (ne + e) * nqe);
  });
}

SparseMatrix FlowProblem::local_advection(const FieldState& w) const {
  const FieldState phys = physical_velocity(w);
  const int nqe = disc_->points_per_element();
  const int ne = disc_->num_elements();
  return assemble_velocity(Target::local, [&](int e) {
    const auto& op = ops_[e];
    return advection_element(op.basis, op.grad_x, op.grad_y, disc_->geometry(e).jw,
                             phys.values.data() + e * nqe,
                             phys.values.data() + (ne + e) * nqe);
  });
}

SparseMatrix FlowProblem::local_velocity_mass() const {
  return assemble_velocity(Target::local, [this](int e) {
    const auto& op = ops_[e];
    return Eigen::MatrixXd(op.basis.transpose() * disc_->geometry(e).jw.asDiagonal() *
                           op.basis);
  });
}

Eigen::VectorXd FlowProblem::local_mass_weights() const {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(layout_.local_size());
  for (int e = 0; e < disc_->num_elements(); ++e) {
    const auto& op = ops_[e];
    const auto& jw = disc_->geometry(e).jw;
    const Eigen::VectorXd vw = op.basis.transpose() * jw;
    const Eigen::VectorXd pw = op.pbasis.transpose() * jw;
    for (Eigen::Index l = 0; l < vw.size(); ++l) {
      for (int c = 0; c < 2; ++c) w[layout_.local_velocity_index(c, e, static_cast<int>(l))] = vw[l];
    }
    for (Eigen::Index l = 0; l < pw.size(); ++l) {
      w[layout_.local_pressure_index(e, static_cast<int>(l))] = pw[l];
    }
  }
  return w;
}

Eigen::VectorXd FlowProblem::load(const VectorFunction& body_force) const {
  return assemble_load(Target::global, body_force);
}

Eigen::VectorXd FlowProblem::local_load(const VectorFunction& body_force) const {
  return assemble_load(Target::local, body_force);
}

BlockSystem FlowProblem::make_block_system(const SparseMatrix& matrix,
                                           const Eigen::VectorXd& rhs) const {
  const int n = layout_.size();
  if (matrix.rows() != n || matrix.cols() != n || rhs.size() != n) {
    throw StructuralError("block system: matrix/rhs do not match the layout");
  }
  BlockSystem sys;
  sys.system_size = n;
  sys.dirichlet = dirichlet_;
  // group: 0 = v_bnd, 1 = p, 2 = v_int, -1 = Dirichlet
  std::vector<int> group(n, -1), pos(n, -1);
  std::vector<char> is_fixed(n, 0);
  for (int i : dirichlet_) is_fixed[i] = 1;
  const int nb = layout_.num_velocity_boundary();
  const int np = layout_.num_pressure();
  for (int i = 0; i < n; ++i) {
    if (is_fixed[i]) continue;
    if (i < nb) {
      group[i] = 0;
      pos[i] = static_cast<int>(sys.bnd_free.size());
      sys.bnd_free.push_back(i);
    } else if (i < nb + np) {
      group[i] = 1;
      pos[i] = static_cast<int>(sys.pressure.size());
      sys.pressure.push_back(i);
    } else {
      group[i] = 2;
      pos[i] = static_cast<int>(sys.interior.size());
      sys.interior.push_back(i);
    }
  }
  sys.dirichlet_values.resize(static_cast<Eigen::Index>(dirichlet_.size()));
  for (std::size_t i = 0; i < dirichlet_.size(); ++i) {
    sys.dirichlet_values[i] = dirichlet_lift_[dirichlet_[i]];
  }

  using T = std::vector<Eigen::Triplet<double>>;
  T ta, tb, tbt, tc, tdb, tdi;
  for (int col = 0; col < matrix.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(matrix, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      const int gr = group[r], gc = group[c];
      if (gr < 0 || gc < 0) continue;
      const double v = it.value();
      if (gr == 0 && gc == 0) ta.emplace_back(pos[r], pos[c], v);
      else if (gr == 0 && gc == 2) tb.emplace_back(pos[r], pos[c], v);
      else if (gr == 2 && gc == 0) tbt.emplace_back(pos[r], pos[c], v);
      else if (gr == 2 && gc == 2) tc.emplace_back(pos[r], pos[c], v);
      else if (gr == 1 && gc == 0) tdb.emplace_back(pos[r], pos[c], -v);
      else if (gr == 1 && gc == 2) tdi.emplace_back(pos[r], pos[c], -v);
    }
  }
  const auto nbf = static_cast<Eigen::Index>(sys.bnd_free.size());
  const auto npr = static_cast<Eigen::Index>(sys.pressure.size());
  const auto nin = static_cast<Eigen::Index>(sys.interior.size());
  auto build = [](Eigen::Index r, Eigen::Index c, const T& t) {
    SparseMatrix m(r, c);
    m.setFromTriplets(t.begin(), t.end());
    return m;
  };
  sys.A = build(nbf, nbf, ta);
  sys.B = build(nbf, nin, tb);
  sys.Bt = build(nin, nbf, tbt);
  sys.C = build(nin, nin, tc);
  sys.D_bnd = build(npr, nbf, tdb);
  sys.D_int = build(npr, nin, tdi);

  const Eigen::VectorXd reduced = rhs - matrix * dirichlet_lift_;
  sys.f_bnd.resize(nbf);
  sys.f_p.resize(npr);
  sys.f_int.resize(nin);
  for (Eigen::Index i = 0; i < nbf; ++i) sys.f_bnd[i] = reduced[sys.bnd_free[i]];
  for (Eigen::Index i = 0; i < npr; ++i) sys.f_p[i] = reduced[sys.pressure[i]];
  for (Eigen::Index i = 0; i < nin; ++i) sys.f_int[i] = reduced[sys.interior[i]];

  sys.pin_pressure_mean = !has_neumann_;
  sys.pressure_mass = pressure_mass_;
  return sys;
}

// ---------------------------------------------------------------------------

BlockSystem assemble_oseen(const FlowProblem& problem, const FieldState& u_k,
                           const FlowParameters& params) {
  params.validate();
  SparseMatrix m = params.nu * problem.viscous();
  m += problem.advection(u_k);
  m += problem.divergence_coupling();
  return problem.make_block_system(m, problem.load(params.body_force));
}

BlockSolution solve_block(const BlockSystem& s) {
  const Eigen::Index nb = s.A.rows(), np = s.D_bnd.rows(), ni = s.C.rows();
  const Eigen::Index extra = s.pin_pressure_mean ? 1 : 0;
  const Eigen::Index n = nb + np + ni + extra;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(s.A.nonZeros() + s.B.nonZeros() + s.Bt.nonZeros() +
                                     s.C.nonZeros() + 2 * s.D_bnd.nonZeros() +
                                     2 * s.D_int.nonZeros() + 2 * np));
  auto put = [&t](const SparseMatrix& m, Eigen::Index r0, Eigen::Index c0, double scale,
                  bool transpose) {
    for (int k = 0; k < m.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
        const Eigen::Index r = transpose ? it.col() : it.row();
        const Eigen::Index c = transpose ? it.row() : it.col();
        t.emplace_back(r0 + r, c0 + c, scale * it.value());
      }
    }
  };
  put(s.A, 0, 0, 1.0, false);
  put(s.D_bnd, 0, nb, -1.0, true);
  put(s.B, 0, nb + np, 1.0, false);
  put(s.D_bnd, nb, 0, -1.0, false);
  put(s.D_int, nb, nb + np, -1.0, false);
  put(s.Bt, nb + np, 0, 1.0, false);
  put(s.D_int, nb + np, nb, -1.0, true);
  put(s.C, nb + np, nb + np, 1.0, false);
  if (extra) {
    for (Eigen::Index k = 0; k < np; ++k) {
      const double m = s.pressure_mass[k];
      t.emplace_back(n - 1, nb + k, m);
      t.emplace_back(nb + k, n - 1, m);
    }
  }
  SparseMatrix k(n, n);
  k.setFromTriplets(t.begin(), t.end());
  k.makeCompressed();

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs.segment(0, nb) = s.f_bnd;
  rhs.segment(nb, np) = s.f_p;
  rhs.segment(nb + np, ni) = s.f_int;

  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(k);
  if (lu.info() != Eigen::Success) {
    throw SolverError("block solve: sparse LU factorization failed (" + lu.lastErrorMessage() +
                          "); system of size " + std::to_string(n) + " is singular",
                      std::numeric_limits<double>::infinity());
  }
  Eigen::VectorXd x = lu.solve(rhs);
  const double rhs_norm = rhs.norm();
  auto residual = [&](const Eigen::VectorXd& y) {
    const double r = (k * y - rhs).norm();
    return rhs_norm > 0.0 ? r / rhs_norm : r;
  };
  double rel = residual(x);
  for (int refine = 0; refine < 2 && rel > 1e-12; ++refine) {
    x += lu.solve(rhs - k * x);
    rel = residual(x);
  }
  if (!std::isfinite(rel) || rel > 1e-10) {
    // |x| |K| / |b| bounds the condition number from below.
    const double cond_hint =
        rhs_norm > 0.0 ? x.norm() * k.cwiseAbs().toDense().colwise().sum().maxCoeff() / rhs_norm
                       : std::numeric_limits<double>::infinity();
    std::ostringstream msg;
    msg << "block solve: relative residual " << rel << " exceeds 1e-10 (condition >= "
        << cond_hint << ")";
    throw SolverError(msg.str(), cond_hint);
  }
  BlockSolution sol;
  sol.v_bnd = x.segment(0, nb);
  sol.p = x.segment(nb, np);
  sol.v_int = x.segment(nb + np, ni);
  sol.relative_residual = rel;
  return sol;
}

SteadySolution solve_linearized(const FlowProblem& problem, const FieldState& u_k,
                                const FlowParameters& params) {
  const BlockSystem sys = assemble_oseen(problem, u_k, params);
  const BlockSolution bs = solve_block(sys);
  SteadySolution out;
  out.state = sys.expand(bs.v_bnd, bs.p, bs.v_int);
  out.velocity = problem.layout().velocity(out.state);
  out.pressure = problem.layout().pressure(out.state);
  out.nu = params.nu;
  out.signature = problem.discretization().signature();
  return out;
}

SteadySolution oseen_iterate(const FlowProblem& problem, const FlowParameters& params,
                             double tol, int max_iter,
                             const std::optional<FieldState>& initial_guess) {
  if (!(tol > 0.0)) throw InvalidArgument("oseen_iterate: tolerance must be positive");
  if (max_iter < 1) throw InvalidArgument("oseen_iterate: max_iter must be >= 1");
  const auto& disc = problem.discretization();
  const auto& guess = initial_guess ? initial_guess : problem.boundary_conditions().initial_guess;

  FieldState u;
  if (guess) {
    u = *guess;
  } else {
    const int ng = disc.velocity().num_global();
    FieldState zero{Level::global, 2, Eigen::VectorXd::Zero(2 * ng)};
    u = solve_linearized(problem, zero, params).velocity;
  }
  auto norm = [&](const FieldState& f) {
    return l2_norm(disc, problem.physical_velocity(f));
  };
  if (u.level != Level::global || u.components != 2 ||
      u.values.size() != 2 * disc.velocity().num_global()) {
    throw InvalidArgument("oseen_iterate: initial guess must be a global velocity field");
  }
  const double norm0 = norm(u);
  std::vector<double> history;
  for (int k = 1; k <= max_iter; ++k) {
    SteadySolution next = solve_linearized(problem, u, params);
    const double n_next = norm(next.velocity);
    FieldState delta = next.velocity;
    delta.values -= u.values;
    const double change_abs = norm(delta);
    const double change = n_next > 0.0 ? change_abs / n_next : change_abs;
    history.push_back(change);
    if (!std::isfinite(change) || !std::isfinite(n_next)) {
      throw ConvergenceError("oseen_iterate: non-finite iterate at nu=" +
                                 std::to_string(params.nu),
                             history);
    }
    if (norm0 > 0.0 && n_next > 1e3 * norm0) {
      throw ConvergenceError("oseen_iterate: iterate norm grew by more than 1e3 at nu=" +
                                 std::to_string(params.nu),
                             history);
    }
    u = next.velocity;
    if (change < tol) {
      next.history = std::move(history);
      next.iterations = k;
      next.converged = true;
      return next;
    }
  }
  throw ConvergenceError("oseen_iterate: no convergence in " + std::to_string(max_iter) +
                             " iterations at nu=" + std::to_string(params.nu),
                         history);
}

SweepResult continuation_sweep(const FlowProblem& problem,
                               const std::vector<double>& nu_descending,
                               const FlowParameters& base, double tol, int max_iter) {
  if (nu_descending.empty()) throw InvalidArgument("continuation_sweep: empty viscosity list");
  for (std::size_t i = 1; i < nu_descending.size(); ++i) {
    if (!(nu_descending[i] < nu_descending[i - 1])) {
      throw InvalidArgument("continuation_sweep: viscosities must be strictly descending");
    }
  }
  SweepResult result;
  std::optional<FieldState> warm;
  for (double nu : nu_descending) {
    FlowParameters params = base;
    params.nu = nu;
    try {
      SteadySolution s = oseen_iterate(problem, params, tol, max_iter, warm);
      warm = s.velocity;
      result.solutions.push_back(std::move(s));
    } catch (const Error& e) {
      result.failed_nu = nu;
      result.failure = e.what();
      break;
    }
  }
  return result;
}

double relative_velocity_error(const FlowProblem& problem, const Eigen::VectorXd& approx,
                               const Eigen::VectorXd& reference) {
  const auto& disc = problem.discretization();
  FieldState d = problem.physical_velocity_of(approx - reference);
  const double ref = l2_norm(disc, problem.physical_velocity_of(reference));
  const double err = l2_norm(disc, d);
  return ref > 0.0 ? err / ref : err;
}

std::vector<double> log_spaced_descending(double lo, double hi, int count) {
  if (count < 1 || !(lo > 0.0) || !(hi >= lo)) {
    throw InvalidArgument("log spacing needs 0 < lo <= hi and count >= 1");
  }
  std::vector<double> v(count);
  if (count == 1) {
    v[0] = hi;
    return v;
  }
  const double a = std::log(hi), b = std::log(lo);
  for (int i = 0; i < count; ++i) v[i] = std::exp(a + (b - a) * i / (count - 1));
  v.front() = hi;
  v.back() = lo;
  return v;
}

}  // namespace semrom
