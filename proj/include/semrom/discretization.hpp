#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "semrom/mesh.hpp"
#include "semrom/quadrature.hpp"

namespace semrom {

/// The three representations a discrete field can live in.
///   global   - one value per assembled (continuous) degree of freedom
///   local    - per-element copies; shared edge values appear repeatedly
///   physical - values at the element quadrature points
enum class Level { global, local, physical };

/// Field values at one level. Components are stored one after another
/// (component-major), each block laid out element by element.
struct FieldState {
  Level level = Level::global;
  int components = 1;
  Eigen::VectorXd values;
};

/// Geometric factors of one element at its quadrature points, indexed
/// a + nq * b for reference coordinates (xi_a, eta_b).
struct ElementGeometry {
  Eigen::VectorXd x, y;
  Eigen::VectorXd jac;     ///< det J
  Eigen::VectorXd jw;      ///< w_a w_b det J
  Eigen::VectorXd dxi_dx, dxi_dy, deta_dx, deta_dy;
};

/// Continuous nodal Q_p space on GLL nodes of a mesh.
///
/// Global numbering: mesh vertices first, then edge-interior nodes, then
/// element-interior nodes, so element-boundary unknowns precede interior ones.
class NodalSpace {
 public:
  NodalSpace(const Mesh& mesh, int order, const Eigen::VectorXd& quad_nodes);

  int order() const { return order_; }
  int nodes_per_element() const { return (order_ + 1) * (order_ + 1); }
  int num_elements() const { return num_elements_; }
  int num_global() const { return num_global_; }
  int local_size() const { return num_elements_ * nodes_per_element(); }

  int global_index(int element, int local) const {
    return local_to_global_[element * nodes_per_element() + local];
  }
  const std::vector<int>& local_to_global() const { return local_to_global_; }
  int multiplicity(int global) const { return multiplicity_[global]; }
  bool on_element_boundary(int global) const { return global < num_boundary_; }
  int num_element_boundary() const { return num_boundary_; }

  const ReferenceElement& reference() const { return ref_; }
  /// 1D nodal basis and its derivative sampled at the quadrature points.
  const Eigen::MatrixXd& basis_at_quadrature() const { return basis_q_; }
  const Eigen::MatrixXd& deriv_at_quadrature() const { return deriv_q_; }

  /// Local node indices lying on a reference edge, in edge-parameter order.
  std::vector<int> edge_nodes(int local_edge) const;

 private:
  int order_;
  int num_elements_;
  int num_global_ = 0;
  int num_boundary_ = 0;
  ReferenceElement ref_;
  Eigen::MatrixXd basis_q_, deriv_q_;
  std::vector<int> local_to_global_;
  std::vector<int> multiplicity_;
};

/// Mesh + quadrature + the velocity space (degree P) and the pressure space
/// (degree P-1, only when P >= 2).
class Discretization {
 public:
  /// `quad_points` = points per direction; 0 selects P+1 (collocation).
  Discretization(Mesh mesh, int order, int quad_points = 0);

  const Mesh& mesh() const { return mesh_; }
  int order() const { return order_; }
  int quad_points() const { return static_cast<int>(quad_.nodes.size()); }
  int points_per_element() const { return quad_points() * quad_points(); }
  int num_elements() const { return mesh_.num_elements(); }
  const QuadratureRule& quadrature() const { return quad_; }
  const ElementGeometry& geometry(int element) const { return geometry_[element]; }

  const NodalSpace& velocity() const { return velocity_; }
  const NodalSpace& pressure() const;
  bool has_pressure() const { return pressure_.has_value(); }

  Eigen::Vector2d map_point(int element, double xi, double eta) const;
  Eigen::Matrix2d jacobian(int element, double xi, double eta) const;

  /// Global coordinates of every node of a space.
  std::vector<Eigen::Vector2d> node_coordinates(const NodalSpace& space) const;

  /// Hash of mesh, order and quadrature; identifies compatible archives.
  std::uint64_t signature() const;

  int physical_size(int components) const {
    return components * num_elements() * points_per_element();
  }

 private:
  Mesh mesh_;
  int order_;
  QuadratureRule quad_;
  std::vector<ElementGeometry> geometry_;
  NodalSpace velocity_;
  std::optional<NodalSpace> pressure_;
};

enum class GatherMode {
  sum,      ///< transpose of scatter (residual assembly)
  average,  ///< mean over copies (solution restriction)
};

FieldState scatter(const NodalSpace& space, const FieldState& global);
FieldState gather(const NodalSpace& space, const FieldState& local, GatherMode mode);

/// Evaluates a local-level field at every quadrature point.
FieldState to_physical(const Discretization& disc, const NodalSpace& space,
                       const FieldState& local);

/// Sum over elements and quadrature points of w |J| a b, summed over components.
double integrate_l2(const Discretization& disc, const FieldState& a,
                    const FieldState& b);

/// L2 norm of a physical-level field.
double l2_norm(const Discretization& disc, const FieldState& a);

using PointFunction = std::function<double(int component, double x, double y)>;

/// Nodal interpolant at the global level.
FieldState interpolate(const Discretization& disc, const NodalSpace& space,
                       int components, const PointFunction& f);

/// Samples a function at every quadrature point.
FieldState sample_physical(const Discretization& disc, int components,
                           const PointFunction& f);

}  // namespace semrom
