#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace semrom {

enum class BoundaryKind { dirichlet, neumann };

std::string to_string(BoundaryKind kind);
BoundaryKind boundary_kind_from_string(const std::string& text);

/// Tagged boundary edge. `local_edge` follows the reference-square edge
/// numbering: 0 (eta=-1), 1 (xi=+1), 2 (eta=+1), 3 (xi=-1).
struct BoundaryEdge {
  int element = -1;
  int local_edge = -1;
  BoundaryKind kind = BoundaryKind::dirichlet;
  std::string label;
};

/// Conforming quadrilateral mesh with bilinear element maps.
///
/// Elements list their four vertices counter-clockwise. Every edge used by a
/// single element must carry a boundary tag; every other edge is shared by
/// exactly two elements.
class Mesh {
 public:
  Mesh() = default;
  Mesh(std::vector<Eigen::Vector2d> vertices,
       std::vector<std::array<int, 4>> elements,
       std::vector<BoundaryEdge> boundary);

  const std::vector<Eigen::Vector2d>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 4>>& elements() const { return elements_; }
  const std::vector<BoundaryEdge>& boundary() const { return boundary_; }
  int num_elements() const { return static_cast<int>(elements_.size()); }

  /// Element across `local_edge`, or -1 on the domain boundary.
  int neighbour(int element, int local_edge) const {
    return neighbours_[element][local_edge];
  }

  /// Vertex indices (start, end) of a local edge in counter-clockwise order.
  std::array<int, 2> edge_vertices(int element, int local_edge) const;

  /// Stable 64-bit signature of the geometry and tags.
  std::uint64_t signature() const;

  /// Mesh with elements reordered: new element k is old element order[k].
  Mesh permuted(const std::vector<int>& order) const;

 private:
  void build_connectivity();

  std::vector<Eigen::Vector2d> vertices_;
  std::vector<std::array<int, 4>> elements_;
  std::vector<BoundaryEdge> boundary_;
  std::vector<std::array<int, 4>> neighbours_;
};

/// Straight channel [0, length] x [0, height]: `inflow` on x=0, `outflow`
/// (Neumann) on x=length, `wall` elsewhere.
Mesh make_channel_mesh(double length, double height, int nx, int ny);

/// Sudden-expansion channel inside [0, length] x [0, 1]: an inlet duct
/// x in [0, inlet_length], y in [1/3, 2/3] opening into the full-height
/// channel. Labels as for the straight channel.
Mesh make_expansion_mesh(double length, double inlet_length, int nx_inlet,
                         int nx_main, int ny_per_third);

/// Single affine element [0, sx] x [0, sy] with all edges Dirichlet.
Mesh make_rectangle_mesh(double x0, double x1, double y0, double y1, int nx,
                         int ny, const std::string& label = "wall");

/// Plain-text mesh format:
///
///     vertices <n>
///     <x> <y>            (n lines)
///     elements <m>
///     <v0> <v1> <v2> <v3> (m lines, counter-clockwise)
///     boundary <k>
///     <va> <vb> <dirichlet|neumann> <label>   (k lines)
///
/// Blank lines and lines starting with '#' are ignored.
Mesh read_mesh(std::istream& in);
Mesh read_mesh_file(const std::string& path);
void write_mesh(std::ostream& out, const Mesh& mesh);

}  // namespace semrom
