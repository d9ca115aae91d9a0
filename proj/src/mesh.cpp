#include "semrom/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "semrom/error.hpp"

namespace semrom {

std::string to_string(BoundaryKind kind) {
  return kind == BoundaryKind::dirichlet ? "dirichlet" : "neumann";
}

BoundaryKind boundary_kind_from_string(const std::string& text) {
  if (text == "dirichlet") return BoundaryKind::dirichlet;
  if (text == "neumann") return BoundaryKind::neumann;
  throw InvalidArgument("unknown boundary kind '" + text + "'");
}

Mesh::Mesh(std::vector<Eigen::Vector2d> vertices,
           std::vector<std::array<int, 4>> elements,
           std::vector<BoundaryEdge> boundary)
    : vertices_(std::move(vertices)),
      elements_(std::move(elements)),
      boundary_(std::move(boundary)) {
  build_connectivity();
}

std::array<int, 2> Mesh::edge_vertices(int element, int local_edge) const {
  const auto& v = elements_.at(element);
  return {v[local_edge], v[(local_edge + 1) % 4]};
}

void Mesh::build_connectivity() {
  const int nv = static_cast<int>(vertices_.size());
  for (const auto& el : elements_) {
    for (int v : el) {
      if (v < 0 || v >= nv) throw StructuralError("element vertex index out of range");
    }
  }
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> edges;
  for (int e = 0; e < num_elements(); ++e) {
    for (int k = 0; k < 4; ++k) {
      auto [a, b] = edge_vertices(e, k);
      if (a == b) throw StructuralError("degenerate element edge");
      edges[{std::min(a, b), std::max(a, b)}].push_back({e, k});
    }
  }
  neighbours_.assign(elements_.size(), {-1, -1, -1, -1});
  std::map<std::pair<int, int>, int> tagged;
  for (std::size_t i = 0; i < boundary_.size(); ++i) {
    const auto& be = boundary_[i];
    if (be.element < 0 || be.element >= num_elements() || be.local_edge < 0 ||
        be.local_edge > 3) {
      throw StructuralError("boundary tag refers to a missing element edge");
    }
    auto [a, b] = edge_vertices(be.element, be.local_edge);
    if (!tagged.emplace(std::make_pair(std::min(a, b), std::max(a, b)),
                        static_cast<int>(i))
             .second) {
      throw StructuralError("boundary edge tagged twice");
    }
  }
  for (const auto& [key, users] : edges) {
    if (users.size() == 2) {
      if (tagged.count(key)) {
        throw StructuralError("interior edge " + std::to_string(key.first) + "-" +
                              std::to_string(key.second) + " carries a boundary tag");
      }
      neighbours_[users[0].first][users[0].second] = users[1].first;
      neighbours_[users[1].first][users[1].second] = users[0].first;
    } else if (users.size() == 1) {
      if (!tagged.count(key)) {
        throw StructuralError("boundary edge " + std::to_string(key.first) + "-" +
                              std::to_string(key.second) + " has no tag");
      }
    } else {
      throw StructuralError("edge shared by more than two elements");
    }
  }
}

std::uint64_t Mesh::signature() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& v : vertices_) {
    mix(&v[0], sizeof(double));
    mix(&v[1], sizeof(double));
  }
  for (const auto& el : elements_) mix(el.data(), sizeof(int) * 4);
  for (const auto& be : boundary_) {
    mix(&be.element, sizeof(int));
    mix(&be.local_edge, sizeof(int));
    const int kind = static_cast<int>(be.kind);
    mix(&kind, sizeof(int));
    mix(be.label.data(), be.label.size());
  }
  return h;
}

Mesh Mesh::permuted(const std::vector<int>& order) const {
  if (order.size() != elements_.size()) {
    throw StructuralError("permutation size does not match element count");
  }
  std::vector<int> new_index(order.size(), -1);
  std::vector<std::array<int, 4>> elements(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    elements[k] = elements_.at(order[k]);
    new_index.at(order[k]) = static_cast<int>(k);
  }
  std::vector<BoundaryEdge> boundary = boundary_;
  for (auto& be : boundary) be.element = new_index.at(be.element);
  return Mesh(vertices_, std::move(elements), std::move(boundary));
}

namespace {

using LabelFn = std::function<std::pair<BoundaryKind, std::string>(
    const Eigen::Vector2d&, const Eigen::Vector2d&)>;

/// Tensor grid of vertices with an element mask; boundary edges are labelled
/// from their end points.
Mesh build_structured(const std::vector<double>& xs, const std::vector<double>& ys,
                      const std::function<bool(int, int)>& keep,
                      const LabelFn& label) {
  const int nx = static_cast<int>(xs.size()) - 1;
  const int ny = static_cast<int>(ys.size()) - 1;
  std::vector<int> vid((nx + 1) * (ny + 1), -1);
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 4>> elements;
  auto vertex = [&](int i, int j) {
    int& id = vid[i + (nx + 1) * j];
    if (id < 0) {
      id = static_cast<int>(vertices.size());
      vertices.emplace_back(xs[i], ys[j]);
    }
    return id;
  };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (!keep(i, j)) continue;
      elements.push_back(
          {vertex(i, j), vertex(i + 1, j), vertex(i + 1, j + 1), vertex(i, j + 1)});
    }
  }
  std::map<std::pair<int, int>, int> count;
  for (const auto& el : elements) {
    for (int k = 0; k < 4; ++k) {
      const int a = el[k], b = el[(k + 1) % 4];
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::vector<BoundaryEdge> boundary;
  for (int e = 0; e < static_cast<int>(elements.size()); ++e) {
    for (int k = 0; k < 4; ++k) {
      const int a = elements[e][k], b = elements[e][(k + 1) % 4];
      if (count[{std::min(a, b), std::max(a, b)}] != 1) continue;
      auto [kind, name] = label(vertices[a], vertices[b]);
      boundary.push_back({e, k, kind, name});
    }
  }
  return Mesh(std::move(vertices), std::move(elements), std::move(boundary));
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> x(n + 1);
  for (int i = 0; i <= n; ++i) x[i] = a + (b - a) * i / n;
  x[n] = b;
  return x;
}

LabelFn channel_labels(double length) {
  return [length](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    if (a.x() == 0.0 && b.x() == 0.0) {
      return std::make_pair(BoundaryKind::dirichlet, std::string("inflow"));
    }
    if (a.x() == length && b.x() == length) {
      return std::make_pair(BoundaryKind::neumann, std::string("outflow"));
    }
    return std::make_pair(BoundaryKind::dirichlet, std::string("wall"));
  };
}

}  // namespace

Mesh make_channel_mesh(double length, double height, int nx, int ny) {
  if (nx < 1 || ny < 1 || length <= 0 || height <= 0) {
    throw InvalidArgument("channel mesh: invalid size");
  }
  return build_structured(linspace(0.0, length, nx), linspace(0.0, height, ny),
                          [](int, int) { return true; }, channel_labels(length));
}

Mesh make_expansion_mesh(double length, double inlet_length, int nx_inlet,
                         int nx_main, int ny_per_third) {
  if (nx_inlet < 1 || nx_main < 1 || ny_per_third < 1 || inlet_length <= 0 ||
      length <= inlet_length) {
    throw InvalidArgument("expansion mesh: invalid size");
  }
  auto xs = linspace(0.0, inlet_length, nx_inlet);
  auto xm = linspace(inlet_length, length, nx_main);
  xs.insert(xs.end(), xm.begin() + 1, xm.end());
  std::vector<double> ys;
  for (int part = 0; part < 3; ++part) {
    auto seg = linspace(part / 3.0, (part + 1) / 3.0, ny_per_third);
    ys.insert(ys.end(), part == 0 ? seg.begin() : seg.begin() + 1, seg.end());
  }
  ys.front() = 0.0;
  ys.back() = 1.0;
  auto keep = [=](int i, int j) {
    return i >= nx_inlet || (j >= ny_per_third && j < 2 * ny_per_third);
  };
  return build_structured(xs, ys, keep, channel_labels(length));
}

Mesh make_rectangle_mesh(double x0, double x1, double y0, double y1, int nx,
                         int ny, const std::string& label) {
  return build_structured(
      linspace(x0, x1, nx), linspace(y0, y1, ny), [](int, int) { return true; },
      [label](const Eigen::Vector2d&, const Eigen::Vector2d&) {
        return std::make_pair(BoundaryKind::dirichlet, label);
      });
}

Mesh read_mesh(std::istream& in) {
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 4>> elements;
  std::vector<std::array<int, 2>> edge_pairs;
  std::vector<std::pair<BoundaryKind, std::string>> edge_tags;

  int line_no = 0;
  std::string line;
  auto next_line = [&]() -> std::istringstream {
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return std::istringstream(line);
    }
    throw ParseError("mesh: unexpected end of file after line " +
                         std::to_string(line_no),
                     static_cast<std::size_t>(line_no));
  };
  auto fail = [&](const std::string& what) {
    throw ParseError("mesh line " + std::to_string(line_no) + ": " + what,
                     static_cast<std::size_t>(line_no));
  };
  auto section = [&](const std::string& name) {
    auto ss = next_line();
    std::string word;
    long n = -1;
    if (!(ss >> word >> n) || word != name || n < 0) {
      fail("expected '" + name + " <count>'");
    }
    return n;
  };

  const long nv = section("vertices");
  for (long i = 0; i < nv; ++i) {
    auto ss = next_line();
    double x, y;
    if (!(ss >> x >> y)) fail("expected two vertex coordinates");
    vertices.emplace_back(x, y);
  }
  const long ne = section("elements");
  for (long i = 0; i < ne; ++i) {
    auto ss = next_line();
    std::array<int, 4> el{};
    if (!(ss >> el[0] >> el[1] >> el[2] >> el[3])) fail("expected four vertex ids");
    for (int v : el) {
      if (v < 0 || v >= nv) fail("vertex id out of range");
    }
    elements.push_back(el);
  }
  const long nb = section("boundary");
  for (long i = 0; i < nb; ++i) {
    auto ss = next_line();
    int a, b;
    std::string kind, label;
    if (!(ss >> a >> b >> kind >> label)) fail("expected '<va> <vb> <kind> <label>'");
    try {
      edge_tags.emplace_back(boundary_kind_from_string(kind), label);
    } catch (const InvalidArgument& e) {
      fail(e.what());
    }
    edge_pairs.push_back({a, b});
  }

  std::map<std::pair<int, int>, std::pair<int, int>> owner;
  for (int e = 0; e < static_cast<int>(elements.size()); ++e) {
    for (int k = 0; k < 4; ++k) {
      const int a = elements[e][k], b = elements[e][(k + 1) % 4];
      owner[{std::min(a, b), std::max(a, b)}] = {e, k};
    }
  }
  std::vector<BoundaryEdge> boundary;
  for (std::size_t i = 0; i < edge_pairs.size(); ++i) {
    const auto [a, b] = edge_pairs[i];
    auto it = owner.find({std::min(a, b), std::max(a, b)});
    if (it == owner.end()) {
      throw StructuralError("boundary edge " + std::to_string(a) + "-" +
                            std::to_string(b) + " is not an element edge");
    }
    boundary.push_back(
        {it->second.first, it->second.second, edge_tags[i].first, edge_tags[i].second});
  }
  return Mesh(std::move(vertices), std::move(elements), std::move(boundary));
}

Mesh read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open mesh file '" + path + "'");
  return read_mesh(in);
}

void write_mesh(std::ostream& out, const Mesh& mesh) {
  out.precision(17);
  out << "vertices " << mesh.vertices().size() << '\n';
  for (const auto& v : mesh.vertices()) out << v.x() << ' ' << v.y() << '\n';
  out << "elements " << mesh.elements().size() << '\n';
  for (const auto& el : mesh.elements()) {
    out << el[0] << ' ' << el[1] << ' ' << el[2] << ' ' << el[3] << '\n';
  }
  out << "boundary " << mesh.boundary().size() << '\n';
  for (const auto& be : mesh.boundary()) {
    const auto [a, b] = mesh.edge_vertices(be.element, be.local_edge);
    out << a << ' ' << b << ' ' << to_string(be.kind) << ' ' << be.label << '\n';
  }
}

}  // namespace semrom
