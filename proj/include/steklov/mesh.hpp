#pragma once

// Planar triangulations, boundary loop extraction and boundary-measure bookkeeping.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "steklov/error.hpp"
#include "steklov/util.hpp"

namespace steklov {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(b.x - a.x, b.y - a.y); }

/// Immutable planar triangulation with a single counterclockwise boundary loop.
///
/// Triangles are stored counterclockwise. boundary_edges()[e] = {a, b} runs from a to b
/// with the domain on the left, and consecutive edges share endpoints, so the loop is
/// closed: boundary_edges().back()[1] == boundary_edges().front()[0].
class Mesh {
 public:
  using Triangle = std::array<int, 3>;
  using Edge = std::array<int, 2>;

  /// Validates the triangulation and reconstructs its boundary from triangle adjacency.
  /// Clockwise triangles are reoriented.
  static Mesh from_arrays(std::vector<Point> vertices, std::vector<Triangle> triangles) {
    Mesh m;
    m.vertices_ = std::move(vertices);
    m.triangles_ = std::move(triangles);
    m.build();
    return m;
  }

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Edge>& boundary_edges() const { return boundary_edges_; }
  const std::vector<double>& edge_lengths() const { return edge_lengths_; }
  const std::vector<Point>& outward_normals() const { return normals_; }
  const std::vector<double>& triangle_areas() const { return areas_; }

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }
  std::size_t num_boundary_edges() const { return boundary_edges_.size(); }

  double perimeter() const { return perimeter_; }
  double area() const { return total_area_; }

  /// Boundary vertices in loop order (start vertex of each boundary edge).
  std::vector<int> boundary_vertices() const {
    std::vector<int> out;
    out.reserve(boundary_edges_.size());
    for (const auto& e : boundary_edges_) out.push_back(e[0]);
    return out;
  }

  Point edge_midpoint(std::size_t e) const {
    const auto& a = vertices_[boundary_edges_[e][0]];
    const auto& b = vertices_[boundary_edges_[e][1]];
    return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
  }

  std::pair<Point, Point> bounding_box() const {
    Point lo{kInf, kInf}, hi{-kInf, -kInf};
    for (const auto& v : vertices_) {
      lo.x = std::min(lo.x, v.x);
      lo.y = std::min(lo.y, v.y);
      hi.x = std::max(hi.x, v.x);
      hi.y = std::max(hi.y, v.y);
    }
    return {lo, hi};
  }

 private:
  Mesh() = default;

  void build() {
    const int nv = static_cast<int>(vertices_.size());
    if (nv < 3 || triangles_.empty()) throw TopologyError("mesh needs at least 3 vertices and 1 triangle");
    const auto [lo, hi] = bounding_box();
    const double bbox_area = (hi.x - lo.x) * (hi.y - lo.y);

    std::vector<char> used(nv, 0);
    areas_.resize(triangles_.size());
    total_area_ = 0.0;
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      auto& tri = triangles_[t];
      for (int v : tri) {
        if (v < 0 || v >= nv)
          throw TopologyError("triangle " + std::to_string(t) + " references missing vertex " + std::to_string(v));
        used[v] = 1;
      }
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
        throw TopologyError("triangle " + std::to_string(t) + " repeats a vertex");
      double a = signed_area(tri);
      if (std::abs(a) <= 1e-14 * bbox_area)
        throw DegenerateTriangleError("triangle " + std::to_string(t) + " has area " + fmt17(a));
      if (a < 0) {
        std::swap(tri[1], tri[2]);
        a = -a;
      }
      areas_[t] = a;
      total_area_ += a;
    }
    for (int v = 0; v < nv; ++v)
      if (!used[v]) throw TopologyError("vertex " + std::to_string(v) + " belongs to no triangle");

    // Undirected edge -> (count, directed orientation seen in the CCW triangle).
    std::map<std::pair<int, int>, std::pair<int, Edge>> edges;
    for (const auto& tri : triangles_) {
      for (int k = 0; k < 3; ++k) {
        const int a = tri[k], b = tri[(k + 1) % 3];
        auto& slot = edges[{std::min(a, b), std::max(a, b)}];
        if (++slot.first > 2)
          throw TopologyError("non-manifold edge (" + std::to_string(a) + ", " + std::to_string(b) + ")");
        slot.second = {a, b};
      }
    }

    std::unordered_map<int, int> next;
    std::size_t n_boundary = 0;
    int start = nv;
    for (const auto& [key, slot] : edges) {
      if (slot.first != 1) continue;
      const auto [a, b] = slot.second;
      if (!next.emplace(a, b).second)
        throw TopologyError("boundary vertex " + std::to_string(a) + " has two outgoing boundary edges");
      start = std::min(start, a);
      ++n_boundary;
    }
    if (n_boundary < 3) throw TopologyError("boundary has fewer than 3 edges");

    boundary_edges_.clear();
    boundary_edges_.reserve(n_boundary);
    int cur = start;
    do {
      auto it = next.find(cur);
      if (it == next.end()) throw TopologyError("open boundary loop at vertex " + std::to_string(cur));
      boundary_edges_.push_back({cur, it->second});
      cur = it->second;
      if (boundary_edges_.size() > n_boundary) throw TopologyError("boundary loop does not close");
    } while (cur != start);
    if (boundary_edges_.size() != n_boundary)
      throw TopologyError("boundary consists of more than one loop");

    edge_lengths_.resize(n_boundary);
    normals_.resize(n_boundary);
    perimeter_ = 0.0;
    for (std::size_t e = 0; e < n_boundary; ++e) {
      const auto& a = vertices_[boundary_edges_[e][0]];
      const auto& b = vertices_[boundary_edges_[e][1]];
      const double len = distance(a, b);
      edge_lengths_[e] = len;
      // Domain lies to the left of a->b, so the outward normal is the tangent rotated clockwise.
      normals_[e] = {(b.y - a.y) / len, -(b.x - a.x) / len};
      perimeter_ += len;
    }
  }

  double signed_area(const Triangle& t) const {
    const auto& a = vertices_[t[0]];
    const auto& b = vertices_[t[1]];
    const auto& c = vertices_[t[2]];
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
  }

  std::vector<Point> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Edge> boundary_edges_;
  std::vector<double> edge_lengths_;
  std::vector<Point> normals_;
  std::vector<double> areas_;
  double perimeter_ = 0.0;
  double total_area_ = 0.0;
};

using MeshPtr = std::shared_ptr<const Mesh>;

inline MeshPtr share(Mesh m) { return std::make_shared<const Mesh>(std::move(m)); }

/// Piecewise-constant data on the boundary loop: one value per edge, weighted by edge length.
class BoundaryFunction {
 public:
  BoundaryFunction(std::vector<double> values, std::vector<double> measures)
      : values_(std::move(values)), measures_(std::move(measures)) {
    if (values_.size() != measures_.size())
      throw InvalidArgument("boundary function: " + std::to_string(values_.size()) + " values for " +
                            std::to_string(measures_.size()) + " measures");
    if (values_.empty()) throw InvalidArgument("boundary function is empty");
    for (double m : measures_)
      if (!(m > 0.0)) throw InvalidArgument("boundary function: nonpositive measure " + fmt17(m));
  }

  BoundaryFunction(const Mesh& mesh, std::vector<double> values)
      : BoundaryFunction(std::move(values), mesh.edge_lengths()) {}

  static BoundaryFunction constant(const Mesh& mesh, double c) {
    return BoundaryFunction(mesh, std::vector<double>(mesh.num_boundary_edges(), c));
  }

  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& measures() const { return measures_; }
  std::size_t size() const { return values_.size(); }
  double total_measure() const { return std::accumulate(measures_.begin(), measures_.end(), 0.0); }

  bool same_support(const BoundaryFunction& other) const { return measures_ == other.measures_; }

  BoundaryFunction scaled(double c) const {
    auto v = values_;
    for (double& x : v) x *= c;
    return {std::move(v), measures_};
  }

  BoundaryFunction positive_part() const {
    auto v = values_;
    for (double& x : v) x = std::max(x, 0.0);
    return {std::move(v), measures_};
  }

 private:
  std::vector<double> values_;
  std::vector<double> measures_;
};

/// Sum of value * measure over the boundary loop.
inline double boundary_integral(const BoundaryFunction& f) {
  double s = 0.0;
  for (std::size_t e = 0; e < f.size(); ++e) s += f.values()[e] * f.measures()[e];
  return s;
}

// ---------------------------------------------------------------------------
// Text format: "nv nt", nv lines "x y", nt lines "i j k" (0-based).

inline Mesh read_mesh(std::istream& in) {
  std::string line;
  int lineno = 0;
  auto next_line = [&](const char* what) -> std::istringstream {
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return std::istringstream(line);
    }
    throw ParseError(std::string("unexpected end of file, expected ") + what, lineno + 1);
  };
  auto expect_end = [&](std::istringstream& ss) {
    std::string rest;
    if (ss >> rest) throw ParseError("trailing token '" + rest + "'", lineno);
  };

  long nv = 0, nt = 0;
  {
    auto ss = next_line("header 'nv nt'");
    if (!(ss >> nv >> nt) || nv <= 0 || nt <= 0) throw ParseError("header must be 'nv nt' with positive counts", lineno);
    expect_end(ss);
  }
  std::vector<Point> vertices(static_cast<std::size_t>(nv));
  for (auto& v : vertices) {
    auto ss = next_line("vertex 'x y'");
    if (!(ss >> v.x >> v.y) || !std::isfinite(v.x) || !std::isfinite(v.y))
      throw ParseError("vertex line must be 'x y'", lineno);
    expect_end(ss);
  }
  std::vector<Mesh::Triangle> triangles(static_cast<std::size_t>(nt));
  for (auto& t : triangles) {
    auto ss = next_line("triangle 'i j k'");
    if (!(ss >> t[0] >> t[1] >> t[2])) throw ParseError("triangle line must be 'i j k'", lineno);
    expect_end(ss);
  }
  return Mesh::from_arrays(std::move(vertices), std::move(triangles));
}

inline Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open mesh file '" + path + "'");
  return read_mesh(in);
}

inline void write_mesh(std::ostream& out, const Mesh& m) {
  out << m.num_vertices() << ' ' << m.num_triangles() << '\n';
  for (const auto& v : m.vertices()) out << fmt17(v.x) << ' ' << fmt17(v.y) << '\n';
  for (const auto& t : m.triangles()) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

// ---------------------------------------------------------------------------
// Built-in structured generators.

namespace detail {

/// Tensor-product triangulation of the grid xs x ys (both strictly increasing).
inline Mesh tensor_rectangle(const std::vector<double>& xs, const std::vector<double>& ys) {
  const int nx = static_cast<int>(xs.size()) - 1, ny = static_cast<int>(ys.size()) - 1;
  if (nx < 1 || ny < 1) throw InvalidArgument("rectangle mesh needs at least one cell per side");
  std::vector<Point> v;
  v.reserve(xs.size() * ys.size());
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) v.push_back({xs[i], ys[j]});
  std::vector<Mesh::Triangle> t;
  t.reserve(2 * static_cast<std::size_t>(nx) * ny);
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      t.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      t.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return Mesh::from_arrays(std::move(v), std::move(t));
}

inline Mesh structured_rectangle(double x0, double x1, double y0, double y1, int nx, int ny) {
  if (nx < 1 || ny < 1) throw InvalidArgument("rectangle mesh needs at least one cell per side");
  std::vector<double> xs(nx + 1), ys(ny + 1);
  for (int i = 0; i <= nx; ++i) xs[i] = x0 + (x1 - x0) * i / nx;
  for (int j = 0; j <= ny; ++j) ys[j] = y0 + (y1 - y0) * j / ny;
  return tensor_rectangle(xs, ys);
}

}  // namespace detail

/// Unit square [0,1]^2 with n edges per side.
inline Mesh make_square(int n) { return detail::structured_rectangle(0.0, 1.0, 0.0, 1.0, n, n); }

/// Box (-R, R) x (0, 2R) with nx edges along x and ny along y. The bottom side is the
/// set where the box weights are supported; nx must be even so x = 0 is a vertex.
inline Mesh make_box(double R, int nx, int ny = 0) {
  if (!(R > 0)) throw InvalidArgument("box half-width must be positive");
  if (nx % 2 != 0) throw InvalidArgument("box mesh needs an even number of edges along x");
  return detail::structured_rectangle(-R, R, 0.0, 2 * R, nx, ny > 0 ? ny : nx);
}

/// Box (-R, R) x (0, 2R) graded toward the point (0, 0): x = R sign(s)|s|^kappa and
/// y = 2R t^kappa for uniform s in [-1, 1], t in [0, 1]. kappa = 1 is make_box(R, n, n).
inline Mesh make_graded_box(double R, int n, double kappa) {
  if (!(R > 0)) throw InvalidArgument("box half-width must be positive");
  if (n < 2 || n % 2 != 0) throw InvalidArgument("box mesh needs an even number of edges along x");
  if (!(kappa >= 1.0)) throw InvalidArgument("grading exponent must be at least 1");
  std::vector<double> xs(n + 1), ys(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double s = -1.0 + 2.0 * i / n;
    xs[i] = i == n / 2 ? 0.0 : R * std::copysign(std::pow(std::abs(s), kappa), s);
    ys[i] = 2 * R * std::pow(static_cast<double>(i) / n, kappa);
  }
  xs.front() = -R;
  xs.back() = R;
  ys.back() = 2 * R;
  return detail::tensor_rectangle(xs, ys);
}

namespace detail {

/// Point at angle 2 pi k / n, evaluated at the first-quadrant angle and reflected so that
/// mirror images about both axes agree bitwise.
inline Point circle_point(int k, int n, double radius) {
  int a = ((k % n) + n) % n;
  double sx = 1.0, sy = 1.0;
  if (2 * a > n) {
    a = n - a;
    sy = -1.0;
  }
  if (n % 2 == 0 && 4 * a > n) {
    a = n / 2 - a;
    sx = -1.0;
  }
  const double th = 2 * std::numbers::pi * a / n;
  return {sx * radius * std::cos(th), sy * radius * std::sin(th)};
}

}  // namespace detail

/// Inscribed polygon of the unit disk with n boundary vertices at angles 2 pi k / n,
/// filled with concentric rings. rings = 0 picks a count from n.
inline Mesh make_disk(int n, int rings = 0) {
  if (n < 3) throw InvalidArgument("disk mesh needs at least 3 boundary edges");
  if (rings <= 0) rings = std::clamp(static_cast<int>(std::lround(n / (2 * std::numbers::pi))), 1, 32);
  std::vector<Point> v{{0.0, 0.0}};
  std::vector<std::vector<int>> ring_ids(rings + 1);
  std::vector<int> counts(rings + 1, 1);
  ring_ids[0] = {0};
  for (int r = 1; r <= rings; ++r) {
    counts[r] = r == rings ? n : std::max(3, static_cast<int>(std::lround(static_cast<double>(n) * r / rings)));
    const double radius = static_cast<double>(r) / rings;
    for (int k = 0; k < counts[r]; ++k) {
      ring_ids[r].push_back(static_cast<int>(v.size()));
      v.push_back(detail::circle_point(k, counts[r], radius));
    }
  }
  std::vector<Mesh::Triangle> t;
  for (int k = 0; k < counts[1]; ++k) t.push_back({0, ring_ids[1][k], ring_ids[1][(k + 1) % counts[1]]});
  // Zip consecutive rings by angle; both start at angle 0.
  for (int r = 1; r < rings; ++r) {
    const auto& in = ring_ids[r];
    const auto& out = ring_ids[r + 1];
    const int ni = counts[r], no = counts[r + 1];
    int i = 0, o = 0;
    while (i < ni || o < no) {
      const double ai = static_cast<double>(i + 1) / ni;
      const double ao = static_cast<double>(o + 1) / no;
      if (o == no || (i < ni && ai < ao)) {
        t.push_back({in[i % ni], out[o % no], in[(i + 1) % ni]});
        ++i;
      } else {
        t.push_back({in[i % ni], out[o % no], out[(o + 1) % no]});
        ++o;
      }
    }
  }
  return Mesh::from_arrays(std::move(v), std::move(t));
}

/// Uniform red refinement: every triangle split into four through its edge midpoints.
/// Boundary edges are bisected on the chord, so the polygonal boundary is unchanged.
inline Mesh refine(const Mesh& m) {
  std::vector<Point> v = m.vertices();
  std::map<std::pair<int, int>, int> mid;
  auto midpoint = [&](int a, int b) {
    const auto key = std::make_pair(std::min(a, b), std::max(a, b));
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    const int id = static_cast<int>(v.size());
    v.push_back({0.5 * (v[a].x + v[b].x), 0.5 * (v[a].y + v[b].y)});
    mid.emplace(key, id);
    return id;
  };
  std::vector<Mesh::Triangle> t;
  t.reserve(4 * m.num_triangles());
  for (const auto& tri : m.triangles()) {
    const int a = tri[0], b = tri[1], c = tri[2];
    const int ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
    t.push_back({a, ab, ca});
    t.push_back({ab, b, bc});
    t.push_back({ca, bc, c});
    t.push_back({ab, bc, ca});
  }
  return Mesh::from_arrays(std::move(v), std::move(t));
}

}  // namespace steklov
