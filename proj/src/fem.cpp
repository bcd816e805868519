#include "frachelm/fem.hpp"

#include <Eigen/Dense>
#include <algorithm>

namespace frachelm::fem {

TriGeom tri_geometry(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const Point2& a = mesh.nodes[tri[0]];
  const Point2& b = mesh.nodes[tri[1]];
  const Point2& c = mesh.nodes[tri[2]];
  Eigen::Matrix2d J;
  J.col(0) = b - a;
  J.col(1) = c - a;
  const double det = J.determinant();
  const Eigen::Matrix2d Jinv_t = J.inverse().transpose();
  TriGeom g;
  g.area = 0.5 * det;
  g.grad.row(1) = Jinv_t.col(0).transpose();
  g.grad.row(2) = Jinv_t.col(1).transpose();
  g.grad.row(0) = -(g.grad.row(1) + g.grad.row(2));
  return g;
}

void add_local_mass(const Mesh& mesh, int t, double coef, Triplets& out) {
  const auto& tri = mesh.triangles[t];
  const double a = mesh.triangle_area(t) * coef / 12.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.emplace_back(tri[i], tri[j], (i == j ? 2.0 : 1.0) * a);
  }
}

SpMat stiffness(const Mesh& mesh) {
  Triplets trip;
  trip.reserve(9 * mesh.triangles.size());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const TriGeom g = tri_geometry(mesh, t);
    const Eigen::Matrix3d local = g.area * g.grad * g.grad.transpose();
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) trip.emplace_back(tri[i], tri[j], local(i, j));
    }
  }
  SpMat K(mesh.num_nodes(), mesh.num_nodes());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

SpMat mass(const Mesh& mesh) {
  Triplets trip;
  trip.reserve(9 * mesh.triangles.size());
  for (int t = 0; t < mesh.num_triangles(); ++t) add_local_mass(mesh, t, 1.0, trip);
  SpMat M(mesh.num_nodes(), mesh.num_nodes());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

SpMat weighted_mass(const Mesh& mesh, std::span<const int> tris, std::span<const double> coef) {
  Triplets trip;
  trip.reserve(9 * tris.size());
  for (std::size_t i = 0; i < tris.size(); ++i) add_local_mass(mesh, tris[i], coef[i], trip);
  SpMat M(mesh.num_nodes(), mesh.num_nodes());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

SpMat edge_mass(const Mesh& mesh, std::span<const std::array<int, 2>> edges) {
  Triplets trip;
  for (const auto& e : edges) {
    const double len = (mesh.nodes[e[0]] - mesh.nodes[e[1]]).norm();
    trip.emplace_back(e[0], e[0], len / 3.0);
    trip.emplace_back(e[1], e[1], len / 3.0);
    trip.emplace_back(e[0], e[1], len / 6.0);
    trip.emplace_back(e[1], e[0], len / 6.0);
  }
  SpMat M(mesh.num_nodes(), mesh.num_nodes());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

std::vector<std::array<int, 2>> outer_boundary_edges(const Mesh& mesh) {
  std::vector<std::array<int, 2>> edges;
  const auto& b = mesh.boundary_nodes;
  for (std::size_t i = 0; i < b.size(); ++i) edges.push_back({b[i], b[(i + 1) % b.size()]});
  return edges;
}

std::optional<Location> locate(const Mesh& mesh, const Point2& p, double tol) {
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point2& a = mesh.nodes[tri[0]];
    const Point2& b = mesh.nodes[tri[1]];
    const Point2& c = mesh.nodes[tri[2]];
    if (p.x() < std::min({a.x(), b.x(), c.x()}) - tol || p.x() > std::max({a.x(), b.x(), c.x()}) + tol ||
        p.y() < std::min({a.y(), b.y(), c.y()}) - tol || p.y() > std::max({a.y(), b.y(), c.y()}) + tol) {
      continue;
    }
    Eigen::Matrix2d J;
    J.col(0) = b - a;
    J.col(1) = c - a;
    const Eigen::Vector2d st = J.colPivHouseholderQr().solve(p - a);
    const std::array<double, 3> bary = {1.0 - st.x() - st.y(), st.x(), st.y()};
    if (bary[0] >= -tol && bary[1] >= -tol && bary[2] >= -tol) return Location{t, bary};
  }
  return std::nullopt;
}

}  // namespace frachelm::fem
