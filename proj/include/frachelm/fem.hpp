#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <array>
#include <optional>
#include <span>
#include <vector>

#include "frachelm/geometry.hpp"

namespace frachelm::fem {

using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

struct TriGeom {
  double area;
  Eigen::Matrix<double, 3, 2> grad;  // gradients of the three barycentric coordinates
};

TriGeom tri_geometry(const Mesh& mesh, int t);

/// P1 stiffness  int grad u . grad v  over all triangles.
SpMat stiffness(const Mesh& mesh);
/// P1 mass  int u v  over all triangles.
SpMat mass(const Mesh& mesh);
/// P1 mass restricted to `tris`, triangle i weighted by `coef[i]`.
SpMat weighted_mass(const Mesh& mesh, std::span<const int> tris, std::span<const double> coef);
/// Exact P1 trace mass  int_edges u v ds  on the listed straight edges.
SpMat edge_mass(const Mesh& mesh, std::span<const std::array<int, 2>> edges);

/// Edges of the outer boundary, consecutive boundary nodes.
std::vector<std::array<int, 2>> outer_boundary_edges(const Mesh& mesh);

/// Accumulate a triangle's local P1 mass into triplets.
void add_local_mass(const Mesh& mesh, int t, double coef, Triplets& out);

struct Location {
  int triangle;
  std::array<double, 3> bary;
};

/// Point location by brute-force scan with a bounding-box prefilter.
std::optional<Location> locate(const Mesh& mesh, const Point2& p, double tol = 1e-12);

}  // namespace frachelm::fem
