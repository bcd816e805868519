#pragma once

#include <Eigen/Core>
#include <array>
#include <iosfwd>
#include <vector>

namespace frachelm {

using Point2 = Eigen::Vector2d;

/// Triangulated disk B_R built from concentric rings of nodes.
struct Mesh {
  std::vector<Point2> nodes;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<int> boundary_nodes;            // on |x| = R, increasing angle
  std::vector<double> boundary_angles;        // polar angle of each boundary node, in [0, 2 pi)
  double R = 0.0;
  double h = 0.0;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  double triangle_area(int t) const;
  Point2 centroid(int t) const;
  double max_edge_length() const;
  double total_area() const;
};

/// Ring radii are snapped so that every entry of `interface_radii` is itself a
/// ring. Beyond `fine_radius` the spacing switches to `h_far` (when > 0).
struct DiskMeshSpec {
  double R = 1.0;
  double h = 0.1;
  std::vector<double> interface_radii;
  double fine_radius = 0.0;
  double h_far = 0.0;
};

Mesh build_disk_mesh(double R, double h);
Mesh build_disk_mesh(const DiskMeshSpec& spec);

/// Nested regions Omega (attenuating) inside supp(q), both concentric disks.
struct RegionTags {
  std::vector<int> omega_nodes;      // sorted global node ids touching an Omega triangle
  std::vector<int> omega_triangles;  // sorted
  std::vector<int> suppq_triangles;  // sorted
  std::vector<std::array<int, 2>> omega_boundary_edges;  // global node ids, oriented CCW around Omega
  std::vector<int> omega_local;      // global node -> index into omega_nodes, or -1
  std::vector<int> suppq_local;      // global triangle -> index into suppq_triangles, or -1
  std::vector<char> omega_flag;      // per global triangle
  double r_omega = 0.0;
  double r_q = 0.0;
  bool omega_empty_warning = false;

  bool in_omega(int tri) const { return omega_flag[tri] != 0; }
  bool in_suppq(int tri) const { return suppq_local[tri] >= 0; }
};

/// A triangle belongs to a region iff its centroid lies strictly inside the
/// region's disk.
RegionTags mark_regions(const Mesh& mesh, double r_omega, double r_q);

/// Physical coefficients of the scattering problem.
struct ScattererConfig {
  std::vector<double> q_values;  // one per supp(q) triangle, > -1
  double gamma_tilde = 0.25;     // in [0, 1/2]
  double tau_tilde = 0.0;        // attenuation weight on Omega
  double eta_tilde = 0.0;
  double k = 1.0;
  double omega_freq = 1.0;
  double R = 1.0;

  void validate(const RegionTags& tags) const;
  double q_sup() const;  // ||q||_inf, zero when q is empty
};

/// Plain-text mesh dump: "N_v N_t", nodes "x y", triangles "i j k region".
void write_mesh(std::ostream& os, const Mesh& mesh, const RegionTags* tags = nullptr);

}  // namespace frachelm
