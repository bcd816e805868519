#include "frachelm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <string>

#include "frachelm/errors.hpp"

namespace frachelm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double signed_area(const Point2& a, const Point2& b, const Point2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

struct Ring {
  double radius;
  int first;  // global id of the first node
  int count;
  double offset;  // angular position of node 0, in units of the ring step
};

std::vector<double> ring_radii(const DiskMeshSpec& spec) {
  std::vector<double> fixed = {0.0};
  for (double r : spec.interface_radii) {
    if (r > 0.0 && r < spec.R) fixed.push_back(r);
  }
  const bool graded = spec.h_far > 0.0 && spec.fine_radius > 0.0 && spec.fine_radius < spec.R;
  if (graded) fixed.push_back(spec.fine_radius);
  fixed.push_back(spec.R);
  std::sort(fixed.begin(), fixed.end());
  fixed.erase(std::unique(fixed.begin(), fixed.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
              fixed.end());

  std::vector<double> radii = {0.0};
  for (std::size_t s = 0; s + 1 < fixed.size(); ++s) {
    const double a = fixed[s];
    const double b = fixed[s + 1];
    const double step = (graded && a >= spec.fine_radius - 1e-12) ? spec.h_far : spec.h;
    const int m = std::max(1, static_cast<int>(std::ceil((b - a) / step - 1e-9)));
    for (int i = 1; i <= m; ++i) radii.push_back(i == m ? b : a + (b - a) * i / m);
  }
  return radii;
}

double local_spacing(const DiskMeshSpec& spec, double r) {
  const bool graded = spec.h_far > 0.0 && spec.fine_radius > 0.0 && spec.fine_radius < spec.R;
  return (graded && r > spec.fine_radius + 1e-12) ? spec.h_far : spec.h;
}

void add_triangle(Mesh& mesh, int a, int b, int c) {
  if (!(signed_area(mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]) > 0.0)) {
    throw DomainError("build_disk_mesh: ring stitching produced a degenerate triangle");
  }
  mesh.triangles.push_back({a, b, c});
}

// Stitch two concentric rings with a zipper that always advances along the
// shorter diagonal.
void stitch(Mesh& mesh, const Ring& inner, const Ring& outer) {
  auto angle = [](const Ring& ring, int i) { return kTwoPi * (i + ring.offset) / ring.count; };
  auto node = [](const Ring& ring, int i) { return ring.first + (i % ring.count); };

  // Outer node closest in angle to inner node 0.
  const double a0 = angle(inner, 0);
  int j0 = static_cast<int>(std::lround(a0 / kTwoPi * outer.count - outer.offset));
  j0 = ((j0 % outer.count) + outer.count) % outer.count;

  int i = 0;
  int j = 0;
  while (i < inner.count || j < outer.count) {
    const int ia = node(inner, i);
    const int ib = node(inner, i + 1);
    const int oa = node(outer, j0 + j);
    const int ob = node(outer, j0 + j + 1);
    bool advance_outer;
    if (i == inner.count) {
      advance_outer = true;
    } else if (j == outer.count) {
      advance_outer = false;
    } else {
      const double d_outer = (mesh.nodes[ia] - mesh.nodes[ob]).norm();
      const double d_inner = (mesh.nodes[ib] - mesh.nodes[oa]).norm();
      advance_outer = d_outer <= d_inner;
    }
    if (advance_outer) {
      add_triangle(mesh, ia, oa, ob);
      ++j;
    } else {
      add_triangle(mesh, ia, oa, ib);
      ++i;
    }
  }
}

}  // namespace

double Mesh::triangle_area(int t) const {
  const auto& tri = triangles[t];
  return signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
}

Point2 Mesh::centroid(int t) const {
  const auto& tri = triangles[t];
  return (nodes[tri[0]] + nodes[tri[1]] + nodes[tri[2]]) / 3.0;
}

double Mesh::max_edge_length() const {
  double m = 0.0;
  for (const auto& tri : triangles) {
    for (int e = 0; e < 3; ++e) m = std::max(m, (nodes[tri[e]] - nodes[tri[(e + 1) % 3]]).norm());
  }
  return m;
}

double Mesh::total_area() const {
  double a = 0.0;
  for (int t = 0; t < num_triangles(); ++t) a += triangle_area(t);
  return a;
}

Mesh build_disk_mesh(double R, double h) { return build_disk_mesh(DiskMeshSpec{R, h, {}, 0.0, 0.0}); }

Mesh build_disk_mesh(const DiskMeshSpec& spec) {
  if (!(spec.R > 0.0) || !(spec.h > 0.0) || !std::isfinite(spec.R) || !std::isfinite(spec.h)) {
    throw DomainError("build_disk_mesh: R and h must be positive");
  }
  if (!(spec.h < spec.R / 4.0) && spec.h_far <= 0.0) {
    throw DomainError("build_disk_mesh: h must be smaller than R/4");
  }
  Mesh mesh;
  mesh.R = spec.R;
  mesh.h = spec.h;
  const std::vector<double> radii = ring_radii(spec);

  mesh.nodes.emplace_back(0.0, 0.0);
  std::vector<Ring> rings;
  for (std::size_t r = 1; r < radii.size(); ++r) {
    const double rad = radii[r];
    const double step = local_spacing(spec, rad);
    const int count = std::max(6, static_cast<int>(std::ceil(kTwoPi * rad / step - 1e-9)));
    const double offset = (r % 2 == 0) ? 0.5 : 0.0;
    Ring ring{rad, mesh.num_nodes(), count, offset};
    for (int i = 0; i < count; ++i) {
      const double th = kTwoPi * (i + offset) / count;
      mesh.nodes.emplace_back(rad * std::cos(th), rad * std::sin(th));
    }
    rings.push_back(ring);
  }

  const Ring& first = rings.front();
  for (int i = 0; i < first.count; ++i) add_triangle(mesh, 0, first.first + i, first.first + (i + 1) % first.count);
  for (std::size_t r = 0; r + 1 < rings.size(); ++r) stitch(mesh, rings[r], rings[r + 1]);

  const Ring& last = rings.back();
  for (int i = 0; i < last.count; ++i) {
    const int id = last.first + i;
    mesh.nodes[id] *= spec.R / mesh.nodes[id].norm();
    mesh.boundary_nodes.push_back(id);
    mesh.boundary_angles.push_back(kTwoPi * (i + last.offset) / last.count);
  }
  return mesh;
}

RegionTags mark_regions(const Mesh& mesh, double r_omega, double r_q) {
  if (!(r_omega > 0.0 && r_omega < r_q && r_q < mesh.R)) {
    throw DomainError("mark_regions: radii must satisfy 0 < r_omega < r_q < R");
  }
  RegionTags tags;
  tags.r_omega = r_omega;
  tags.r_q = r_q;
  tags.omega_local.assign(mesh.num_nodes(), -1);
  tags.suppq_local.assign(mesh.num_triangles(), -1);
  tags.omega_flag.assign(mesh.num_triangles(), 0);

  std::vector<char> node_in_omega(mesh.num_nodes(), 0);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double rc = mesh.centroid(t).norm();
    if (rc < r_q) {
      tags.suppq_local[t] = static_cast<int>(tags.suppq_triangles.size());
      tags.suppq_triangles.push_back(t);
    }
    if (rc < r_omega) {
      tags.omega_triangles.push_back(t);
      tags.omega_flag[t] = 1;
      for (int v : mesh.triangles[t]) node_in_omega[v] = 1;
    }
  }
  for (int v = 0; v < mesh.num_nodes(); ++v) {
    if (node_in_omega[v]) {
      tags.omega_local[v] = static_cast<int>(tags.omega_nodes.size());
      tags.omega_nodes.push_back(v);
    }
  }
  tags.omega_empty_warning = tags.omega_triangles.empty();

  // Boundary edges of Omega: directed edges whose reverse is not present.
  std::map<std::pair<int, int>, int> directed;
  for (int t : tags.omega_triangles) {
    const auto& tri = mesh.triangles[t];
    for (int e = 0; e < 3; ++e) directed[{tri[e], tri[(e + 1) % 3]}] += 1;
  }
  for (const auto& [edge, count] : directed) {
    if (!directed.contains({edge.second, edge.first})) tags.omega_boundary_edges.push_back({edge.first, edge.second});
  }
  return tags;
}

void ScattererConfig::validate(const RegionTags& tags) const {
  if (q_values.size() != tags.suppq_triangles.size()) {
    throw ConfigError("ScattererConfig: q_values must have one entry per supp(q) triangle");
  }
  for (double q : q_values) {
    if (!(q > -1.0) || !std::isfinite(q)) throw DomainError("ScattererConfig: q must be finite and > -1");
  }
  if (!(gamma_tilde >= 0.0 && gamma_tilde <= 0.5)) throw DomainError("ScattererConfig: gamma_tilde must be in [0, 1/2]");
  if (!(tau_tilde >= 0.0) || !(eta_tilde >= 0.0)) throw DomainError("ScattererConfig: tau_tilde, eta_tilde must be >= 0");
  if (!(k > 0.0) || !(omega_freq > 0.0) || !(R > 0.0)) {
    throw DomainError("ScattererConfig: k, omega_freq, R must be positive");
  }
}

double ScattererConfig::q_sup() const {
  double m = 0.0;
  for (double q : q_values) m = std::max(m, std::abs(q));
  return m;
}

void write_mesh(std::ostream& os, const Mesh& mesh, const RegionTags* tags) {
  os << mesh.num_nodes() << ' ' << mesh.num_triangles() << '\n';
  os.precision(17);
  for (const auto& p : mesh.nodes) os << p.x() << ' ' << p.y() << '\n';
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    os << tri[0] << ' ' << tri[1] << ' ' << tri[2];
    if (tags) {
      const int code = tags->in_omega(t) ? 2 : (tags->in_suppq(t) ? 1 : 0);
      os << ' ' << code;
    }
    os << '\n';
  }
}

}  // namespace frachelm
