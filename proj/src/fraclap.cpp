#include "frachelm/fraclap.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "frachelm/errors.hpp"
#include "frachelm/fem.hpp"
#include "frachelm/quadrature.hpp"
#include "frachelm/specfun.hpp"

namespace frachelm {

namespace {

using Local = Eigen::Matrix<double, 6, 6>;
using Psi = Eigen::Matrix<double, 6, 1>;

constexpr double kPi = std::numbers::pi;

struct PairFrame {
  std::array<int, 6> nodes{};
  int count = 0;

  int pos(int node) const {
    for (int i = 0; i < count; ++i) {
      if (nodes[i] == node) return i;
    }
    return -1;
  }
};

PairFrame make_frame(const Mesh& mesh, int ta, int tb) {
  PairFrame f;
  for (int v : mesh.triangles[ta]) f.nodes[f.count++] = v;
  for (int v : mesh.triangles[tb]) {
    if (f.pos(v) < 0) f.nodes[f.count++] = v;
  }
  return f;
}

inline void accumulate(Local& L, const Psi& psi, int n, double w) {
  for (int i = 0; i < n; ++i) {
    const double wi = w * psi[i];
    for (int j = 0; j <= i; ++j) L(i, j) += wi * psi[j];
  }
}

inline void symmetrize(Local& L, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) L(i, j) = L(j, i);
  }
}

Eigen::Matrix2d edge_matrix(const Point2& a, const Point2& b, const Point2& c) {
  Eigen::Matrix2d E;
  E.col(0) = b - a;
  E.col(1) = c - a;
  return E;
}

// int_T int_T psi psi^T |x-y|^{-p}; all of the reference work happens in z = s - t.
void identical_pair(const Mesh& mesh, int t, double p, int order, PairFrame& f, Local& L) {
  const auto& tri = mesh.triangles[t];
  const Eigen::Matrix2d E = edge_matrix(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]);
  const double jac = E.determinant() * E.determinant();
  const double radial = 1.0 / ((4.0 - p) * (5.0 - p) * (6.0 - p));
  static const std::array<Eigen::Vector2d, 6> hex = {Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1),
                                                     Eigen::Vector2d(-1, 1), Eigen::Vector2d(-1, 0),
                                                     Eigen::Vector2d(0, -1), Eigen::Vector2d(1, -1)};
  const auto& g = quad::gauss_legendre(order);
  Psi psi = Psi::Zero();
  for (int e = 0; e < 6; ++e) {
    const Eigen::Vector2d& va = hex[e];
    const Eigen::Vector2d& vb = hex[(e + 1) % 6];
    const double det = std::abs(va.x() * vb.y() - va.y() * vb.x());
    for (std::size_t q = 0; q < g.x.size(); ++q) {
      const Eigen::Vector2d z = va + g.x[q] * (vb - va);
      const double d = (E * z).norm();
      psi[0] = -z.x() - z.y();
      psi[1] = z.x();
      psi[2] = z.y();
      accumulate(L, psi, 3, jac * radial * det * g.w[q] * std::pow(d, -p));
    }
  }
  (void)f;
}

// Pair sharing the edge AB: T = (A, B, C), T' = (A, B, D). Variables w = (x1 - y1, x2, y2).
void edge_pair(const Mesh& mesh, int ta, int tb, int A, int B, double p, int order, const PairFrame& f,
               Local& L) {
  auto third = [&](int t) {
    for (int v : mesh.triangles[t]) {
      if (v != A && v != B) return v;
    }
    return -1;
  };
  const int C = third(ta);
  const int D = third(tb);
  const Point2& a = mesh.nodes[A];
  const Eigen::Vector2d eb = mesh.nodes[B] - a, ec = mesh.nodes[C] - a, ed = mesh.nodes[D] - a;
  const double jac = std::abs(eb.x() * ec.y() - eb.y() * ec.x()) * std::abs(eb.x() * ed.y() - eb.y() * ed.x());
  const double radial = 1.0 / ((5.0 - p) * (6.0 - p));

  using V3 = Eigen::Vector3d;
  static const std::array<std::array<V3, 3>, 6> simplices = {{
      {V3(1, 0, 0), V3(0, 1, 0), V3(0, 1, 1)},
      {V3(1, 0, 0), V3(0, 1, 1), V3(1, 0, 1)},
      {V3(0, 0, 1), V3(1, 0, 1), V3(0, 1, 1)},
      {V3(0, 1, 0), V3(-1, 1, 0), V3(0, 1, 1)},
      {V3(0, 0, 1), V3(0, 1, 1), V3(-1, 1, 0)},
      {V3(0, 0, 1), V3(-1, 1, 0), V3(-1, 0, 0)},
  }};
  const int iA = f.pos(A), iB = f.pos(B), iC = f.pos(C), iD = f.pos(D);
  const auto& rule = quad::triangle_rule(order);
  Psi psi = Psi::Zero();
  for (const auto& s : simplices) {
    Eigen::Matrix3d V;
    V << s[0], s[1], s[2];
    const double det = std::abs(V.determinant());
    for (std::size_t q = 0; q < rule.p.size(); ++q) {
      const double b2 = rule.p[q][0], b3 = rule.p[q][1];
      const V3 w = (1.0 - b2 - b3) * s[0] + b2 * s[1] + b3 * s[2];
      const double z = w[0], x2 = w[1], y2 = w[2];
      const double d = (z * eb + x2 * ec - y2 * ed).norm();
      psi[iA] = -z - x2 + y2;
      psi[iB] = z;
      psi[iC] = x2;
      psi[iD] = -y2;
      accumulate(L, psi, 4, jac * radial * det * rule.w[q] * std::pow(d, -p));
    }
  }
}

// Pair sharing only the vertex P: T = (P, Q1, Q2), T' = (P, R1, R2).
void vertex_pair(const Mesh& mesh, int ta, int tb, int P, double p, int order, const PairFrame& f, Local& L) {
  auto others = [&](int t) {
    std::array<int, 2> o{};
    int n = 0;
    for (int v : mesh.triangles[t]) {
      if (v != P) o[n++] = v;
    }
    return o;
  };
  const auto q = others(ta);
  const auto r = others(tb);
  const Point2& o = mesh.nodes[P];
  Eigen::Matrix2d E, F;
  E << mesh.nodes[q[0]] - o, mesh.nodes[q[1]] - o;
  F << mesh.nodes[r[0]] - o, mesh.nodes[r[1]] - o;
  const double jac = std::abs(E.determinant()) * std::abs(F.determinant());
  const double radial = 1.0 / (6.0 - p);
  const int iP = f.pos(P), iQ1 = f.pos(q[0]), iQ2 = f.pos(q[1]), iR1 = f.pos(r[0]), iR2 = f.pos(r[1]);
  const auto& g = quad::gauss_legendre(order);
  const auto& rule = quad::triangle_rule(order);
  Psi psi = Psi::Zero();
  for (int piece = 0; piece < 2; ++piece) {
    for (std::size_t ia = 0; ia < g.x.size(); ++ia) {
      const Eigen::Vector2d edge(1.0 - g.x[ia], g.x[ia]);
      for (std::size_t it = 0; it < rule.p.size(); ++it) {
        const Eigen::Vector2d tau(rule.p[it][0], rule.p[it][1]);
        const Eigen::Vector2d s = piece == 0 ? edge : tau;
        const Eigen::Vector2d t = piece == 0 ? tau : edge;
        const double d = (E * s - F * t).norm();
        psi[iP] = -s.x() - s.y() + t.x() + t.y();
        psi[iQ1] = s.x();
        psi[iQ2] = s.y();
        psi[iR1] = -t.x();
        psi[iR2] = -t.y();
        accumulate(L, psi, 5, jac * radial * g.w[ia] * rule.w[it] * std::pow(d, -p));
      }
    }
  }
}

struct TriPoints {
  std::vector<Point2> x;
  std::vector<std::array<double, 3>> bary;
  std::vector<double> w;  // physical weights
};

TriPoints tri_points(const Mesh& mesh, int t, int order) {
  const auto& tri = mesh.triangles[t];
  const Point2& a = mesh.nodes[tri[0]];
  const Point2& b = mesh.nodes[tri[1]];
  const Point2& c = mesh.nodes[tri[2]];
  const double jac = 2.0 * std::abs(mesh.triangle_area(t));
  const auto& rule = quad::triangle_rule(order);
  TriPoints tp;
  for (std::size_t q = 0; q < rule.p.size(); ++q) {
    const double s = rule.p[q][0], u = rule.p[q][1];
    tp.x.push_back(a + s * (b - a) + u * (c - a));
    tp.bary.push_back({1.0 - s - u, s, u});
    tp.w.push_back(jac * rule.w[q]);
  }
  return tp;
}

// Separated pair: psi = (lambda_T(x), -lambda_T'(y)).
void regular_pair(const TriPoints& X, const TriPoints& Y, double p, Local& L) {
  Psi psi;
  for (std::size_t i = 0; i < X.x.size(); ++i) {
    for (std::size_t j = 0; j < Y.x.size(); ++j) {
      const double d = (X.x[i] - Y.x[j]).norm();
      for (int a = 0; a < 3; ++a) {
        psi[a] = X.bary[i][a];
        psi[3 + a] = -Y.bary[j][a];
      }
      accumulate(L, psi, 6, X.w[i] * Y.w[j] * std::pow(d, -p));
    }
  }
}

double diameter(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  double d = 0.0;
  for (int i = 0; i < 3; ++i) d = std::max(d, (mesh.nodes[tri[i]] - mesh.nodes[tri[(i + 1) % 3]]).norm());
  return d;
}

int shared_count(const std::array<int, 3>& a, const std::array<int, 3>& b, std::array<int, 3>& shared) {
  int n = 0;
  for (int u : a) {
    for (int v : b) {
      if (u == v) shared[n++] = u;
    }
  }
  return n;
}

detail::PairResult pair_impl(const Mesh& mesh, int ta, int tb, double p, const FracQuadrature& quad,
                             const std::vector<TriPoints>* far_pts, const std::vector<TriPoints>* near_pts,
                             int pos_a, int pos_b) {
  detail::PairResult res;
  PairFrame f = make_frame(mesh, ta, tb);
  res.nodes = f.nodes;
  res.count = f.count;
  res.local.setZero();
  std::array<int, 3> shared{};
  const int ns = ta == tb ? 3 : shared_count(mesh.triangles[ta], mesh.triangles[tb], shared);
  if (ns == 3) {
    identical_pair(mesh, ta, p, quad.singular_order, f, res.local);
  } else if (ns == 2) {
    edge_pair(mesh, ta, tb, shared[0], shared[1], p, quad.singular_order, f, res.local);
  } else if (ns == 1) {
    vertex_pair(mesh, ta, tb, shared[0], p, quad.singular_order, f, res.local);
  } else {
    const double dist = (mesh.centroid(ta) - mesh.centroid(tb)).norm();
    const bool near = dist < quad.near_ratio * std::max(diameter(mesh, ta), diameter(mesh, tb));
    if (far_pts != nullptr) {
      const auto& src = near ? *near_pts : *far_pts;
      regular_pair(src[pos_a], src[pos_b], p, res.local);
    } else {
      const int order = near ? quad.near_order : quad.far_order;
      regular_pair(tri_points(mesh, ta, order), tri_points(mesh, tb, order), p, res.local);
    }
  }
  symmetrize(res.local, res.count);
  return res;
}

double distance_to_segment(const Point2& x, const Point2& a, const Point2& b) {
  const Eigen::Vector2d ab = b - a;
  const double t = std::clamp((x - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (x - (a + t * ab)).norm();
}

double distance_to_omega_boundary(const Point2& x, const Mesh& mesh, const RegionTags& tags) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& e : tags.omega_boundary_edges) {
    d = std::min(d, distance_to_segment(x, mesh.nodes[e[0]], mesh.nodes[e[1]]));
  }
  return d;
}

}  // namespace

namespace detail {

PairResult pair_integral(const Mesh& mesh, int ta, int tb, double p, const FracQuadrature& quad) {
  return pair_impl(mesh, ta, tb, p, quad, nullptr, nullptr, 0, 0);
}

PairResult pair_integral_bruteforce(const Mesh& mesh, int ta, int tb, double p, int order) {
  PairResult res;
  PairFrame f = make_frame(mesh, ta, tb);
  res.nodes = f.nodes;
  res.count = f.count;
  res.local.setZero();
  const TriPoints X = tri_points(mesh, ta, order);
  const TriPoints Y = tri_points(mesh, tb, order);
  Psi psi;
  for (std::size_t i = 0; i < X.x.size(); ++i) {
    for (std::size_t j = 0; j < Y.x.size(); ++j) {
      psi.setZero();
      for (int a = 0; a < 3; ++a) {
        psi[f.pos(mesh.triangles[ta][a])] += X.bary[i][a];
        psi[f.pos(mesh.triangles[tb][a])] -= Y.bary[j][a];
      }
      const double d = (X.x[i] - Y.x[j]).norm();
      accumulate(res.local, psi, f.count, X.w[i] * Y.w[j] * std::pow(d, -p));
    }
  }
  symmetrize(res.local, res.count);
  return res;
}

}  // namespace detail

FracForm assemble_fractional_form(const Mesh& mesh, const RegionTags& tags, double sigma,
                                  const FracQuadrature& quad) {
  if (tags.omega_triangles.empty()) throw DomainError("assemble_fractional_form: Omega has no triangles");
  if (!(sigma >= 0.0 && sigma < 1.0)) throw DomainError("assemble_fractional_form: sigma must lie in [0, 1)");
  const int n = static_cast<int>(tags.omega_nodes.size());
  FracForm form;
  form.sigma = sigma;
  form.matrix = Eigen::MatrixXd::Zero(n, n);

  if (sigma == 0.0) {
    // identity convention: the Omega mass matrix
    form.constant = 0.0;
    for (int t : tags.omega_triangles) {
      const auto& tri = mesh.triangles[t];
      const double a = std::abs(mesh.triangle_area(t)) / 12.0;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          form.matrix(tags.omega_local[tri[i]], tags.omega_local[tri[j]]) += (i == j ? 2.0 : 1.0) * a;
        }
      }
    }
    return form;
  }

  form.constant = specfun::frac_constant(2, sigma);
  const double p = 2.0 + 2.0 * sigma;
  const auto& tris = tags.omega_triangles;
  const int nt = static_cast<int>(tris.size());
  std::vector<TriPoints> far_pts(nt), near_pts(nt);
  for (int i = 0; i < nt; ++i) {
    far_pts[i] = tri_points(mesh, tris[i], quad.far_order);
    near_pts[i] = tri_points(mesh, tris[i], quad.near_order);
  }

  // fixed interleaved chunks summed in order keep the result independent of the thread count
  constexpr int kChunks = 16;
  std::vector<Eigen::MatrixXd> acc(kChunks);
#pragma omp parallel for schedule(dynamic, 1)
  for (int c = 0; c < kChunks; ++c) {
    acc[c] = Eigen::MatrixXd::Zero(n, n);
    for (int a = c; a < nt; a += kChunks) {
      for (int b = a; b < nt; ++b) {
        const auto res = pair_impl(mesh, tris[a], tris[b], p, quad, &far_pts, &near_pts, a, b);
        const double scale = (a == b ? 0.5 : 1.0) * form.constant;
        for (int i = 0; i < res.count; ++i) {
          const int gi = tags.omega_local[res.nodes[i]];
          for (int j = 0; j < res.count; ++j) acc[c](gi, tags.omega_local[res.nodes[j]]) += scale * res.local(i, j);
        }
      }
    }
  }
  for (const auto& m : acc) form.matrix += m;
  // remove round-off asymmetry from the merge order
  form.matrix = 0.5 * (form.matrix + form.matrix.transpose()).eval();
  return form;
}

void write_form_csv(std::ostream& os, const FracForm& form) {
  os.precision(17);
  os << "i,j,value\n";
  for (Eigen::Index i = 0; i < form.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < form.matrix.cols(); ++j) os << i << ',' << j << ',' << form.matrix(i, j) << '\n';
  }
}

PvResult pv_fractional_laplacian(const ComplexFieldFn& u, const Point2& x, double alpha, const PvOptions& opts) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("pv_fractional_laplacian: alpha must lie in (0, 1)");
  if (!(opts.r_cut > 0.0 && opts.r_cut < 1.0 && opts.r_max > 1.0)) {
    throw DomainError("pv_fractional_laplacian: need 0 < r_cut < 1 < r_max");
  }
  const double C = specfun::frac_constant(2, alpha);
  const std::complex<double> u0 = u(x);
  const auto& g = quad::gauss_legendre(opts.panel_order);

  // radial panels: geometric on [r_cut, 1], uniform beyond
  std::vector<double> edges{opts.r_cut};
  while (edges.back() * 2.0 < 1.0) edges.push_back(edges.back() * 2.0);
  edges.push_back(1.0);
  const int n_far = static_cast<int>(std::ceil((opts.r_max - 1.0) / opts.panel));
  for (int i = 1; i <= n_far; ++i) edges.push_back(1.0 + (opts.r_max - 1.0) * i / n_far);

  std::complex<double> body = 0.0, at_cut = 0.0, far_mean = 0.0;
  double far_weight = 0.0;
  const double dphi = kPi / opts.angles;
  for (int j = 0; j < opts.angles; ++j) {
    const double phi = (j + 0.5) * dphi;
    const Eigen::Vector2d e(std::cos(phi), std::sin(phi));
    auto second_diff = [&](double r) { return 2.0 * u0 - u(x + r * e) - u(x - r * e); };
    at_cut += second_diff(opts.r_cut) * dphi;
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
      const double lo = edges[k], len = edges[k + 1] - edges[k];
      for (std::size_t q = 0; q < g.x.size(); ++q) {
        const double r = lo + len * g.x[q];
        const std::complex<double> sd = second_diff(r);
        body += sd * (len * g.w[q] * dphi * std::pow(r, -1.0 - 2.0 * alpha));
        if (k + 2 == edges.size()) {
          far_mean += (u0 - 0.5 * sd) * g.w[q];
          far_weight += g.w[q];
        }
      }
    }
  }
  far_mean /= far_weight;
  // [0, r_cut]: the angular integral behaves like c r^2
  const std::complex<double> inner = at_cut * std::pow(opts.r_cut, -2.0 * alpha) / (2.0 - 2.0 * alpha);
  // beyond r_max u is replaced by its mean over the last panel ring
  const std::complex<double> tail =
      2.0 * (u0 - far_mean) * kPi * std::pow(opts.r_max, -2.0 * alpha) / (2.0 * alpha);
  PvResult res;
  res.value = C * (inner + body + tail);
  res.tail_bound = C * 2.0 * kPi * opts.u_bound * std::pow(opts.r_max, -2.0 * alpha) / (2.0 * alpha);
  return res;
}

double regional_fractional_laplacian(const RealFieldFn& u, const Point2& x, double sigma, const Mesh& mesh,
                                     const RegionTags& tags, double support_radius, const RegionalOptions& opts) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw DomainError("regional_fractional_laplacian: sigma must lie in (0, 1)");
  const double C = specfun::frac_constant(2, sigma);
  const double delta = distance_to_omega_boundary(x, mesh, tags);
  const double u0 = u(x);
  const auto& g = quad::gauss_legendre(opts.panel_order);
  const double ex = -1.0 - 2.0 * sigma;

  // ball B(x, delta) inside Omega_h, symmetrised
  double ball = 0.0, at_cut = 0.0;
  const double r_cut = std::min(opts.r_cut, 0.5 * delta);
  std::vector<double> edges{r_cut};
  while (edges.back() * 2.0 < delta) edges.push_back(edges.back() * 2.0);
  edges.push_back(delta);
  const int half = std::max(1, opts.angles / 2);
  const double dphi_half = kPi / half;
  for (int j = 0; j < half; ++j) {
    const double phi = (j + 0.5) * dphi_half;
    const Eigen::Vector2d e(std::cos(phi), std::sin(phi));
    auto second_diff = [&](double r) { return 2.0 * u0 - u(x + r * e) - u(x - r * e); };
    at_cut += second_diff(r_cut) * dphi_half;
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
      const double lo = edges[k], len = edges[k + 1] - edges[k];
      for (std::size_t q = 0; q < g.x.size(); ++q) {
        const double r = lo + len * g.x[q];
        ball += second_diff(r) * len * g.w[q] * dphi_half * std::pow(r, ex);
      }
    }
  }
  ball += at_cut * std::pow(r_cut, -2.0 * sigma) / (2.0 - 2.0 * sigma);

  // Omega_h outside the ball, ray by ray
  double outer = 0.0;
  const double dphi = 2.0 * kPi / opts.angles;
  std::vector<double> hits;
  for (int j = 0; j < opts.angles; ++j) {
    const double phi = (j + 0.37) * dphi;
    const Eigen::Vector2d e(std::cos(phi), std::sin(phi));
    hits.clear();
    for (const auto& be : tags.omega_boundary_edges) {
      const Point2& a = mesh.nodes[be[0]];
      const Eigen::Vector2d d = mesh.nodes[be[1]] - a;
      const double den = e.x() * (-d.y()) - e.y() * (-d.x());
      if (std::abs(den) < 1e-300) continue;
      const Eigen::Vector2d rhs = a - x;
      const double rho = (rhs.x() * (-d.y()) - rhs.y() * (-d.x())) / den;
      const double t = (e.x() * rhs.y() - e.y() * rhs.x()) / den;
      if (rho > 0.0 && t >= 0.0 && t < 1.0) hits.push_back(rho);
    }
    std::sort(hits.begin(), hits.end());
    // support disk of u along the ray
    const double b = x.dot(e);
    const double disc = b * b - x.squaredNorm() + support_radius * support_radius;
    double s_in = 0.0, s_out = -1.0;
    if (disc > 0.0) {
      s_in = -b - std::sqrt(disc);
      s_out = -b + std::sqrt(disc);
    }
    double lo = delta;
    for (std::size_t h = 0; h < hits.size(); h += 2) {
      const double hi = hits[h];
      if (hi > lo) {
        outer += u0 * (std::pow(lo, -2.0 * sigma) - std::pow(hi, -2.0 * sigma)) / (2.0 * sigma) * dphi;
        const double a0 = std::max(lo, s_in), a1 = std::min(hi, s_out);
        if (a1 > a0) {
          for (int k = 0; k < opts.panels; ++k) {
            const double p0 = a0 * std::pow(a1 / a0, static_cast<double>(k) / opts.panels);
            const double p1 = a0 * std::pow(a1 / a0, static_cast<double>(k + 1) / opts.panels);
            for (std::size_t q = 0; q < g.x.size(); ++q) {
              const double r = p0 + (p1 - p0) * g.x[q];
              outer -= u(x + r * e) * (p1 - p0) * g.w[q] * dphi * std::pow(r, ex);
            }
          }
        }
      }
      if (h + 1 >= hits.size()) break;
      lo = hits[h + 1];
    }
  }
  return C * (ball + outer);
}

GaussGreenResult gauss_green_residual(const RealFieldFn& u, double support_radius, const Eigen::VectorXd& phi,
                                      const FracForm& form, const Mesh& mesh, const RegionTags& tags,
                                      const RegionalOptions& opts) {
  const int n = static_cast<int>(tags.omega_nodes.size());
  if (phi.size() != n || form.matrix.rows() != n) {
    throw ConfigError("gauss_green_residual: phi and form must live on the Omega nodes");
  }
  if (form.sigma == 0.0) throw ConfigError("gauss_green_residual: needs a fractional form (sigma > 0)");

  // u must vanish within 2h of the Omega boundary
  double umax = 0.0;
  Eigen::VectorXd uh(n);
  for (int i = 0; i < n; ++i) {
    const Point2& xi = mesh.nodes[tags.omega_nodes[i]];
    uh[i] = u(xi);
    umax = std::max(umax, std::abs(uh[i]));
  }
  const double band = 2.0 * mesh.h;
  for (int t : tags.omega_triangles) {
    for (const auto& xq : tri_points(mesh, t, 4).x) {
      if (distance_to_omega_boundary(xq, mesh, tags) < band && std::abs(u(xq)) > 1e-14 * std::max(umax, 1.0)) {
        throw DomainError("gauss_green_residual: u does not vanish near the Omega boundary");
      }
    }
  }

  auto volume_at = [&](int order) {
    double vol = 0.0;
    for (int t : tags.omega_triangles) {
      const auto& tri = mesh.triangles[t];
      const TriPoints tp = tri_points(mesh, t, order);
      for (std::size_t q = 0; q < tp.x.size(); ++q) {
        double ph = 0.0;
        for (int a = 0; a < 3; ++a) ph += tp.bary[q][a] * phi[tags.omega_local[tri[a]]];
        if (ph == 0.0) continue;
        vol += tp.w[q] * ph *
               regional_fractional_laplacian(u, tp.x[q], form.sigma, mesh, tags, support_radius, opts);
      }
    }
    return vol;
  };
  GaussGreenResult res;
  const double coarse = volume_at(2);
  res.volume = volume_at(3);
  res.quad_error = std::abs(res.volume - coarse);
  res.form = uh.dot(form.matrix * phi);
  res.residual = std::abs(res.volume - res.form);
  return res;
}

}  // namespace frachelm
