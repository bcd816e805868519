#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <cmath>
#include <numbers>
#include <random>

#include "frachelm/errors.hpp"
#include "frachelm/fem.hpp"
#include "frachelm/forward_loss.hpp"
#include "frachelm/fraclap.hpp"
#include "frachelm/specfun.hpp"

using namespace frachelm;

namespace {

struct Setup {
  Mesh mesh;
  RegionTags tags;
  FracForm frac;
  ScattererConfig sc;
};

Setup make_setup(double h, double gamma_tilde, double tau, double k, double q_value) {
  Setup s;
  s.mesh = build_disk_mesh(DiskMeshSpec{1.0, h, {0.3, 0.6}, 0.0, 0.0});
  s.tags = mark_regions(s.mesh, 0.3, 0.6);
  s.frac = assemble_fractional_form(s.mesh, s.tags, gamma_tilde + 0.5);
  s.sc.q_values.assign(s.tags.suppq_triangles.size(), q_value);
  s.sc.gamma_tilde = gamma_tilde;
  s.sc.tau_tilde = tau;
  s.sc.k = k;
  s.sc.omega_freq = k;
  s.sc.R = 1.0;
  return s;
}

// Dense classical Helmholtz system assembled from scratch: P1 element
// matrices, DtN through a trapezoid Fourier projection of the boundary trace.
Eigen::VectorXcd classical_solution(const Setup& s, int n_dtn) {
  const Mesh& m = s.mesh;
  const int n = m.num_nodes();
  const double k = s.sc.k;
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(n, n);
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(n);
  std::vector<double> qt(m.num_triangles(), 0.0);
  for (std::size_t i = 0; i < s.tags.suppq_triangles.size(); ++i) qt[s.tags.suppq_triangles[i]] = s.sc.q_values[i];
  Eigen::VectorXcd uinc(n);
  for (int i = 0; i < n; ++i) uinc[i] = std::exp(std::complex<double>(0.0, k * m.nodes[i].x()));
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles[t];
    const Point2 &a = m.nodes[tri[0]], &bb = m.nodes[tri[1]], &c = m.nodes[tri[2]];
    const double area = 0.5 * std::abs((bb - a).x() * (c - a).y() - (bb - a).y() * (c - a).x());
    Eigen::Matrix<double, 3, 2> g;
    const Point2 e[3] = {c - bb, a - c, bb - a};
    for (int i = 0; i < 3; ++i) g.row(i) << -e[i].y() / (2 * area), e[i].x() / (2 * area);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double kij = area * g.row(i).dot(g.row(j));
        const double mij = area / 12.0 * (i == j ? 2.0 : 1.0);
        A(tri[i], tri[j]) += kij - k * k * (1.0 + qt[t]) * mij;
        b[tri[i]] += k * k * qt[t] * mij * uinc[tri[j]];
      }
    }
  }
  const auto& bn = m.boundary_nodes;
  const int nb = static_cast<int>(bn.size());
  std::vector<double> w(nb);
  for (int i = 0; i < nb; ++i) {
    const double a0 = std::atan2(m.nodes[bn[(i + nb - 1) % nb]].y(), m.nodes[bn[(i + nb - 1) % nb]].x());
    const double a1 = std::atan2(m.nodes[bn[(i + 1) % nb]].y(), m.nodes[bn[(i + 1) % nb]].x());
    double span = a1 - a0;
    while (span <= 0.0) span += 2.0 * std::numbers::pi;
    w[i] = 0.5 * m.R * span;
  }
  for (int nmode = -n_dtn; nmode <= n_dtn; ++nmode) {
    const std::complex<double> beta = specfun::dtn_coefficient(nmode, k, m.R);
    for (int i = 0; i < nb; ++i) {
      for (int j = 0; j < nb; ++j) {
        const double dth = m.boundary_angles[i] - m.boundary_angles[j];
        A(bn[i], bn[j]) -= beta * w[i] * w[j] / (2.0 * std::numbers::pi * m.R) *
                           std::exp(std::complex<double>(0.0, nmode * dth));
      }
    }
  }
  return A.partialPivLu().solve(b);
}

}  // namespace

TEST_CASE("incident field is a unit-modulus plane wave equal to 1 at the origin") {
  const Mesh mesh = build_disk_mesh(1.0, 0.1);
  const ComplexField f = incident_field(2.5, 0.7, mesh);
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    CHECK(std::abs(std::abs(f.values[i]) - 1.0) < 1e-14);
    if (mesh.nodes[i].norm() == 0.0) CHECK(std::abs(f.values[i] - 1.0) < 1e-15);
  }
}

TEST_CASE("incident field Helmholtz residual decreases under refinement") {
  const double k = 3.0;
  std::vector<double> res;
  for (double h : {0.2, 0.1, 0.05}) {
    const Mesh mesh = build_disk_mesh(1.0, h);
    const auto K = fem::stiffness(mesh);
    const auto M = fem::mass(mesh);
    const ComplexField u = incident_field(k, 0.3, mesh);
    const Eigen::VectorXcd r = K.cast<std::complex<double>>() * u.values - k * k * (M.cast<std::complex<double>>() * u.values);
    // weak residual against a fixed smooth test function vanishing on the boundary
    Eigen::VectorXd phi(mesh.num_nodes());
    for (int i = 0; i < mesh.num_nodes(); ++i) phi[i] = std::pow(1.0 - mesh.nodes[i].squaredNorm(), 2);
    res.push_back(std::abs(phi.cast<std::complex<double>>().dot(r)));
  }
  CHECK(res[1] < res[0] / 2.0);
  CHECK(res[2] < res[1] / 2.0);
}

TEST_CASE("no scatterer and no attenuation give a zero right-hand side and zero field") {
  Setup s = make_setup(0.1, 0.25, 0.0, 2.0, 0.0);
  const LossSystem sys = assemble_loss_system(s.mesh, s.tags, s.sc, s.frac, 16);
  CHECK(sys.rhs.norm() == 0.0);
  CHECK(solve_loss_dtn(sys).values.norm() == 0.0);
}

TEST_CASE("without attenuation the solver matches an independent classical Helmholtz solve") {
  for (double k : {1.0, 3.0}) {
    Setup s = make_setup(0.1, 0.25, 0.0, k, 0.7);
    const LossSystem sys = assemble_loss_system(s.mesh, s.tags, s.sc, s.frac, 16);
    const ComplexField u = solve_loss_dtn(sys);
    const Eigen::VectorXcd ref = classical_solution(s, 16);
    CHECK((u.values - ref).norm() <= 1e-12 * ref.norm());
  }
}

TEST_CASE("discrete uniqueness: zero source gives zero solution") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> uk(0.5, 5.0), ug(0.05, 0.45), ut(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Setup s = make_setup(0.1, ug(rng), ut(rng), uk(rng), 0.5);
    LossSystem sys = assemble_loss_system(s.mesh, s.tags, s.sc, s.frac, 16);
    Eigen::SparseLU<CSpMat> lu;
    lu.compute(sys.lhs);
    REQUIRE(lu.info() == Eigen::Success);
    const Eigen::VectorXcd zero = lu.solve(Eigen::VectorXcd::Zero(sys.lhs.rows()));
    CHECK(zero.norm() <= 1e-12);
    // the operator is injective: a nonzero solve has a nonzero image
    const Eigen::VectorXcd u = lu.solve(sys.rhs);
    CHECK((sys.lhs * u - sys.rhs).norm() <= 1e-10 * sys.rhs.norm());
    CHECK(u.norm() > 0.0);
  }
}

TEST_CASE("DtN truncation 16 vs 32 changes the H1 norm by less than 1e-8") {
  auto gap = [](double h, double k) {
    Setup s = make_setup(h, 0.25, 0.3, k, 0.8);
    const double a = h1_norm(solve_loss_dtn(assemble_loss_system(s.mesh, s.tags, s.sc, s.frac, 16)), s.mesh);
    const double b = h1_norm(solve_loss_dtn(assemble_loss_system(s.mesh, s.tags, s.sc, s.frac, 32)), s.mesh);
    return std::abs(a - b) / b;
  };
  CHECK(gap(0.05, 1.0) < 1e-8);
  // the remaining gap comes from mesh-scale modes of the P1 trace
  CHECK(gap(0.05, 4.0) < gap(0.1, 4.0) / 8.0);
}

TEST_CASE("boundary flux through the DtN block has nonnegative imaginary part") {
  for (double k : {0.5, 2.0, 4.5}) {
    Setup s = make_setup(0.1, 0.3, 0.2, k, 0.5);
    const ComplexField u = solve_loss_dtn(assemble_loss_system(s.mesh, s.tags, s.sc, s.frac, 32));
    const Eigen::MatrixXcd B = dtn_block(s.mesh, k, 32);
    Eigen::VectorXcd ub(s.mesh.boundary_nodes.size());
    for (std::size_t i = 0; i < s.mesh.boundary_nodes.size(); ++i) ub[i] = u.values[s.mesh.boundary_nodes[i]];
    const auto edges = fem::outer_boundary_edges(s.mesh);
    const auto Mb = fem::edge_mass(s.mesh, edges);
    const double trace2 = std::real(u.values.dot(Mb.cast<std::complex<double>>() * u.values));
    const std::complex<double> flux = ub.dot(B * ub);
    CHECK(flux.imag() >= -1e-8 * trace2);
  }
}

TEST_CASE("absorbing condition: zero source gives zero field") {
  Setup s = make_setup(0.1, 0.25, 0.0, 2.0, 0.0);
  CHECK(solve_loss_absorbing(s.mesh, s.tags, s.sc, s.frac).values.norm() == 0.0);
}

TEST_CASE("norms") {
  const Mesh mesh = build_disk_mesh(1.0, 0.05);
  ComplexField z{Eigen::VectorXcd::Zero(mesh.num_nodes()), &mesh};
  CHECK(l2_norm(z, mesh) == 0.0);
  CHECK(h1_norm(z, mesh) == 0.0);
  const std::complex<double> c(1.5, -2.0);
  ComplexField f{Eigen::VectorXcd::Constant(mesh.num_nodes(), c), &mesh};
  CHECK(l2_norm(f, mesh) == doctest::Approx(std::abs(c) * std::sqrt(std::numbers::pi)).epsilon(5e-3));
  const ComplexField u = incident_field(2.0, 0.0, mesh);
  CHECK(h1_norm(u, mesh) >= l2_norm(u, mesh));
}

TEST_CASE("Lipschitz ratio is stable across perturbation sizes and incident angles") {
  Setup s = make_setup(0.1, 0.25, 0.2, 2.0, 0.0);
  const std::size_t nq = s.tags.suppq_triangles.size();
  std::vector<double> q1(nq), bump(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    const Point2 c = s.mesh.centroid(s.tags.suppq_triangles[i]);
    q1[i] = 0.5 + 0.2 * c.x();
    bump[i] = std::max(0.0, 1.0 - c.squaredNorm() / 0.36);
  }
  auto ratio = [&](double delta, double theta) {
    std::vector<double> q2(nq);
    for (std::size_t i = 0; i < nq; ++i) q2[i] = q1[i] + delta * bump[i];
    return lipschitz_ratio(q1, q2, s.mesh, s.tags, s.sc, s.frac, 32, BoundaryKind::Dtn, theta);
  };
  std::vector<double> rs;
  for (double d : {1e-1, 1e-2, 1e-3}) rs.push_back(ratio(d, 0.0));
  const auto [lo, hi] = std::minmax_element(rs.begin(), rs.end());
  CHECK(*hi / *lo <= 2.0);
  std::vector<double> ts;
  for (double th : {0.0, std::numbers::pi / 4, std::numbers::pi / 2}) ts.push_back(ratio(1e-2, th));
  const auto [tlo, thi] = std::minmax_element(ts.begin(), ts.end());
  CHECK(*thi / *tlo <= 3.0);
  CHECK(ratio(1e-2, 0.0) == rs[1]);
  CHECK_THROWS_AS(lipschitz_ratio(q1, q1, s.mesh, s.tags, s.sc, s.frac, 32), DomainError);
}

TEST_CASE("configuration errors") {
  Setup s = make_setup(0.1, 0.25, 0.1, 2.0, 0.3);
  const FracForm wrong = assemble_fractional_form(s.mesh, s.tags, 0.5);
  CHECK_THROWS_AS(assemble_loss_system(s.mesh, s.tags, s.sc, wrong, 16), ConfigError);
  CHECK_THROWS(assemble_loss_system(s.mesh, s.tags, s.sc, s.frac, 4));
  ScattererConfig bad = s.sc;
  bad.q_values[0] = -1.0;
  CHECK_THROWS(assemble_loss_system(s.mesh, s.tags, bad, s.frac, 16));
}
