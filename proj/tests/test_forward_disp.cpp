#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "frachelm/errors.hpp"
#include "frachelm/forward_disp.hpp"
#include "frachelm/fraclap.hpp"

using namespace frachelm;

namespace {

struct Setup {
  Mesh mesh;
  RegionTags tags;
  FracForm frac;
  ScattererConfig sc;
};

Setup make_setup(double k, double gamma_tilde, double q, double h = 0.1) {
  Setup s;
  s.mesh = build_disk_mesh(DiskMeshSpec{1.0, h, {0.3, 0.6}, 0.0, 0.0});
  s.tags = mark_regions(s.mesh, 0.3, 0.6);
  s.frac = assemble_fractional_form(s.mesh, s.tags, gamma_tilde);
  s.sc.q_values.assign(s.tags.suppq_triangles.size(), q);
  s.sc.gamma_tilde = gamma_tilde;
  s.sc.k = k;
  s.sc.omega_freq = k;
  return s;
}

// least-squares slope and R^2 of log(y) against x
std::pair<double, double> loglinear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = std::log(y[i]) - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return {sxy / sxx, sxy * sxy / (sxx * syy)};
}

double contraction_rate(const DispResult& r) {
  const auto& h = r.history;
  return (h[5].update_norm_g + h[5].update_norm_u) / (h[4].update_norm_g + h[4].update_norm_u);
}

}  // namespace

TEST_CASE("contraction condition arithmetic") {
  CHECK(check_contraction_condition(1e-12, 10.0, 50.0).ok);
  const auto a = check_contraction_condition(0.01, 1.0, 1.0);
  CHECK(a.ok);
  CHECK(a.margin == doctest::Approx(0.8));
  const auto b = check_contraction_condition(1.0, 1.0, 1.0);
  CHECK_FALSE(b.ok);
  CHECK(b.margin == doctest::Approx(-1.0));
}

TEST_CASE("no contrast and gamma 0 give the zero state in one iteration") {
  Setup s = make_setup(0.3, 0.0, 0.0);
  DispOptions opts;
  const DispResult r = solve_disp_iterative(s.mesh, s.tags, s.sc, s.frac, opts);
  CHECK(r.converged);
  CHECK(r.state.iterate_index == 1);
  CHECK(r.state.g.values.norm() == 0.0);
  CHECK(r.state.u.norm() == 0.0);
}

TEST_CASE("small k: geometric decay, margin-based rate and independence of the initial state") {
  // calibrate C from the measured rate at a reference wavenumber
  const double q = 0.5;
  Setup ref = make_setup(0.05, 0.25, q);
  DispOptions opts;
  opts.tol = 1e-10;
  const DispResult r0 = solve_disp_iterative(ref.mesh, ref.tags, ref.sc, ref.frac, opts);
  const double c_cal = contraction_rate(r0) / (std::sqrt(0.05) * (1.0 + q));
  CHECK(c_cal > 0.0);

  Setup s = make_setup(0.1, 0.25, q);
  opts.c_cal = c_cal;
  const DispResult r = solve_disp_iterative(s.mesh, s.tags, s.sc, s.frac, opts);
  REQUIRE(r.converged);
  CHECK(r.condition.ok);
  CHECK(r.condition.margin > 0.5);
  std::vector<double> it, un;
  for (int i = 1; i < 10; ++i) {
    it.push_back(r.history[i].iter);
    un.push_back(r.history[i].update_norm_g + r.history[i].update_norm_u);
  }
  const auto [slope, r2] = loglinear_fit(it, un);
  CHECK(slope < 0.0);
  CHECK(r2 >= 0.95);
  const double bound = 1.0 - r.condition.margin;
  for (int i = 2; i < 10; ++i) {
    const double ratio = un[i - 1] / un[i - 2];
    CHECK(ratio < 1.0);
    CHECK(ratio <= 1.25 * bound);
  }
  for (std::size_t i = 2; i < r.history.size(); ++i) {
    CHECK(r.history[i].residual <= 1.05 * r.history[i - 1].residual);
  }
  const DispSystem sys(s.mesh, s.tags, s.sc, s.frac, opts.n_dtn, opts.theta);
  CHECK(residual_disp(r.state, sys) <= 10 * opts.tol);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  DispState init;
  init.g.mesh = &s.mesh;
  init.g.values.resize(s.mesh.num_nodes());
  for (auto& v : init.g.values) v = 0.01 * std::complex<double>(nd(rng), nd(rng));
  init.u.resize(static_cast<Eigen::Index>(s.tags.omega_nodes.size()));
  for (auto& v : init.u) v = 0.01 * std::complex<double>(nd(rng), nd(rng));
  const DispResult r2nd = solve_disp_iterative(s.mesh, s.tags, s.sc, s.frac, opts, &init);
  REQUIRE(r2nd.converged);
  const double dg = sys.norm_g(r2nd.state.g.values - r.state.g.values);
  const double du = sys.norm_u(r2nd.state.u - r.state.u);
  CHECK(dg + du <= 10 * opts.tol);
}

TEST_CASE("residual of the zero state equals the source size") {
  Setup s = make_setup(0.1, 0.25, 0.5);
  const DispSystem sys(s.mesh, s.tags, s.sc, s.frac, 32, 0.0);
  DispState zero;
  zero.g.values = Eigen::VectorXcd::Zero(s.mesh.num_nodes());
  zero.u = Eigen::VectorXcd::Zero(sys.omega_size());
  CHECK(residual_disp(zero, sys) > 0.0);
}

TEST_CASE("boundary coupling mismatch shrinks with k") {
  double prev = 1e300;
  for (double k : {0.1, 0.03, 0.01}) {
    Setup s = make_setup(k, 0.25, 0.5);
    const DispResult r = solve_disp_iterative(s.mesh, s.tags, s.sc, s.frac, DispOptions{});
    REQUIRE(r.converged);
    CHECK(r.boundary_mismatch < prev);
    prev = r.boundary_mismatch;
  }
}

TEST_CASE("large k diverges with a history") {
  Setup s = make_setup(4.0, 0.25, 2.0);
  DispOptions opts;
  opts.max_iter = 100;
  try {
    solve_disp_iterative(s.mesh, s.tags, s.sc, s.frac, opts);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.history().size() >= 4);
  }
}

TEST_CASE("history CSV header") {
  std::ostringstream os;
  write_disp_history_csv(os, {{1, 0.5, 0.25, 0.1}});
  CHECK(os.str().rfind("iter,update_norm_g,update_norm_u,residual\n1,", 0) == 0);
}

TEST_CASE("fractional form of the wrong order is rejected") {
  Setup s = make_setup(0.1, 0.25, 0.5);
  const FracForm wrong = assemble_fractional_form(s.mesh, s.tags, 0.75);
  CHECK_THROWS_AS(DispSystem(s.mesh, s.tags, s.sc, wrong, 32, 0.0), ConfigError);
}
