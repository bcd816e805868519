#include "frachelm/forward_disp.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "frachelm/errors.hpp"

namespace frachelm {

ContractionCheck check_contraction_condition(double k, double q_sup, double c_cal) {
  if (!(k >= 0.0) || !(c_cal > 0.0)) throw DomainError("check_contraction_condition: need k >= 0, C > 0");
  const double margin = 1.0 - c_cal * std::sqrt(k) * (1.0 + q_sup);
  return {margin > 0.0, margin};
}

DispSystem::DispSystem(const Mesh& mesh, const RegionTags& tags, const ScattererConfig& sc, const FracForm& frac_d,
                       int n_dtn, double theta)
    : mesh_(&mesh), tags_(&tags), k_(sc.k) {
  sc.validate(tags);
  if (tags.omega_triangles.empty()) throw DomainError("dispersion system: Omega has no triangles");
  if (std::abs(frac_d.sigma - sc.gamma_tilde) > 1e-12) {
    throw ConfigError("dispersion system: fractional form must have order gamma_tilde");
  }
  const Eigen::Index no = omega_size();
  if (frac_d.matrix.rows() != no) throw ConfigError("dispersion system: fractional form does not match Omega");
  if (n_dtn < 8) throw ConfigError("dispersion system: N_dtn must be >= 8");

  K_ = fem::stiffness(mesh);
  M_ = fem::mass(mesh);
  const Eigen::MatrixXcd B = dtn_block(mesh, k_, n_dtn);
  std::vector<Eigen::Triplet<cplx>> trip;
  for (int c = 0; c < K_.outerSize(); ++c) {
    for (fem::SpMat::InnerIterator it(K_, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  }
  const auto& bn = mesh.boundary_nodes;
  for (std::size_t i = 0; i < bn.size(); ++i) {
    for (std::size_t j = 0; j < bn.size(); ++j) trip.emplace_back(bn[i], bn[j], -B(i, j));
  }
  A_g_.resize(mesh.num_nodes(), mesh.num_nodes());
  A_g_.setFromTriplets(trip.begin(), trip.end());
  lu_g_ = std::make_shared<Eigen::SparseLU<CSpMat>>();
  lu_g_->compute(A_g_);
  if (lu_g_->info() != Eigen::Success) throw SolverError("dispersion system: g-operator factorization failed");

  // (1 + q) weights, split by Omega membership
  std::vector<double> w(mesh.num_triangles(), 1.0);
  for (std::size_t i = 0; i < tags.suppq_triangles.size(); ++i) w[tags.suppq_triangles[i]] += sc.q_values[i];
  std::vector<int> in, out;
  std::vector<double> win, wout;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    if (tags.in_omega(t)) {
      in.push_back(t);
      win.push_back(w[t]);
    } else {
      out.push_back(t);
      wout.push_back(w[t]);
    }
  }
  m_in_ = fem::weighted_mass(mesh, in, win);
  m_out_ = fem::weighted_mass(mesh, out, wout);

  // source k (q + 1 - k^{2 gamma}) u_inc over B_R
  std::vector<int> all(mesh.num_triangles());
  std::vector<double> ws(mesh.num_triangles());
  const double shift = std::pow(k_, 2.0 * sc.gamma_tilde);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    all[t] = t;
    ws[t] = w[t] - shift;
  }
  const Eigen::VectorXcd uinc = incident_field(k_, theta, mesh).values;
  b_ = k_ * (fem::weighted_mass(mesh, all, ws) * uinc);

  // Omega blocks
  auto omega_block = [&](const fem::SpMat& A) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(no, no);
    for (int c = 0; c < A.outerSize(); ++c) {
      for (fem::SpMat::InnerIterator it(A, c); it; ++it) {
        const int i = tags.omega_local[it.row()], j = tags.omega_local[it.col()];
        if (i >= 0 && j >= 0) D(i, j) += it.value();
      }
    }
    return D;
  };
  std::vector<double> ones(tags.omega_triangles.size(), 1.0);
  m_omega_ = omega_block(fem::weighted_mass(mesh, tags.omega_triangles, ones));
  m_bnd_ = omega_block(fem::edge_mass(mesh, tags.omega_boundary_edges));
  frac_ = frac_d.matrix;
  A_u_ = frac_ + m_bnd_;
  llt_u_.compute(A_u_);
  if (llt_u_.info() != Eigen::Success) throw SolverError("dispersion system: u-operator not positive definite");

  g_diag_.resize(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) g_diag_[i] = std::sqrt(K_.coeff(i, i) + M_.coeff(i, i));
  u_diag_ = A_u_.diagonal().cwiseSqrt();
}

Eigen::VectorXcd DispSystem::restrict_omega(const Eigen::VectorXcd& g) const {
  Eigen::VectorXcd r(omega_size());
  for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = g[tags_->omega_nodes[i]];
  return r;
}

Eigen::VectorXcd DispSystem::extend_omega(const Eigen::VectorXcd& u) const {
  Eigen::VectorXcd e = Eigen::VectorXcd::Zero(mesh_->num_nodes());
  for (Eigen::Index i = 0; i < u.size(); ++i) e[tags_->omega_nodes[i]] = u[i];
  return e;
}

Eigen::VectorXcd DispSystem::g_rhs(const Eigen::VectorXcd& g, const Eigen::VectorXcd& u) const {
  return k_ * (m_in_ * extend_omega(u) + m_out_ * g) + b_;
}

Eigen::VectorXcd DispSystem::u_rhs(const Eigen::VectorXcd& g) const {
  const Eigen::VectorXcd go = restrict_omega(g);
  return k_ * (m_omega_.cast<cplx>() * go) + m_bnd_.cast<cplx>() * go;
}

void DispSystem::step(const Eigen::VectorXcd& g, const Eigen::VectorXcd& u, Eigen::VectorXcd& g_next,
                      Eigen::VectorXcd& u_next) const {
  g_next = lu_g_->solve(g_rhs(g, u));
  const Eigen::VectorXcd r = u_rhs(g);
  u_next.resize(r.size());
  u_next.real() = llt_u_.solve(r.real());
  u_next.imag() = llt_u_.solve(r.imag());
  if (!g_next.allFinite() || !u_next.allFinite()) throw SolverError("dispersion iteration produced non-finite values");
}

double DispSystem::residual(const Eigen::VectorXcd& g, const Eigen::VectorXcd& u) const {
  const Eigen::VectorXcd rg = A_g_ * g - g_rhs(g, u);
  const Eigen::VectorXcd ru = A_u_.cast<cplx>() * u - u_rhs(g);
  double r = 0.0;
  for (Eigen::Index i = 0; i < rg.size(); ++i) r = std::max(r, std::abs(rg[i]) / g_diag_[i]);
  for (Eigen::Index i = 0; i < ru.size(); ++i) r = std::max(r, std::abs(ru[i]) / u_diag_[i]);
  return r;
}

double DispSystem::norm_g(const Eigen::VectorXcd& dg) const { return h1_norm(dg, K_, M_); }

double DispSystem::norm_u(const Eigen::VectorXcd& du) const {
  return std::sqrt(std::max(du.dot(frac_.cast<cplx>() * du).real(), 0.0));
}

double DispSystem::boundary_mismatch(const Eigen::VectorXcd& g, const Eigen::VectorXcd& u) const {
  const Eigen::VectorXcd d = u - restrict_omega(g);
  return std::sqrt(std::max(d.dot(m_bnd_.cast<cplx>() * d).real(), 0.0));
}

DispResult solve_disp_iterative(const Mesh& mesh, const RegionTags& tags, const ScattererConfig& sc,
                                const FracForm& frac_d, const DispOptions& opts, const DispState* init) {
  const DispSystem sys(mesh, tags, sc, frac_d, opts.n_dtn, opts.theta);
  DispResult res;
  res.condition = check_contraction_condition(sc.k, sc.q_sup(), opts.c_cal);
  Eigen::VectorXcd g = Eigen::VectorXcd::Zero(mesh.num_nodes());
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(sys.omega_size());
  if (init != nullptr) {
    if (init->g.values.size() != g.size() || init->u.size() != u.size()) {
      throw ConfigError("solve_disp_iterative: initial state has the wrong size");
    }
    g = init->g.values;
    u = init->u;
  }
  Eigen::VectorXcd g_next, u_next;
  std::vector<double> norms;
  int growth = 0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    sys.step(g, u, g_next, u_next);
    const double ng = sys.norm_g(g_next - g), nu = sys.norm_u(u_next - u);
    g.swap(g_next);
    u.swap(u_next);
    const double total = ng + nu;
    res.history.push_back({it, ng, nu, sys.residual(g, u)});
    if (!norms.empty() && total > norms.back()) {
      if (++growth >= 3) {
        norms.push_back(total);
        throw DivergenceError("dispersion iteration diverged: update norm grew 3 consecutive times", norms);
      }
    } else {
      growth = 0;
    }
    norms.push_back(total);
    res.state.iterate_index = it;
    res.state.diff_norm = total;
    if (total <= opts.tol) {
      res.converged = true;
      break;
    }
  }
  res.state.g.mesh = &mesh;
  res.state.g.values = g;
  res.state.u = u;
  res.boundary_mismatch = sys.boundary_mismatch(g, u);
  return res;
}

double residual_disp(const DispState& state, const DispSystem& system) {
  return system.residual(state.g.values, state.u);
}

void write_disp_history_csv(std::ostream& os, const std::vector<DispHistoryRow>& history) {
  os.precision(17);
  os << "iter,update_norm_g,update_norm_u,residual\n";
  for (const auto& r : history) os << r.iter << ',' << r.update_norm_g << ',' << r.update_norm_u << ',' << r.residual << '\n';
}

}  // namespace frachelm
