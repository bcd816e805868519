#include "frachelm/forward_loss.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <numbers>
#include <ostream>

#include "frachelm/errors.hpp"
#include "frachelm/specfun.hpp"

namespace frachelm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> boundary_weights(const Mesh& mesh) {
  const auto& th = mesh.boundary_angles;
  const int n = static_cast<int>(th.size());
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    double next = th[(i + 1) % n], prev = th[(i + n - 1) % n];
    if (i == n - 1) next += kTwoPi;
    if (i == 0) prev -= kTwoPi;
    w[i] = 0.5 * (next - prev);
  }
  return w;
}

CSpMat to_complex(const fem::SpMat& A, cplx scale) { return (A.cast<cplx>() * scale).eval(); }

void check_field(const Eigen::VectorXcd& v) {
  if (!v.allFinite()) throw SolverError("loss solver produced non-finite values");
}

}  // namespace

ComplexField incident_field(double k, double theta, const Mesh& mesh) {
  if (!(k > 0.0)) throw DomainError("incident_field: k must be positive");
  const Eigen::Vector2d d(std::cos(theta), std::sin(theta));
  ComplexField f;
  f.mesh = &mesh;
  f.values.resize(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) f.values[i] = std::exp(cplx(0.0, k * d.dot(mesh.nodes[i])));
  return f;
}

Eigen::MatrixXcd dtn_block(const Mesh& mesh, double k, int n_dtn) {
  const int nb = static_cast<int>(mesh.boundary_nodes.size());
  const auto w = boundary_weights(mesh);
  std::vector<cplx> beta(n_dtn + 1);
  for (int n = 0; n <= n_dtn; ++n) beta[n] = specfun::dtn_coefficient(n, k, mesh.R);
  Eigen::MatrixXcd B(nb, nb);
  for (int i = 0; i < nb; ++i) {
    for (int j = 0; j < nb; ++j) {
      const double dth = mesh.boundary_angles[i] - mesh.boundary_angles[j];
      cplx s = beta[0];
      for (int n = 1; n <= n_dtn; ++n) s += 2.0 * beta[n] * std::cos(n * dth);
      B(i, j) = s * mesh.R * w[i] * w[j] / kTwoPi;
    }
  }
  return B;
}

LossAssembler::LossAssembler(const Mesh& mesh, const RegionTags& tags, const ScattererConfig& sc,
                             const FracForm& frac, int n_dtn, BoundaryKind boundary)
    : mesh_(&mesh), tags_(&tags), sc_(sc), n_dtn_(n_dtn), boundary_(boundary) {
  if (!(sc.k > 0.0) || !(sc.omega_freq > 0.0)) throw DomainError("loss system: k and omega must be positive");
  if (!(sc.gamma_tilde >= 0.0 && sc.gamma_tilde <= 0.5)) throw DomainError("loss system: gamma_tilde outside [0, 1/2]");
  if (!(sc.tau_tilde >= 0.0)) throw DomainError("loss system: tau_tilde must be nonnegative");
  if (std::abs(frac.sigma - (sc.gamma_tilde + 0.5)) > 1e-12) {
    throw ConfigError("loss system: fractional form must have order gamma_tilde + 1/2");
  }
  if (frac.matrix.rows() != static_cast<Eigen::Index>(tags.omega_nodes.size())) {
    throw ConfigError("loss system: fractional form does not match the Omega nodes");
  }
  if (boundary == BoundaryKind::Dtn && n_dtn < 8) throw ConfigError("loss system: N_dtn must be >= 8");

  const int nv = mesh.num_nodes();
  const double k = sc.k;
  std::vector<Eigen::Triplet<cplx>> trip;
  // stiffness - k^2 mass
  const fem::SpMat A = fem::stiffness(mesh) - k * k * fem::mass(mesh);
  for (int c = 0; c < A.outerSize(); ++c) {
    for (fem::SpMat::InnerIterator it(A, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  }
  // - i omega tau E_Omega^N
  if (sc.tau_tilde > 0.0) {
    const cplx s(0.0, -sc.omega_freq * sc.tau_tilde);
    const auto& on = tags.omega_nodes;
    for (std::size_t i = 0; i < on.size(); ++i) {
      for (std::size_t j = 0; j < on.size(); ++j) trip.emplace_back(on[i], on[j], s * frac.matrix(i, j));
    }
  }
  // boundary block
  if (boundary == BoundaryKind::Dtn) {
    const Eigen::MatrixXcd B = dtn_block(mesh, k, n_dtn);
    const auto& bn = mesh.boundary_nodes;
    for (std::size_t i = 0; i < bn.size(); ++i) {
      for (std::size_t j = 0; j < bn.size(); ++j) trip.emplace_back(bn[i], bn[j], -B(i, j));
    }
  } else {
    const auto edges = fem::outer_boundary_edges(mesh);
    const fem::SpMat E = fem::edge_mass(mesh, edges);
    for (int c = 0; c < E.outerSize(); ++c) {
      for (fem::SpMat::InnerIterator it(E, c); it; ++it) trip.emplace_back(it.row(), it.col(), cplx(0.0, -k) * it.value());
    }
  }
  base_.resize(nv, nv);
  base_.setFromTriplets(trip.begin(), trip.end());

  std::vector<double> ones(tags.omega_triangles.size(), 1.0);
  omega_mass_ = fem::weighted_mass(mesh, tags.omega_triangles, ones);
}

LossSystem LossAssembler::assemble(std::span<const double> q_values, double theta) const {
  const auto& tags = *tags_;
  if (q_values.size() != tags.suppq_triangles.size()) {
    throw ConfigError("loss system: q_values must have one entry per supp(q) triangle");
  }
  for (double q : q_values) {
    if (!(q > -1.0) || !std::isfinite(q)) throw DomainError("loss system: q must be finite and > -1");
  }
  const double k = sc_.k;
  const fem::SpMat Mq = fem::weighted_mass(*mesh_, tags.suppq_triangles, q_values);
  LossSystem sys;
  sys.mesh = mesh_;
  sys.boundary = boundary_;
  sys.dtn_truncation = boundary_ == BoundaryKind::Dtn ? n_dtn_ : 0;
  sys.lhs = base_ - to_complex(Mq, k * k);
  const Eigen::VectorXcd uinc = incident_field(k, theta, *mesh_).values;
  sys.rhs = (Mq * uinc) * (k * k);
  if (sc_.tau_tilde > 0.0) {
    const cplx s(0.0, sc_.omega_freq * sc_.tau_tilde * std::pow(k, 2.0 * sc_.gamma_tilde + 1.0));
    sys.rhs += s * (omega_mass_ * uinc);
  }
  return sys;
}

LossSystem assemble_loss_system(const Mesh& mesh, const RegionTags& tags, const ScattererConfig& sc,
                                const FracForm& frac, int n_dtn, double theta) {
  sc.validate(tags);
  return LossAssembler(mesh, tags, sc, frac, n_dtn, BoundaryKind::Dtn).assemble(sc.q_values, theta);
}

ComplexField solve_loss_system(const LossSystem& system, double rel_tol) {
  ComplexField f;
  f.mesh = system.mesh;
  const double rn = system.rhs.norm();
  if (rn == 0.0) {
    f.values = Eigen::VectorXcd::Zero(system.rhs.size());
    return f;
  }
  Eigen::SparseLU<CSpMat> lu;
  lu.analyzePattern(system.lhs);
  lu.factorize(system.lhs);
  if (lu.info() != Eigen::Success) {
    throw SolverError("loss solver: LU factorization failed (numerically singular system): " + lu.lastErrorMessage());
  }
  f.values = lu.solve(system.rhs);
  check_field(f.values);
  const double res = (system.lhs * f.values - system.rhs).norm() / rn;
  if (res > rel_tol) {
    // one step of iterative refinement before giving up
    f.values += lu.solve(system.rhs - system.lhs * f.values);
    const double res2 = (system.lhs * f.values - system.rhs).norm() / rn;
    if (res2 > rel_tol) {
      throw SolverError("loss solver: relative residual " + std::to_string(res2) + " above tolerance");
    }
  }
  return f;
}

ComplexField solve_loss_absorbing(const Mesh& mesh_d, const RegionTags& tags_d, const ScattererConfig& sc,
                                  const FracForm& frac, double theta) {
  sc.validate(tags_d);
  if (!(tags_d.r_q < mesh_d.R)) throw DomainError("solve_loss_absorbing: supp(q) must lie inside D");
  const LossAssembler as(mesh_d, tags_d, sc, frac, 0, BoundaryKind::Absorbing);
  return solve_loss_system(as.assemble(sc.q_values, theta));
}

double h1_norm(const Eigen::VectorXcd& v, const fem::SpMat& stiffness, const fem::SpMat& mass) {
  const double a = v.dot(stiffness * v).real() + v.dot(mass * v).real();
  return std::sqrt(std::max(a, 0.0));
}

double l2_norm(const Eigen::VectorXcd& v, const fem::SpMat& mass) {
  return std::sqrt(std::max(v.dot(mass * v).real(), 0.0));
}

double h1_norm(const ComplexField& f, const Mesh& mesh) {
  return h1_norm(f.values, fem::stiffness(mesh), fem::mass(mesh));
}

double l2_norm(const ComplexField& f, const Mesh& mesh) { return l2_norm(f.values, fem::mass(mesh)); }

double lipschitz_ratio(std::span<const double> q1, std::span<const double> q2, const Mesh& mesh,
                       const RegionTags& tags, const ScattererConfig& sc, const FracForm& frac, int n_dtn,
                       BoundaryKind boundary, double theta) {
  if (q1.size() != q2.size()) throw ConfigError("lipschitz_ratio: q fields differ in length");
  double dq = 0.0;
  for (std::size_t i = 0; i < q1.size(); ++i) dq = std::max(dq, std::abs(q1[i] - q2[i]));
  if (dq == 0.0) throw DomainError("lipschitz_ratio: q1 == q2, ratio undefined");
  const LossAssembler as(mesh, tags, sc, frac, n_dtn, boundary);
  const ComplexField u1 = solve_loss_system(as.assemble(q1, theta));
  const ComplexField u2 = solve_loss_system(as.assemble(q2, theta));
  const fem::SpMat K = fem::stiffness(mesh), M = fem::mass(mesh);
  const Eigen::VectorXcd uinc = incident_field(sc.k, theta, mesh).values;
  return h1_norm(u1.values - u2.values, K, M) / (dq * l2_norm(uinc, M));
}

void write_field_csv(std::ostream& os, const ComplexField& f) {
  os.precision(17);
  os << "node_index,x,y,re,im\n";
  for (Eigen::Index i = 0; i < f.values.size(); ++i) {
    const auto& p = f.mesh->nodes[i];
    os << i << ',' << p.x() << ',' << p.y() << ',' << f.values[i].real() << ',' << f.values[i].imag() << '\n';
  }
}

}  // namespace frachelm
