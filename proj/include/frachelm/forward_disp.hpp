#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseLU>
#include <iosfwd>
#include <memory>
#include <vector>

#include "frachelm/forward_loss.hpp"

namespace frachelm {

struct ContractionCheck {
  bool ok;
  double margin;  // 1 - C k^{1/2} (1 + ||q||_inf)
};

ContractionCheck check_contraction_condition(double k, double q_sup, double c_cal);

struct DispState {
  ComplexField g;      // on all mesh nodes
  Eigen::VectorXcd u;  // on Omega nodes (RegionTags::omega_nodes order)
  int iterate_index = 0;
  double diff_norm = 0.0;
};

struct DispHistoryRow {
  int iter;
  double update_norm_g;
  double update_norm_u;
  double residual;
};

struct DispOptions {
  int n_dtn = 32;
  double tol = 1e-10;
  int max_iter = 200;
  double theta = 0.0;
  double c_cal = 1.0;  // constant of the contraction condition
};

struct DispResult {
  DispState state;
  std::vector<DispHistoryRow> history;
  bool converged = false;
  ContractionCheck condition{};
  double boundary_mismatch = 0.0;  // || u - g ||_{L2(boundary of Omega)}
};

/// Matrices of the split dispersion system:
///   (i)  (K - B) g_{n+1} = k M_{1+q} w_n + b,  w_n = u_n on Omega, g_n elsewhere,
///        b = k (q + 1 - k^{2 gamma}) u_inc tested against P1 functions,
///   (ii) (E_D + M_dOmega) u_{n+1} = k M_Omega g_n + M_dOmega g_n.
class DispSystem {
 public:
  DispSystem(const Mesh& mesh, const RegionTags& tags, const ScattererConfig& sc, const FracForm& frac_d,
             int n_dtn, double theta);

  /// One sweep from (g, u) to the next iterate.
  void step(const Eigen::VectorXcd& g, const Eigen::VectorXcd& u, Eigen::VectorXcd& g_next,
            Eigen::VectorXcd& u_next) const;
  /// Largest normalised weak residual over the nodal test functions of both equations.
  double residual(const Eigen::VectorXcd& g, const Eigen::VectorXcd& u) const;
  double norm_g(const Eigen::VectorXcd& dg) const;  // H1(B_R)
  double norm_u(const Eigen::VectorXcd& du) const;  // sqrt of the E_D form
  double boundary_mismatch(const Eigen::VectorXcd& g, const Eigen::VectorXcd& u) const;

  const Mesh& mesh() const { return *mesh_; }
  Eigen::Index omega_size() const { return static_cast<Eigen::Index>(tags_->omega_nodes.size()); }

 private:
  Eigen::VectorXcd g_rhs(const Eigen::VectorXcd& g, const Eigen::VectorXcd& u) const;
  Eigen::VectorXcd u_rhs(const Eigen::VectorXcd& g) const;
  Eigen::VectorXcd restrict_omega(const Eigen::VectorXcd& g) const;
  Eigen::VectorXcd extend_omega(const Eigen::VectorXcd& u) const;

  const Mesh* mesh_;
  const RegionTags* tags_;
  double k_;
  CSpMat A_g_;                  // K - B
  std::shared_ptr<Eigen::SparseLU<CSpMat>> lu_g_;
  fem::SpMat m_in_;             // (1 + q)-weighted mass over Omega triangles
  fem::SpMat m_out_;            // same over the remaining triangles
  Eigen::VectorXcd b_;
  Eigen::MatrixXd A_u_;         // E_D + M_dOmega, Omega block
  Eigen::LLT<Eigen::MatrixXd> llt_u_;
  Eigen::MatrixXd m_omega_;     // Omega mass, Omega block
  Eigen::MatrixXd m_bnd_;       // boundary-of-Omega edge mass, Omega block
  Eigen::MatrixXd frac_;
  Eigen::VectorXd g_diag_, u_diag_;  // residual normalisation
  fem::SpMat K_, M_;
};

/// Fixed-point iteration from (g0, u0) (zero when `init` is null).
DispResult solve_disp_iterative(const Mesh& mesh, const RegionTags& tags, const ScattererConfig& sc,
                                const FracForm& frac_d, const DispOptions& opts, const DispState* init = nullptr);

double residual_disp(const DispState& state, const DispSystem& system);

/// CSV "iter,update_norm_g,update_norm_u,residual".
void write_disp_history_csv(std::ostream& os, const std::vector<DispHistoryRow>& history);

}  // namespace frachelm
