#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <complex>
#include <iosfwd>
#include <span>

#include "frachelm/fem.hpp"
#include "frachelm/fraclap.hpp"
#include "frachelm/geometry.hpp"

namespace frachelm {

using cplx = std::complex<double>;
using CSpMat = Eigen::SparseMatrix<cplx>;

struct ComplexField {
  Eigen::VectorXcd values;
  const Mesh* mesh = nullptr;

  Eigen::Index size() const { return values.size(); }
};

/// Nodal interpolant of exp(i k x.(cos theta, sin theta)).
ComplexField incident_field(double k, double theta, const Mesh& mesh);

enum class BoundaryKind { Dtn, Absorbing };

struct LossSystem {
  CSpMat lhs;
  Eigen::VectorXcd rhs;
  int dtn_truncation = 0;  // modes -N..N; 0 for the absorbing condition
  BoundaryKind boundary = BoundaryKind::Dtn;
  const Mesh* mesh = nullptr;
};

/// Dense DtN block on the boundary nodes (row/column order of mesh.boundary_nodes):
///   B_ij = sum_{|n| <= N} beta_n R w_i (w_j / 2 pi) e^{i n (theta_i - theta_j)},
/// w the trapezoid weights of the boundary angles.
Eigen::MatrixXcd dtn_block(const Mesh& mesh, double k, int n_dtn);

/// Mesh-level pieces of the loss system, reused across scatterers.
class LossAssembler {
 public:
  LossAssembler(const Mesh& mesh, const RegionTags& tags, const ScattererConfig& sc, const FracForm& frac,
                int n_dtn, BoundaryKind boundary);

  /// q_values: one per supp(q) triangle.
  LossSystem assemble(std::span<const double> q_values, double theta = 0.0) const;

  const Mesh& mesh() const { return *mesh_; }
  const RegionTags& tags() const { return *tags_; }

 private:
  const Mesh* mesh_;
  const RegionTags* tags_;
  ScattererConfig sc_;
  int n_dtn_;
  BoundaryKind boundary_;
  CSpMat base_;             // everything except the q-weighted mass
  fem::SpMat omega_mass_;   // mass on Omega triangles, for the attenuation source
};

LossSystem assemble_loss_system(const Mesh& mesh, const RegionTags& tags, const ScattererConfig& sc,
                                const FracForm& frac, int n_dtn, double theta = 0.0);

/// Direct sparse LU; checks the relative residual against `rel_tol`.
ComplexField solve_loss_system(const LossSystem& system, double rel_tol = 1e-10);
inline ComplexField solve_loss_dtn(const LossSystem& system) { return solve_loss_system(system); }

/// Reduced model on the disk mesh D with the Robin condition du/dn = i k u on its boundary.
ComplexField solve_loss_absorbing(const Mesh& mesh_d, const RegionTags& tags_d, const ScattererConfig& sc,
                                  const FracForm& frac, double theta = 0.0);

double h1_norm(const ComplexField& f, const Mesh& mesh);
double l2_norm(const ComplexField& f, const Mesh& mesh);
double h1_norm(const Eigen::VectorXcd& v, const fem::SpMat& stiffness, const fem::SpMat& mass);
double l2_norm(const Eigen::VectorXcd& v, const fem::SpMat& mass);

/// ||S(q1) u_inc - S(q2) u_inc||_H1 / (||q1 - q2||_inf ||u_inc||_L2) with the scatterer
/// geometry of `sc` (sc.q_values is ignored).
double lipschitz_ratio(std::span<const double> q1, std::span<const double> q2, const Mesh& mesh,
                       const RegionTags& tags, const ScattererConfig& sc, const FracForm& frac, int n_dtn,
                       BoundaryKind boundary = BoundaryKind::Dtn, double theta = 0.0);

/// CSV "node_index,x,y,re,im".
void write_field_csv(std::ostream& os, const ComplexField& f);

}  // namespace frachelm
