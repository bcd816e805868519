#pragma once

#include <Eigen/Core>
#include <complex>
#include <functional>
#include <iosfwd>

#include "frachelm/geometry.hpp"

namespace frachelm {

/// Regional nonlocal form
///   E(u, v) = C_{2,sigma}/2 int_Omega int_Omega (u(x)-u(y))(v(x)-v(y)) / |x-y|^{2+2 sigma}
/// on the P1 space of the Omega nodes (order follows RegionTags::omega_nodes).
/// sigma == 0 stores the Omega mass matrix instead.
struct FracForm {
  Eigen::MatrixXd matrix;
  double sigma = 0.0;
  double constant = 0.0;

  bool is_identity_convention() const { return sigma == 0.0; }
  double energy(const Eigen::VectorXd& u) const { return u.dot(matrix * u); }
};

struct FracQuadrature {
  int far_order = 3;       // collapsed Gauss order per triangle, well separated pairs
  int near_order = 6;      // same, for pairs closer than `near_ratio` diameters
  double near_ratio = 2.5;
  int singular_order = 6;  // angular order inside the singular (touching) transforms
};

FracForm assemble_fractional_form(const Mesh& mesh, const RegionTags& tags, double sigma,
                                  const FracQuadrature& quad = {});

/// CSV dump of the Omega block: "i,j,value" for every entry.
void write_form_csv(std::ostream& os, const FracForm& form);

using ComplexFieldFn = std::function<std::complex<double>(const Point2&)>;
using RealFieldFn = std::function<double(const Point2&)>;

struct PvOptions {
  double r_cut = 1e-4;
  double r_max = 400.0;
  int angles = 1024;       // trapezoid nodes on [0, pi)
  double panel = 0.5;      // radial panel width beyond radius 1
  int panel_order = 8;
  double u_bound = 1.0;    // sup |u|, used only for the reported tail bound
};

struct PvResult {
  std::complex<double> value;
  double tail_bound;  // bound on the neglected oscillatory tail beyond r_max
};

/// Principal-value fractional Laplacian on R^2 by polar quadrature with the
/// symmetrised second difference 2u(x) - u(x+z) - u(x-z).
PvResult pv_fractional_laplacian(const ComplexFieldFn& u, const Point2& x, double alpha,
                                 const PvOptions& opts = {});

struct RegionalOptions {
  double r_cut = 1e-4;
  int angles = 128;       // trapezoid nodes on [0, 2 pi)
  int panels = 12;
  int panel_order = 6;
};

/// Regional operator A_Omega^sigma u(x) = C PV int_{Omega_h} (u(x)-u(y)) / |x-y|^{2+2 sigma} dy,
/// Omega_h being the polygon of Omega triangles. `support_radius` bounds |y - 0|
/// outside which u vanishes (used to stop radial quadrature early).
double regional_fractional_laplacian(const RealFieldFn& u, const Point2& x, double sigma, const Mesh& mesh,
                                     const RegionTags& tags, double support_radius,
                                     const RegionalOptions& opts = {});

struct GaussGreenResult {
  double residual;   // | int A u phi - E(u, phi) |
  double volume;     // int_Omega (A u) phi dx
  double form;       // E(I_h u, phi)
  double quad_error; // change of `volume` between two outer quadrature orders
};

/// Compares the pointwise regional operator against the assembled form for u
/// vanishing within 2h of the Omega boundary. `phi` holds Omega nodal values.
GaussGreenResult gauss_green_residual(const RealFieldFn& u, double support_radius, const Eigen::VectorXd& phi,
                                      const FracForm& form, const Mesh& mesh, const RegionTags& tags,
                                      const RegionalOptions& opts = {});

namespace detail {

/// Local matrix int_T int_T' psi_a psi_b |x-y|^{-p} for the node union of a
/// triangle pair, psi_a(x,y) = phi_a(x) - phi_a(y). Nodes of `ta` come first
/// (in triangle order), then the nodes of `tb` not in `ta`. Exposed for tests.
struct PairResult {
  std::array<int, 6> nodes;
  int count;
  Eigen::Matrix<double, 6, 6> local;
};
PairResult pair_integral(const Mesh& mesh, int ta, int tb, double p, const FracQuadrature& quad);
PairResult pair_integral_bruteforce(const Mesh& mesh, int ta, int tb, double p, int order);

}  // namespace detail

}  // namespace frachelm
