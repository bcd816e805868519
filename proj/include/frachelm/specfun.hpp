#pragma once

#include <complex>

namespace frachelm::specfun {

/// Gamma function for x > 0 (Lanczos, g = 7, nine coefficients).
double gamma(double x);

struct FracConstantInput {
  int n_dim = 2;
  double alpha = 0.5;
};

/// Normalisation C_{n,alpha} of the singular-integral fractional Laplacian,
///   alpha 2^{2 alpha} Gamma((n + 2 alpha)/2) / (pi^{n/2} Gamma(1 - alpha)).
double frac_constant(const FracConstantInput& inp);
inline double frac_constant(int n_dim, double alpha) { return frac_constant({n_dim, alpha}); }

/// Bessel functions of the first and second kind, integer order 0..60, x > 0.
double bessel_j(int order, double x);
double bessel_y(int order, double x);

/// H_n^{(1)}(x) = J_n(x) + i Y_n(x) and its derivative in x.
std::complex<double> hankel1(int order, double x);
std::complex<double> hankel1_deriv(int order, double x);

/// Mode-n symbol of the exterior Dirichlet-to-Neumann map on the circle of
/// radius R: k H_n'(kR) / H_n(kR). Negative modes use |n|.
std::complex<double> dtn_coefficient(int mode, double k, double R);

inline constexpr int kMaxBesselOrder = 60;

}  // namespace frachelm::specfun
