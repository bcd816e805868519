#include "frachelm/specfun.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "frachelm/errors.hpp"

namespace frachelm::specfun {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kEulerGamma = std::numbers::egamma;
constexpr double kSeriesCutoff = 12.0;

void check_order(int order) {
  if (order < 0 || order > kMaxBesselOrder) {
    throw DomainError("Bessel order " + std::to_string(order) + " outside [0, 60]");
  }
}

void check_positive(double x, const char* who) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(who) + ": argument must be positive and finite");
  }
}

// Ascending series  J_n(x) = sum_k (-1)^k (x/2)^{2k+n} / (k! (n+k)!).
double j_series(int n, double x) {
  const double half = 0.5 * x;
  double term = 1.0;
  for (int i = 1; i <= n; ++i) term *= half / i;
  double sum = term;
  const double q = -half * half;
  for (int k = 1; k < 300; ++k) {
    term *= q / (static_cast<double>(k) * (n + k));
    sum += term;
    if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
  }
  return sum;
}

double y0_series(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double harmonic = 0.0;
  double sum = 0.0;
  for (int k = 1; k < 300; ++k) {
    term *= q / (static_cast<double>(k) * k);
    harmonic += 1.0 / k;
    const double t = ((k % 2) ? 1.0 : -1.0) * harmonic * term;
    sum += t;
    if (std::abs(t) <= 1e-17 * std::abs(sum)) break;
  }
  return (2.0 / kPi) * ((std::log(0.5 * x) + kEulerGamma) * j_series(0, x) + sum);
}

double y1_series(double x) {
  const double half = 0.5 * x;
  const double q = -half * half;
  double term = half;  // (x/2)^{2k+1} / (k! (k+1)!) at k = 0
  double hk = 0.0;     // H_k
  double hk1 = 1.0;    // H_{k+1}
  double sum = term * (hk + hk1);
  for (int k = 1; k < 300; ++k) {
    term *= q / (static_cast<double>(k) * (k + 1));
    hk = hk1;
    hk1 += 1.0 / (k + 1);
    const double t = term * (hk + hk1);
    sum += t;
    if (std::abs(t) <= 1e-17 * std::abs(sum)) break;
  }
  return -2.0 / (kPi * x) + (2.0 / kPi) * (std::log(half) + kEulerGamma) * j_series(1, x) -
         sum / kPi;
}

struct JY {
  double j;
  double y;
};

// Hankel asymptotic expansion for large x, orders 0 and 1.
JY asymptotic_jy(int nu, double x) {
  const double mu = 4.0 * nu * nu;
  double p = 1.0;
  double q = 0.0;
  double term = 1.0;
  double prev = 1.0;
  for (int k = 1; k < 80; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= (mu - odd * odd) / (k * 8.0 * x);
    if (std::abs(term) > std::abs(prev)) break;  // past the smallest term
    if (k % 2 == 1) {
      q += ((k / 2) % 2 ? -1.0 : 1.0) * term;
    } else {
      p += ((k / 2) % 2 ? -1.0 : 1.0) * term;
    }
    prev = term;
    if (std::abs(term) < 1e-17) break;
  }
  const double chi = x - (0.5 * nu + 0.25) * kPi;
  const double amp = std::sqrt(2.0 / (kPi * x));
  return {amp * (p * std::cos(chi) - q * std::sin(chi)), amp * (p * std::sin(chi) + q * std::cos(chi))};
}

// Miller's backward recurrence normalised by J_0 + 2 sum J_{2k} = 1.
double j_miller(int n, double x) {
  const int top = 2 * ((std::max(n, static_cast<int>(x)) + 30 +
                        static_cast<int>(std::sqrt(60.0 * std::max<double>(n, x)))) /
                       2);
  double jp1 = 0.0;
  double j = 1e-300;
  double norm = 0.0;
  double result = 0.0;
  for (int m = top; m > 0; --m) {
    const double jm1 = (2.0 * m / x) * j - jp1;
    jp1 = j;
    j = jm1;
    if (std::abs(j) > 1e250) {
      j *= 1e-250;
      jp1 *= 1e-250;
      norm *= 1e-250;
      result *= 1e-250;
    }
    if (m - 1 == n) result = j;
    if ((m - 1) % 2 == 0 && m - 1 > 0) norm += 2.0 * j;
  }
  norm += j;
  if (n == 0) result = j;
  return result / norm;
}

}  // namespace

double gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("gamma: argument must be positive");
  static constexpr std::array<double, 9> c = {
      0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
      771.32342877765313,   -176.61502916214059,   12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) return kPi / (std::sin(kPi * x) * gamma(1.0 - x));
  const double z = x - 1.0;
  double a = c[0];
  const double t = z + 7.5;
  for (int i = 1; i < 9; ++i) a += c[i] / (z + i);
  return std::sqrt(2.0 * kPi) * std::pow(t, z + 0.5) * std::exp(-t) * a;
}

double frac_constant(const FracConstantInput& inp) {
  if (inp.n_dim < 1) throw DomainError("frac_constant: n_dim must be >= 1");
  if (!(inp.alpha > 0.0 && inp.alpha < 1.0)) throw DomainError("frac_constant: alpha must lie in (0,1)");
  const double a = inp.alpha;
  const double n = inp.n_dim;
  return a * std::pow(2.0, 2.0 * a) * gamma(0.5 * (n + 2.0 * a)) /
         (std::pow(kPi, 0.5 * n) * gamma(1.0 - a));
}

double bessel_j(int order, double x) {
  check_order(order);
  check_positive(x, "bessel_j");
  if (x < kSeriesCutoff) return j_series(order, x);
  if (order >= static_cast<int>(x)) return j_miller(order, x);
  double jm1 = asymptotic_jy(0, x).j;
  if (order == 0) return jm1;
  double j = asymptotic_jy(1, x).j;
  for (int m = 1; m < order; ++m) {
    const double jp1 = (2.0 * m / x) * j - jm1;
    jm1 = j;
    j = jp1;
  }
  return j;
}

double bessel_y(int order, double x) {
  check_order(order);
  check_positive(x, "bessel_y");
  double ym1;
  double y;
  if (x < kSeriesCutoff) {
    ym1 = y0_series(x);
    if (order == 0) return ym1;
    y = y1_series(x);
  } else {
    ym1 = asymptotic_jy(0, x).y;
    if (order == 0) return ym1;
    y = asymptotic_jy(1, x).y;
  }
  for (int m = 1; m < order; ++m) {
    const double yp1 = (2.0 * m / x) * y - ym1;
    ym1 = y;
    y = yp1;
    if (!std::isfinite(y)) {
      throw OverflowError("bessel_y: Y_" + std::to_string(m + 1) + " overflows at x = " + std::to_string(x),
                          m + 1);
    }
  }
  return y;
}

std::complex<double> hankel1(int order, double x) {
  return {bessel_j(order, x), bessel_y(order, x)};
}

std::complex<double> hankel1_deriv(int order, double x) {
  if (order == 0) return -hankel1(1, x);
  return hankel1(order - 1, x) - (static_cast<double>(order) / x) * hankel1(order, x);
}

std::complex<double> dtn_coefficient(int mode, double k, double R) {
  if (!(k > 0.0) || !(R > 0.0)) throw DomainError("dtn_coefficient: k and R must be positive");
  const int n = std::abs(mode);
  const double z = k * R;
  std::complex<double> h;
  std::complex<double> dh;
  try {
    h = hankel1(n, z);
    dh = hankel1_deriv(n, z);
  } catch (const OverflowError&) {
    throw OverflowError("dtn_coefficient: H_" + std::to_string(n) + "(kR) overflows for kR = " + std::to_string(z),
                        mode);
  }
  const std::complex<double> r = k * dh / h;
  if (!std::isfinite(r.real()) || !std::isfinite(r.imag())) {
    throw OverflowError("dtn_coefficient: non-finite ratio for mode " + std::to_string(mode), mode);
  }
  return r;
}

}  // namespace frachelm::specfun
