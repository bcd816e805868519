#include <doctest.h>

#include <cmath>
#include <numbers>

#include "frachelm/errors.hpp"
#include "frachelm/specfun.hpp"

#ifdef FRACHELM_HAVE_BOOST
#include <boost/math/special_functions/bessel.hpp>
#endif

using namespace frachelm;
namespace sf = frachelm::specfun;

namespace {

// Ascending series in long double; only used where it converges cleanly.
long double series_j(int n, long double x) {
  long double term = 1.0L;
  for (int k = 1; k <= n; ++k) term *= x / (2.0L * k);
  long double sum = term;
  const long double q = -x * x / 4.0L;
  for (int m = 1; m < 400; ++m) {
    term *= q / (static_cast<long double>(m) * (m + n));
    sum += term;
    if (std::fabs(term) < 1e-22L * std::fabs(sum)) break;
  }
  return sum;
}

}  // namespace

TEST_CASE("gamma against std::tgamma") {
  CHECK(sf::gamma(1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(sf::gamma(5.0) == doctest::Approx(24.0).epsilon(1e-13));
  CHECK(sf::gamma(0.5) == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-13));
  for (double x = 0.1; x <= 30.0; x += 0.173) {
    const double ref = std::tgamma(x);
    CHECK(std::abs(sf::gamma(x) - ref) <= 1e-12 * ref);
  }
  CHECK_THROWS_AS(sf::gamma(0.0), DomainError);
  CHECK_THROWS_AS(sf::gamma(-1.5), DomainError);
}

TEST_CASE("fractional constant") {
  CHECK(sf::frac_constant(2, 0.5) == doctest::Approx(1.0 / (2.0 * std::numbers::pi)).epsilon(1e-13));
  const double a = 0.25;
  const double direct = a * std::pow(2.0, 2 * a) * std::tgamma(1.0 + a) / (std::numbers::pi * std::tgamma(1.0 - a));
  CHECK(sf::frac_constant(2, a) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(sf::frac_constant(2, a) == doctest::Approx(0.08323).epsilon(1e-3));
  // 1 / Gamma(1 - alpha) vanishes as alpha -> 1, so the constant decays there
  CHECK(sf::frac_constant(2, 0.9) > sf::frac_constant(2, 0.99));
  CHECK(sf::frac_constant(2, 0.99) > sf::frac_constant(2, 0.999));
  CHECK(sf::frac_constant(2, 0.999) / (1.0 - 0.999) == doctest::Approx(4.0 / std::numbers::pi).epsilon(1e-2));
  for (int i = 1; i <= 19; ++i) {
    const double al = 0.05 * i;
    const double v = sf::frac_constant(2, al) * std::tgamma(1.0 - al);
    CHECK(std::isfinite(v));
    CHECK(v < 10.0);
  }
  CHECK(sf::frac_constant(3, 0.5) ==
        doctest::Approx(0.5 * 2.0 * std::tgamma(2.0) / (std::pow(std::numbers::pi, 1.5) * std::tgamma(0.5))));
  CHECK_THROWS_AS(sf::frac_constant(2, 0.0), DomainError);
  CHECK_THROWS_AS(sf::frac_constant(2, 1.0), DomainError);
  CHECK_THROWS_AS(sf::frac_constant(0, 0.5), DomainError);
}

TEST_CASE("Bessel reference values") {
  CHECK(sf::bessel_j(0, 1e-8) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sf::bessel_j(0, 1.0) == doctest::Approx(0.7651976866).epsilon(1e-10));
  CHECK(sf::bessel_y(0, 1.0) == doctest::Approx(0.0882569642).epsilon(1e-9));
  CHECK_THROWS_AS(sf::bessel_j(0, 0.0), DomainError);
  CHECK_THROWS_AS(sf::bessel_y(1, -1.0), DomainError);
}

TEST_CASE("Bessel J against long-double series") {
  // series is accurate while x stays moderate
  for (int n = 0; n <= 60; n += 3) {
    for (double x : {0.05, 0.3, 1.0, 2.5, 5.0, 8.0, 11.0, 15.0}) {
      const double ref = static_cast<double>(series_j(n, x));
      CHECK_MESSAGE(std::abs(sf::bessel_j(n, x) - ref) <= 1e-10, "n=" << n << " x=" << x);
    }
  }
}

#ifdef FRACHELM_HAVE_BOOST
TEST_CASE("Bessel J, Y against Boost") {
  for (int n = 0; n <= 60; ++n) {
    for (double x : {0.05, 0.2, 0.7, 1.0, 3.3, 7.0, 11.9, 12.1, 17.5, 25.0, 33.0, 50.0}) {
      const double jr = boost::math::cyl_bessel_j(n, x);
      CHECK_MESSAGE(std::abs(sf::bessel_j(n, x) - jr) <= 1e-10, "J n=" << n << " x=" << x);
      const double yr = boost::math::cyl_neumann(n, x);
      if (std::abs(yr) < 1e10) {
        CHECK_MESSAGE(std::abs(sf::bessel_y(n, x) - yr) <= 1e-10 * std::max(1.0, std::abs(yr)),
                      "Y n=" << n << " x=" << x);
      }
    }
  }
}
#endif

TEST_CASE("Hankel identities") {
  const auto h = sf::hankel1(0, 1.0);
  CHECK(h.real() == doctest::Approx(0.7651976866).epsilon(1e-10));
  CHECK(h.imag() == doctest::Approx(0.0882569642).epsilon(1e-9));
  for (int n = 0; n <= 10; ++n) {
    for (double x : {0.5, 1.0, 5.0}) {
      const double jn = sf::bessel_j(n, x), yn = sf::bessel_y(n, x);
      const auto d = sf::hankel1_deriv(n, x);
      const double w = jn * d.imag() - d.real() * yn;
      CHECK(std::abs(w - 2.0 / (std::numbers::pi * x)) <= 1e-9 * std::max(1.0, std::abs(yn)));
    }
  }
  for (int n = 1; n < 30; ++n) {
    for (double x : {0.7, 3.0, 12.5, 20.0}) {
      const auto r = sf::hankel1(n + 1, x) - (2.0 * n / x) * sf::hankel1(n, x) + sf::hankel1(n - 1, x);
      CHECK(std::abs(r) <= 1e-9 * std::max(1.0, std::abs(sf::hankel1(n + 1, x))));
    }
  }
  for (int n = 1; n <= 10; ++n) {
    const auto d = sf::hankel1_deriv(n, 2.0);
    const auto ref = sf::hankel1(n - 1, 2.0) - (n / 2.0) * sf::hankel1(n, 2.0);
    CHECK(std::abs(d - ref) <= 1e-10 * std::abs(ref));
  }
}

TEST_CASE("DtN coefficients") {
  for (int n = 0; n <= 30; ++n) {
    for (double kR : {0.2, 0.5, 1.0, 5.0, 12.0, 20.0}) {
      const auto c = sf::dtn_coefficient(n, kR, 1.0);
      CHECK(std::isfinite(c.real()));
      CHECK(c.imag() > 0.0);
      if (n <= 20 && (kR == 0.5 || kR == 1.0 || kR == 5.0)) {
        const double habs = std::abs(sf::hankel1(n, kR));
        const double expect = 2.0 / (std::numbers::pi * habs * habs);
        CHECK(c.imag() == doctest::Approx(expect).epsilon(1e-8));
      }
      CHECK(sf::dtn_coefficient(-n, kR, 1.0) == sf::dtn_coefficient(n, kR, 1.0));
    }
  }
  const auto c0 = sf::dtn_coefficient(0, 1.0, 1.0);
  const auto ref = -sf::hankel1(1, 1.0) / sf::hankel1(0, 1.0);
  CHECK(std::abs(c0 - ref) <= 1e-12 * std::abs(ref));
  // scaling: coefficient with (k, R) is (k / k') times the one at (k', R') when kR = k'R'
  CHECK(std::abs(sf::dtn_coefficient(3, 2.0, 1.5) - 2.0 * sf::dtn_coefficient(3, 3.0, 1.0) / 3.0) < 1e-12);
}

TEST_CASE("DtN overflow reports the mode") {
  bool thrown = false;
  try {
    sf::dtn_coefficient(60, 1e-6, 1.0);
  } catch (const OverflowError& e) {
    thrown = true;
    CHECK(e.mode() == 60);
  }
  CHECK(thrown);
}
