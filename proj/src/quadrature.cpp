#include "frachelm/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace frachelm::quad {

namespace {

Rule1D make_gauss_legendre(int n) {
  Rule1D r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) {
        p1 = z;
        p0 = 1.0;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double p0 = 1.0;
    double p1 = z;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (z * p1 - p0) / (z * z - 1.0);
    r.x[n - 1 - i] = 0.5 * (1.0 + z);
    r.w[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return r;
}

RuleTri make_triangle_rule(int n) {
  const Rule1D g = make_gauss_legendre(n);
  RuleTri r;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double u = g.x[i];
      const double v = g.x[j];
      r.p.push_back({u, v * (1.0 - u)});
      r.w.push_back(g.w[i] * g.w[j] * (1.0 - u));
    }
  }
  return r;
}

std::mutex cache_mutex;

}  // namespace

const Rule1D& gauss_legendre(int n) {
  if (n < 1 || n > 200) throw std::invalid_argument("gauss_legendre: n must be in [1, 200]");
  static std::map<int, Rule1D> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_gauss_legendre(n)).first;
  return it->second;
}

const RuleTri& triangle_rule(int n) {
  if (n < 1 || n > 200) throw std::invalid_argument("triangle_rule: n must be in [1, 200]");
  static std::map<int, RuleTri> cache;
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_triangle_rule(n)).first;
  return it->second;
}

}  // namespace frachelm::quad
