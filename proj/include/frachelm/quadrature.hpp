#pragma once

#include <array>
#include <vector>

namespace frachelm::quad {

struct Rule1D {
  std::vector<double> x;  // nodes on [0, 1]
  std::vector<double> w;  // weights summing to 1
};

/// n-point Gauss-Legendre rule mapped to [0, 1].
const Rule1D& gauss_legendre(int n);

struct RuleTri {
  std::vector<std::array<double, 2>> p;  // points in the reference triangle {s, t >= 0, s + t <= 1}
  std::vector<double> w;                 // weights summing to 1/2 (reference area)
};

/// Collapsed (Duffy) tensor Gauss rule with n x n points on the reference triangle.
const RuleTri& triangle_rule(int n);

}  // namespace frachelm::quad
