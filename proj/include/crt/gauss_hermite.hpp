#pragma once

#include <vector>

namespace crt {

/// Gauss-Hermite rule for the weight exp(-x^2), via Golub-Welsch.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

QuadratureRule gauss_hermite(int points);

}  // namespace crt
