#include "crt/gauss_hermite.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "crt/core.hpp"

namespace crt {

QuadratureRule gauss_hermite(int points) {
  if (points < 1) {
    throw Error(ErrorKind::Domain, "quadrature needs at least one node");
  }
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(points, points);
  for (int k = 1; k < points; ++k) {
    const double off = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(points);
  rule.weights.resize(points);
  const double mass = std::sqrt(std::numbers::pi);
  for (int k = 0; k < points; ++k) {
    const double x = solver.eigenvalues()(k);
    const double v0 = solver.eigenvectors()(0, k);
    // Symmetrise: the exact rule is symmetric about zero.
    rule.nodes[k] = std::abs(x) < 1e-14 ? 0.0 : x;
    rule.weights[k] = mass * v0 * v0;
  }
  return rule;
}

}  // namespace crt
