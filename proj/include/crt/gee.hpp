// GEE with an exchangeable working correlation.
#pragma once

#include <Eigen/Dense>
#include <optional>

#include "crt/core.hpp"
#include "crt/glm_engine.hpp"

namespace crt {

struct GeeOptions {
  // Empty: estimate rho by the moment estimator. Otherwise hold it fixed.
  std::optional<double> fixed_rho;
  SandwichSpec sandwich;
  double tolerance = 1e-8;
  int max_iterations = 200;
};

struct GeeFit {
  Eigen::Vector2d coefficients = Eigen::Vector2d::Zero();
  Link link = Link::Identity;
  double rho_hat = 0.0;
  double phi_hat = 1.0;
  bool rho_clamped = false;
  bool converged = false;
  int iterations = 0;
  ScoreDecomposition decomposition;
};

// Valid exchangeable range (-1/(max n_j - 1), 1).
std::pair<double, double> exchangeable_rho_range(const ObservedDataset& data);

/// Alternates Fisher scoring for (alpha, beta) given rho with moment updates
///   phi = sum e^2 / (N - p)
///   rho = sum_j sum_{i<i'} e_ij e_i'j / (phi (sum_j n_j (n_j - 1) / 2 - p))
/// on Pearson residuals e. Out-of-range rho estimates are clamped and flagged.
GeeFit fit_gee_model(const ObservedDataset& data, Link link, const GeeOptions& options = {});

EstimateResult gee_fit(const ObservedDataset& data, Measure measure, const GeeOptions& options = {});

}  // namespace crt
