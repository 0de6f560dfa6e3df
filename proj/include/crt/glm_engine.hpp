// Working-independence GLM fits on participant-level data and the
// cluster-robust sandwich shared by the IEE and GEE estimators.
//
// The design is always (intercept, treatment); treatment is constant within
// a cluster.
#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "crt/core.hpp"

namespace crt {

enum class Link { Identity, Logit };

Link link_for(Measure measure);

/// Per-cluster pieces of an estimating-equation fit. `information[j]` is
/// D_j' V_j^-1 D_j and `scores[j]` is U_j; `bread` is their sum over clusters.
struct ScoreDecomposition {
  Eigen::Matrix2d bread = Eigen::Matrix2d::Zero();
  std::vector<Eigen::Vector2d> scores;
  std::vector<Eigen::Matrix2d> information;
  std::vector<int> treatment;
};

struct GlmFit {
  Eigen::Vector2d coefficients = Eigen::Vector2d::Zero();  // (alpha, beta)
  Link link = Link::Identity;
  std::vector<double> weights;        // per observation, dataset order
  std::vector<double> fitted_values;  // per cluster
  ScoreDecomposition decomposition;
  bool converged = false;
  int iterations = 0;
};

struct SandwichSpec {
  enum class Correction { None, FayGraubard };
  Correction correction = Correction::FayGraubard;
  double bound = 0.75;  // b in (0, 1)

  VarianceMethod method() const;
};

// Per-observation weights, flattened in dataset order.
std::vector<double> unit_weights(const ObservedDataset& data);
std::vector<double> inverse_size_weights(const ObservedDataset& data);

/// Weighted least squares (Identity) or IRLS (Logit, binomial working
/// variance, start at zero, relative tolerance 1e-10, at most 100 steps).
GlmFit fit_working_glm(const ObservedDataset& data, Link link, std::span<const double> obs_weights);

// Full 2x2 sandwich covariance A^-1 (sum_j H_j U_j U_j' H_j) A^-1.
Eigen::Matrix2d cluster_robust_covariance(const ScoreDecomposition& fit, const SandwichSpec& spec);

// The treatment-coefficient entry of cluster_robust_covariance.
double cluster_robust_vcov(const ScoreDecomposition& fit, const SandwichSpec& spec);
double cluster_robust_vcov(const GlmFit& fit, const SandwichSpec& spec);

}  // namespace crt
