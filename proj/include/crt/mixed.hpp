// Random-intercept mixed models.
//
// lmm_fit: linear model y = alpha + beta z + u_j + e_ij fitted by profiling
// the (RE)ML criterion over the intracluster correlation.
// glmm_logit_fit: logistic model with a normal random intercept, marginal
// likelihood by adaptive Gauss-Hermite quadrature.
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "crt/core.hpp"

namespace crt {

struct VarianceComponents {
  double sigma_b_sq = 0.0;
  double sigma_w_sq = 1.0;

  double icc() const { return sigma_b_sq / (sigma_b_sq + sigma_w_sq); }
};

enum class VarianceCriterion { Reml, Ml };

struct LmmOptions {
  VarianceCriterion criterion = VarianceCriterion::Reml;
  std::optional<double> fixed_icc;
  double tolerance = 1e-8;
  double max_icc = 0.999;
};

struct LmmFit {
  Eigen::Vector2d coefficients = Eigen::Vector2d::Zero();
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
  VarianceComponents components;
  double icc = 0.0;
  double criterion_value = 0.0;  // -2 log (restricted) likelihood, up to a constant
  bool icc_boundary = false;
};

/// Profiled -2 log (restricted) likelihood at a given icc in [0, 1).
double lmm_profile_criterion(const ObservedDataset& data, double icc,
                             VarianceCriterion criterion = VarianceCriterion::Reml);

LmmFit fit_lmm(const ObservedDataset& data, const LmmOptions& options = {});

EstimateResult lmm_fit(const ObservedDataset& data, const LmmOptions& options = {});

/// Marginal log-likelihood of the random-intercept logistic model, evaluated
/// cluster by cluster with adaptive (mode-centred, curvature-scaled)
/// Gauss-Hermite quadrature. A single node is the Laplace approximation.
class GlmmLikelihood {
 public:
  GlmmLikelihood(const ObservedDataset& data, int quad_nodes);

  double log_likelihood(double alpha, double beta, double sigma) const;
  // d/d(alpha, beta, sigma) of log_likelihood.
  Eigen::Vector3d gradient(double alpha, double beta, double sigma) const;

 private:
  struct Pattern {
    double n;
    double events;
    int treatment;
    double multiplicity;
  };
  struct ClusterTerm {
    double log_lik;
    Eigen::Vector3d gradient;
  };
  ClusterTerm evaluate(const Pattern& p, double alpha, double beta, double sigma) const;

  std::vector<Pattern> patterns_;
  std::vector<double> nodes_;
  std::vector<double> log_weights_;
};

struct GlmmOptions {
  int quad_nodes = 15;
  // Hold sigma_B fixed (e.g. 0 collapses to ordinary logistic regression).
  std::optional<double> fixed_sigma_b;
  double gradient_tolerance = 1e-6;
  int max_iterations = 500;
};

struct GlmmFit {
  double alpha = 0.0;
  double beta = 0.0;
  double sigma_b = 0.0;
  double log_likelihood = 0.0;
  double beta_variance = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();  // at the optimum, w.r.t. (alpha, beta, sigma)
  bool converged = false;
  bool sigma_boundary = false;
  int iterations = 0;
};

GlmmFit fit_glmm_logit(const ObservedDataset& data, const GlmmOptions& options = {});

EstimateResult glmm_logit_fit(const ObservedDataset& data, const GlmmOptions& options = {});

// Delta(rho*) evaluated at rho* = vc.icc().
double implied_lmm_target(const PotentialOutcomeDataset& po, const VarianceComponents& vc);

}  // namespace crt
