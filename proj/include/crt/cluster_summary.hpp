// Analysis of cluster-level summaries.
//
// All four variants reduce to a weighted two-group comparison of cluster
// means (marginal) or cluster log-odds (cluster-specific), so the point
// estimates are computed in closed form. Standard errors come from the HC0
// sandwich of the corresponding cluster-level regression.
#pragma once

#include <string>
#include <vector>

#include "crt/core.hpp"

namespace crt {

struct SummaryRegressionFit {
  double alpha_hat = 0.0;  // link-scale intercept (control arm)
  double beta_hat = 0.0;   // link-scale treatment coefficient
  // Weighted arm aggregates on the response scale of the regression:
  // arm proportions for marginal fits, mean log-odds for cluster-specific ones.
  double arm_aggregate1 = 0.0;
  double arm_aggregate0 = 0.0;
  Weighting weights_used = Weighting::ParticipantAverage;

  // Per cluster, in dataset order.
  std::vector<double> weights;
  std::vector<int> treatment;
  std::vector<double> residuals;
  // d mu / d eta in each arm (1 for a linear working model).
  double link_derivative1 = 1.0;
  double link_derivative0 = 1.0;

  std::vector<std::string> corrected_clusters;
};

SummaryRegressionFit fit_marginal_summary(const ObservedDataset& data, Weighting weighting,
                                          Measure measure);

SummaryRegressionFit fit_cluster_specific_summary(const ObservedDataset& data,
                                                  Weighting weighting, Measure measure,
                                                  BoundaryPolicy policy = BoundaryPolicy::Error);

// HC0 variance of beta_hat:
//   (D'WD)^-1 (sum_j w_j^2 e_j^2 d_j d_j') (D'WD)^-1, entry (beta, beta)
// with design rows d_j = mu'_z (1, z_j).
double huber_white_vcov(const SummaryRegressionFit& fit);

EstimateResult marginal_summary_estimate(const ObservedDataset& data, Weighting weighting,
                                         Measure measure);

EstimateResult cluster_specific_summary_estimate(const ObservedDataset& data,
                                                 Weighting weighting, Measure measure,
                                                 BoundaryPolicy policy = BoundaryPolicy::Error);

}  // namespace crt
