// True finite-population estimand values from complete potential-outcome
// tables. These are the ground truth used by the simulation studies.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crt/core.hpp"

namespace crt {

struct ClusterContrast {
  std::string id;
  std::size_t n = 0;
  double mean1 = 0.0;
  double mean0 = 0.0;
  double beta = 0.0;                 // mean1 - mean0
  std::optional<double> odds_ratio;  // present iff both means lie in (0,1)
};

std::vector<ClusterContrast> cluster_contrasts(const PotentialOutcomeDataset& po);

// Marginal estimands: arm means are averaged first (pooled over participants
// or equally over clusters), then contrasted.
double marginal_estimand(const PotentialOutcomeDataset& po, Weighting weighting, Measure measure);

// Cluster-specific estimands: a weighted average of per-cluster contrasts.
// For odds ratios with Averaging::Log this is the (weighted) geometric mean of
// the OR_j; with Averaging::Identity it is their arithmetic mean.
//
// Under BoundaryPolicy::ContinuityCorrection an arm mean at 0 or 1 is replaced
// by (events + 0.5) / (n + 1), matching the correction applied by the
// cluster-level summary estimator.
double cluster_specific_estimand(const PotentialOutcomeDataset& po, Weighting weighting,
                                 Measure measure, Averaging f = Averaging::Log,
                                 BoundaryPolicy policy = BoundaryPolicy::Error);

// Difference estimand with cluster weights n_j / (1 + (n_j - 1) rho), the
// quantity targeted by a random-intercept linear mixed model.
double precision_weighted_estimand(const PotentialOutcomeDataset& po, double rho);

double estimand_value(const PotentialOutcomeDataset& po, const EstimandSpec& spec,
                      BoundaryPolicy policy = BoundaryPolicy::Error);

// Continuity-corrected proportion used for boundary clusters.
double corrected_proportion(double mean, std::size_t n);

}  // namespace crt
