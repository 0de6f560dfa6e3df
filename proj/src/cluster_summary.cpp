#include "crt/cluster_summary.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "crt/inference.hpp"
#include "crt/oracle.hpp"

namespace crt {

namespace {

struct ArmTotals {
  CompensatedSum weight[2];
  CompensatedSum weighted_value[2];

  double mean(int z) const { return weighted_value[z].value() / weight[z].value(); }
};

double weight_for(const ClusterSummary& s, Weighting weighting) {
  return weighting == Weighting::ParticipantAverage ? static_cast<double>(s.n) : 1.0;
}

// Shared tail of both fits once per-cluster responses are known.
SummaryRegressionFit finish_fit(const std::vector<ClusterSummary>& summaries,
                                const std::vector<double>& response, Weighting weighting) {
  ArmTotals totals;
  SummaryRegressionFit fit;
  fit.weights_used = weighting;
  for (std::size_t j = 0; j < summaries.size(); ++j) {
    const double w = weight_for(summaries[j], weighting);
    const int z = summaries[j].treatment;
    totals.weight[z] += w;
    totals.weighted_value[z] += w * response[j];
    fit.weights.push_back(w);
    fit.treatment.push_back(z);
  }
  fit.arm_aggregate1 = totals.mean(1);
  fit.arm_aggregate0 = totals.mean(0);
  for (std::size_t j = 0; j < summaries.size(); ++j) {
    const double centre = summaries[j].treatment == 1 ? fit.arm_aggregate1 : fit.arm_aggregate0;
    fit.residuals.push_back(response[j] - centre);
  }
  return fit;
}

}  // namespace

SummaryRegressionFit fit_marginal_summary(const ObservedDataset& data, Weighting weighting,
                                          Measure measure) {
  data.require_both_arms();
  const auto summaries = summarize_clusters(data);
  std::vector<double> means;
  means.reserve(summaries.size());
  for (const auto& s : summaries) means.push_back(s.mean);

  auto fit = finish_fit(summaries, means, weighting);
  const double p1 = fit.arm_aggregate1;
  const double p0 = fit.arm_aggregate0;
  if (measure == Measure::Difference) {
    fit.alpha_hat = p0;
    fit.beta_hat = p1 - p0;
    return fit;
  }
  if (data.outcome_kind() != OutcomeKind::Binary) {
    throw Error(ErrorKind::Validation, "odds ratio needs binary outcomes");
  }
  if (!(p1 > 0.0 && p1 < 1.0) || !(p0 > 0.0 && p0 < 1.0)) {
    throw Error(ErrorKind::DegenerateArm, "an arm's pooled proportion equals 0 or 1");
  }
  fit.alpha_hat = logit(p0);
  fit.beta_hat = logit(p1) - logit(p0);
  fit.link_derivative1 = p1 * (1.0 - p1);
  fit.link_derivative0 = p0 * (1.0 - p0);
  return fit;
}

SummaryRegressionFit fit_cluster_specific_summary(const ObservedDataset& data,
                                                  Weighting weighting, Measure measure,
                                                  BoundaryPolicy policy) {
  if (measure == Measure::Difference) {
    // No transformation: identical to the marginal estimator.
    return fit_marginal_summary(data, weighting, measure);
  }
  data.require_both_arms();
  if (data.outcome_kind() != OutcomeKind::Binary) {
    throw Error(ErrorKind::Validation, "odds ratio needs binary outcomes");
  }
  const auto summaries = summarize_clusters(data);
  std::vector<double> log_odds;
  std::vector<std::string> boundary;
  for (const auto& s : summaries) {
    if (s.log_odds) {
      log_odds.push_back(*s.log_odds);
    } else {
      boundary.push_back(s.id);
      log_odds.push_back(logit(corrected_proportion(s.mean, s.n)));
    }
  }
  if (!boundary.empty() && policy == BoundaryPolicy::Error) {
    std::string msg = "cluster proportion equals 0 or 1 in clusters:";
    for (const auto& id : boundary) msg += " " + id;
    throw Error(ErrorKind::BoundednessViolation, msg, boundary);
  }
  auto fit = finish_fit(summaries, log_odds, weighting);
  fit.alpha_hat = fit.arm_aggregate0;
  fit.beta_hat = fit.arm_aggregate1 - fit.arm_aggregate0;
  fit.corrected_clusters = std::move(boundary);
  return fit;
}

double huber_white_vcov(const SummaryRegressionFit& fit) {
  std::size_t per_arm[2] = {0, 0};
  for (int z : fit.treatment) ++per_arm[z];
  if (per_arm[0] < 2 || per_arm[1] < 2) {
    throw Error(ErrorKind::InestimableVariance,
                "HC0 variance needs at least two clusters in each arm");
  }
  Eigen::Matrix2d bread = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d meat = Eigen::Matrix2d::Zero();
  for (std::size_t j = 0; j < fit.weights.size(); ++j) {
    const int z = fit.treatment[j];
    const double slope = z == 1 ? fit.link_derivative1 : fit.link_derivative0;
    const Eigen::Vector2d d(slope, slope * z);
    const double w = fit.weights[j];
    const double e = fit.residuals[j];
    bread += w * d * d.transpose();
    meat += w * w * e * e * d * d.transpose();
  }
  const Eigen::Matrix2d inv = bread.inverse();
  return (inv * meat * inv)(1, 1);
}

namespace {

EstimateResult summary_result(const SummaryRegressionFit& fit, const ObservedDataset& data,
                              Measure measure) {
  const double variance = huber_white_vcov(fit);
  Diagnostics diag;
  diag.values["clusters"] = static_cast<double>(data.cluster_count());
  diag.values["arm_aggregate1"] = fit.arm_aggregate1;
  diag.values["arm_aggregate0"] = fit.arm_aggregate0;
  if (!fit.corrected_clusters.empty()) {
    diag.flags.push_back("continuity_correction");
    diag.values["corrected_clusters"] = static_cast<double>(fit.corrected_clusters.size());
  }
  const double df = static_cast<double>(data.cluster_count()) - 2.0;
  return make_wald_result(measure, fit.beta_hat, std::sqrt(variance), df,
                          {VarianceMethod::Kind::HC0, 0.75}, std::move(diag));
}

}  // namespace

EstimateResult marginal_summary_estimate(const ObservedDataset& data, Weighting weighting,
                                         Measure measure) {
  return summary_result(fit_marginal_summary(data, weighting, measure), data, measure);
}

EstimateResult cluster_specific_summary_estimate(const ObservedDataset& data,
                                                 Weighting weighting, Measure measure,
                                                 BoundaryPolicy policy) {
  return summary_result(fit_cluster_specific_summary(data, weighting, measure, policy), data,
                        measure);
}

}  // namespace crt
