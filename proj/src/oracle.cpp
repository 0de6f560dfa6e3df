#include "crt/oracle.hpp"

#include <cmath>

namespace crt {

namespace {

double arm_mean(const std::vector<double>& y) {
  CompensatedSum s;
  for (double v : y) s += v;
  return s.value() / static_cast<double>(y.size());
}

double odds(double p) { return p / (1.0 - p); }

bool interior(double p) { return p > 0.0 && p < 1.0; }

void require_binary(const PotentialOutcomeDataset& po) {
  if (po.outcome_kind() != OutcomeKind::Binary) {
    throw Error(ErrorKind::Validation, "odds-ratio estimands need binary potential outcomes");
  }
}

}  // namespace

double corrected_proportion(double mean, std::size_t n) {
  const double events = std::round(mean * static_cast<double>(n));
  return (events + 0.5) / (static_cast<double>(n) + 1.0);
}

std::vector<ClusterContrast> cluster_contrasts(const PotentialOutcomeDataset& po) {
  std::vector<ClusterContrast> out;
  out.reserve(po.cluster_count());
  const bool binary = po.outcome_kind() == OutcomeKind::Binary;
  for (const auto& c : po.clusters()) {
    ClusterContrast k;
    k.id = c.id;
    k.n = c.y1.size();
    k.mean1 = arm_mean(c.y1);
    k.mean0 = arm_mean(c.y0);
    k.beta = k.mean1 - k.mean0;
    if (binary && interior(k.mean1) && interior(k.mean0)) {
      k.odds_ratio = odds(k.mean1) / odds(k.mean0);
    }
    out.push_back(std::move(k));
  }
  return out;
}

double marginal_estimand(const PotentialOutcomeDataset& po, Weighting weighting,
                         Measure measure) {
  CompensatedSum s1, s0, total_weight;
  for (const auto& c : po.clusters()) {
    if (weighting == Weighting::ParticipantAverage) {
      for (double v : c.y1) s1 += v;
      for (double v : c.y0) s0 += v;
      total_weight += static_cast<double>(c.y1.size());
    } else {
      s1 += arm_mean(c.y1);
      s0 += arm_mean(c.y0);
      total_weight += 1.0;
    }
  }
  const double p1 = s1.value() / total_weight.value();
  const double p0 = s0.value() / total_weight.value();
  if (measure == Measure::Difference) return p1 - p0;

  require_binary(po);
  if (!interior(p1) || !interior(p0)) {
    throw Error(ErrorKind::UndefinedEstimand,
                "marginal odds ratio undefined: an arm mean equals 0 or 1");
  }
  return odds(p1) / odds(p0);
}

double cluster_specific_estimand(const PotentialOutcomeDataset& po, Weighting weighting,
                                 Measure measure, Averaging f, BoundaryPolicy policy) {
  const auto contrasts = cluster_contrasts(po);
  CompensatedSum numerator, denominator;

  if (measure == Measure::Difference) {
    for (const auto& k : contrasts) {
      const double w = weighting == Weighting::ParticipantAverage ? static_cast<double>(k.n) : 1.0;
      numerator += w * k.beta;
      denominator += w;
    }
    return numerator.value() / denominator.value();
  }

  require_binary(po);
  std::vector<std::string> offending;
  for (const auto& k : contrasts) {
    double log_or = 0.0;
    if (k.odds_ratio) {
      log_or = std::log(*k.odds_ratio);
    } else if (policy == BoundaryPolicy::ContinuityCorrection) {
      const double p1 = interior(k.mean1) ? k.mean1 : corrected_proportion(k.mean1, k.n);
      const double p0 = interior(k.mean0) ? k.mean0 : corrected_proportion(k.mean0, k.n);
      log_or = logit(p1) - logit(p0);
    } else {
      offending.push_back(k.id);
      continue;
    }
    const double w = weighting == Weighting::ParticipantAverage ? static_cast<double>(k.n) : 1.0;
    numerator += w * (f == Averaging::Log ? log_or : std::exp(log_or));
    denominator += w;
  }
  if (!offending.empty()) {
    std::string msg = "cluster-specific odds ratio undefined (arm mean at 0 or 1) in clusters:";
    for (const auto& id : offending) msg += " " + id;
    throw Error(ErrorKind::BoundednessViolation, msg, offending);
  }
  const double average = numerator.value() / denominator.value();
  // Identity averaging needs no back-transform.
  return f == Averaging::Log ? std::exp(average) : average;
}

double precision_weighted_estimand(const PotentialOutcomeDataset& po, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw Error(ErrorKind::Domain, "rho must lie in [0, 1]");
  }
  CompensatedSum numerator, denominator;
  for (const auto& k : cluster_contrasts(po)) {
    const double n = static_cast<double>(k.n);
    const double w = n / (1.0 + (n - 1.0) * rho);
    numerator += w * k.beta;
    denominator += w;
  }
  return numerator.value() / denominator.value();
}

double estimand_value(const PotentialOutcomeDataset& po, const EstimandSpec& spec,
                      BoundaryPolicy policy) {
  if (spec.margin == Margin::Marginal) {
    return marginal_estimand(po, spec.weighting, spec.measure);
  }
  return cluster_specific_estimand(po, spec.weighting, spec.measure, spec.averaging, policy);
}

}  // namespace crt
