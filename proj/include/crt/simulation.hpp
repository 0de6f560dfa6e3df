// Data-generating processes with controllable informative cluster size and a
// Monte Carlo study runner that scores estimators against oracle truths.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crt/analysis.hpp"
#include "crt/core.hpp"

namespace crt {

struct SizeStratum {
  std::size_t size = 1;
  double probability = 1.0;
  double effect = 0.0;                  // link scale (log odds, or mean shift)
  std::optional<double> control_base;   // overrides DgpConfig::control_base
};

struct DgpConfig {
  std::size_t n_clusters = 100;
  std::vector<SizeStratum> strata;
  OutcomeKind outcome = OutcomeKind::Binary;
  double control_base = 0.0;  // control-arm log odds (binary) or mean (continuous)
  double random_intercept_sd = 0.0;
  double residual_sd = 1.0;   // continuous outcomes only
  std::uint64_t seed = 1;
  bool informative = true;    // informative cluster size is intended

  double base_for(const SizeStratum& s) const { return s.control_base.value_or(control_base); }
  // Throws a validation error for an unusable configuration.
  void validate() const;
  // Non-fatal concerns, e.g. informativeness requested but impossible.
  std::vector<std::string> warnings() const;
};

struct GeneratedTrial {
  PotentialOutcomeDataset potential;
  ObservedDataset observed;
  std::vector<int> treatment;
  std::vector<std::string> warnings;
};

// Independent 64-bit stream seed for one replicate.
std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate);

// Deterministic in (config, replicate).
GeneratedTrial generate(const DgpConfig& config, std::uint64_t replicate);

struct StudyOptions {
  std::size_t replicates = 100;
  std::uint64_t first_replicate = 0;
  AnalysisOptions analysis;
  std::vector<EstimatorId> estimators{kAllEstimators.begin(), kAllEstimators.end()};
  unsigned threads = 0;  // 0: hardware concurrency
  bool keep_records = true;
};

struct ReplicateRecord {
  std::uint64_t replicate = 0;
  // Indexed like StudyReport::cells; natural scale. Empty on failure.
  std::vector<std::optional<double>> estimates;
  std::vector<std::optional<double>> ci_low;
  std::vector<std::optional<double>> ci_high;
  std::vector<std::optional<std::string>> failures;
  // Own-target truth per cell from this replicate's potential table.
  std::vector<std::optional<double>> truths;
  // Delta(rho) at the fitted icc, for a linear mixed model cell.
  std::optional<double> implied_lmm_target;
};

struct StudyCell {
  EstimatorId estimator = EstimatorId::IeeUnweighted;
  EstimandSpec estimand;
  std::size_t replicates = 0;  // successful fits
  std::size_t failures = 0;
  double mean_estimate = 0.0;       // natural scale
  double mean_link_estimate = 0.0;
  double empirical_se = 0.0;        // sd of link-scale estimates
  double mean_model_se = 0.0;       // mean link-scale standard error
  double mean_truth = 0.0;          // own target, averaged over replicates
  double bias_vs_replicate_truth = 0.0;
  double bias_vs_average_truth = 0.0;
  double coverage_replicate_truth = 0.0;
  double coverage_average_truth = 0.0;
  std::optional<double> mean_implied_target;
};

struct StudyReport {
  DgpConfig config;
  Measure measure = Measure::OddsRatio;
  std::size_t requested_replicates = 0;
  std::vector<StudyCell> cells;
  std::vector<ReplicateRecord> records;
  std::vector<std::string> warnings;

  const StudyCell& cell(EstimatorId id) const;
};

// Own-target truth for an estimator on a potential-outcome table; empty when
// the estimand is undefined for that table.
std::optional<double> estimator_truth(EstimatorId id, const PotentialOutcomeDataset& po,
                                      Measure measure, BoundaryPolicy policy);

StudyReport run_study(const DgpConfig& config, const StudyOptions& options);

}  // namespace crt
