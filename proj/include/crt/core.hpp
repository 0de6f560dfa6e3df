// Domain types shared across the estimand and estimator modules.
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crt {

enum class OutcomeKind { Binary, Continuous };
enum class Margin { Marginal, ClusterSpecific };
enum class Weighting { ParticipantAverage, ClusterAverage };
enum class Measure { Difference, OddsRatio };
// Function f applied to cluster-specific odds ratios before averaging.
enum class Averaging { Log, Identity };
enum class BoundaryPolicy { Error, ContinuityCorrection };

enum class ErrorKind {
  Validation,
  Domain,
  UndefinedEstimand,
  BoundednessViolation,
  DegenerateArm,
  InestimableVariance,
  Separation,
  NonConvergence,
  RankDeficiency,
};

std::string_view to_string(ErrorKind kind);
std::string_view to_string(OutcomeKind kind);
std::string_view to_string(Measure measure);
std::string_view to_string(Weighting weighting);
std::string_view to_string(Margin margin);
std::string_view to_string(BoundaryPolicy policy);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::vector<std::string> clusters = {});

  ErrorKind kind() const noexcept { return kind_; }
  // Cluster ids implicated in the failure, if any.
  const std::vector<std::string>& clusters() const noexcept { return clusters_; }
  // True for problems with the input rather than with the fit.
  bool is_input_error() const noexcept {
    return kind_ == ErrorKind::Validation || kind_ == ErrorKind::Domain;
  }

 private:
  ErrorKind kind_;
  std::vector<std::string> clusters_;
};

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

struct ClusterRecord {
  std::string id;
  int treatment = 0;
  std::vector<double> outcomes;
};

/// Observed trial data: one treatment indicator and a list of outcomes per
/// cluster. Validated on construction and immutable afterwards.
class ObservedDataset {
 public:
  // When `kind` is empty it is inferred: binary iff every outcome is 0 or 1.
  explicit ObservedDataset(std::vector<ClusterRecord> clusters,
                           std::optional<OutcomeKind> kind = std::nullopt);

  const std::vector<ClusterRecord>& clusters() const noexcept { return clusters_; }
  OutcomeKind outcome_kind() const noexcept { return kind_; }
  std::size_t cluster_count() const noexcept { return clusters_.size(); }
  std::size_t participant_count() const noexcept { return participants_; }
  std::size_t arm_cluster_count(int treatment) const noexcept;
  std::size_t max_cluster_size() const noexcept;

  // Throws a validation error unless both arms hold at least one cluster.
  void require_both_arms() const;

  // Keeps clusters with min_size <= n_j <= max_size.
  ObservedDataset filter_by_size(std::optional<std::size_t> min_size,
                                 std::optional<std::size_t> max_size) const;

 private:
  std::vector<ClusterRecord> clusters_;
  OutcomeKind kind_ = OutcomeKind::Continuous;
  std::size_t participants_ = 0;
};

struct PotentialClusterRecord {
  std::string id;
  std::vector<double> y1;
  std::vector<double> y0;
};

/// Complete table of both potential outcomes for every participant.
class PotentialOutcomeDataset {
 public:
  explicit PotentialOutcomeDataset(std::vector<PotentialClusterRecord> clusters,
                                   std::optional<OutcomeKind> kind = std::nullopt);

  const std::vector<PotentialClusterRecord>& clusters() const noexcept { return clusters_; }
  OutcomeKind outcome_kind() const noexcept { return kind_; }
  std::size_t cluster_count() const noexcept { return clusters_.size(); }
  std::size_t participant_count() const noexcept { return participants_; }

  // Observed data revealed by assigning treatment[j] to cluster j.
  ObservedDataset reveal(const std::vector<int>& treatment) const;

 private:
  std::vector<PotentialClusterRecord> clusters_;
  OutcomeKind kind_ = OutcomeKind::Continuous;
  std::size_t participants_ = 0;
};

struct ClusterSummary {
  std::string id;
  int treatment = 0;
  std::size_t n = 0;
  double mean = 0.0;
  // log(mean / (1 - mean)); only for binary outcomes with 0 < mean < 1.
  std::optional<double> log_odds;
};

std::vector<ClusterSummary> summarize_clusters(const ObservedDataset& data);

struct EstimandSpec {
  Margin margin = Margin::Marginal;
  Weighting weighting = Weighting::ParticipantAverage;
  Measure measure = Measure::OddsRatio;
  Averaging averaging = Averaging::Log;

  // e.g. "marginal_participant_average"
  std::string key() const;
  // e.g. "Marginal, participant-average"
  std::string label() const;
};

struct VarianceMethod {
  enum class Kind { ModelBased, HC0, FayGraubard };
  Kind kind = Kind::HC0;
  double bound = 0.75;  // Fay-Graubard cap b; ignored otherwise

  std::string label() const;
  static VarianceMethod parse(std::string_view label);
  friend bool operator==(const VarianceMethod&, const VarianceMethod&) = default;
};

struct Diagnostics {
  std::map<std::string, double> values;
  std::vector<std::string> flags;

  bool has_flag(std::string_view flag) const;
  friend bool operator==(const Diagnostics&, const Diagnostics&) = default;
};

struct EstimateResult {
  Measure measure = Measure::OddsRatio;
  double estimate = 0.0;  // natural scale
  double link_scale_estimate = 0.0;
  double se_link = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  // Degrees of freedom of the t reference; empty for a normal reference.
  std::optional<double> df;
  VarianceMethod variance_method;
  Diagnostics diagnostics;

  friend bool operator==(const EstimateResult&, const EstimateResult&) = default;
};

double logit(double p);
double expit(double x);

}  // namespace crt
