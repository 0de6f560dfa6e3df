#include "crt/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace crt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::UndefinedEstimand: return "undefined_estimand";
    case ErrorKind::BoundednessViolation: return "boundedness_violation";
    case ErrorKind::DegenerateArm: return "degenerate_arm";
    case ErrorKind::InestimableVariance: return "inestimable_variance";
    case ErrorKind::Separation: return "separation";
    case ErrorKind::NonConvergence: return "non_convergence";
    case ErrorKind::RankDeficiency: return "rank_deficiency";
  }
  return "unknown";
}

std::string_view to_string(OutcomeKind kind) {
  return kind == OutcomeKind::Binary ? "binary" : "continuous";
}

std::string_view to_string(Measure measure) {
  return measure == Measure::OddsRatio ? "odds_ratio" : "difference";
}

std::string_view to_string(Weighting weighting) {
  return weighting == Weighting::ParticipantAverage ? "participant_average"
                                                    : "cluster_average";
}

std::string_view to_string(Margin margin) {
  return margin == Margin::Marginal ? "marginal" : "cluster_specific";
}

std::string_view to_string(BoundaryPolicy policy) {
  return policy == BoundaryPolicy::Error ? "error" : "continuity_correction";
}

Error::Error(ErrorKind kind, const std::string& message, std::vector<std::string> clusters)
    : std::runtime_error(message), kind_(kind), clusters_(std::move(clusters)) {}

void CompensatedSum::add(double x) noexcept {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

namespace {

bool is_binary_value(double v) { return v == 0.0 || v == 1.0; }

void check_values(const std::vector<double>& values, const std::string& id,
                  const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::Validation,
                  "cluster '" + id + "' has a missing or non-finite " + what, {id});
    }
  }
}

void check_unique_ids(const std::set<std::string>& seen, const std::string& id) {
  if (seen.count(id) != 0) {
    throw Error(ErrorKind::Validation, "duplicate cluster id '" + id + "'", {id});
  }
}

}  // namespace

ObservedDataset::ObservedDataset(std::vector<ClusterRecord> clusters,
                                 std::optional<OutcomeKind> kind)
    : clusters_(std::move(clusters)) {
  if (clusters_.empty()) {
    throw Error(ErrorKind::Validation, "dataset has no clusters");
  }
  std::set<std::string> seen;
  bool all_binary = true;
  for (const auto& c : clusters_) {
    check_unique_ids(seen, c.id);
    seen.insert(c.id);
    if (c.outcomes.empty()) {
      throw Error(ErrorKind::Validation, "cluster '" + c.id + "' has no outcomes", {c.id});
    }
    if (c.treatment != 0 && c.treatment != 1) {
      throw Error(ErrorKind::Validation,
                  "cluster '" + c.id + "' has treatment other than 0/1", {c.id});
    }
    check_values(c.outcomes, c.id, "outcome");
    all_binary = all_binary && std::all_of(c.outcomes.begin(), c.outcomes.end(), is_binary_value);
    participants_ += c.outcomes.size();
  }
  if (kind == OutcomeKind::Binary && !all_binary) {
    throw Error(ErrorKind::Domain, "binary outcome kind requires every outcome in {0,1}");
  }
  kind_ = kind.value_or(all_binary ? OutcomeKind::Binary : OutcomeKind::Continuous);
}

std::size_t ObservedDataset::arm_cluster_count(int treatment) const noexcept {
  return static_cast<std::size_t>(std::count_if(
      clusters_.begin(), clusters_.end(),
      [treatment](const ClusterRecord& c) { return c.treatment == treatment; }));
}

std::size_t ObservedDataset::max_cluster_size() const noexcept {
  std::size_t m = 0;
  for (const auto& c : clusters_) m = std::max(m, c.outcomes.size());
  return m;
}

void ObservedDataset::require_both_arms() const {
  if (arm_cluster_count(1) == 0 || arm_cluster_count(0) == 0) {
    throw Error(ErrorKind::Validation,
                "estimation needs at least one treated and one control cluster");
  }
}

ObservedDataset ObservedDataset::filter_by_size(std::optional<std::size_t> min_size,
                                                std::optional<std::size_t> max_size) const {
  std::vector<ClusterRecord> kept;
  for (const auto& c : clusters_) {
    const auto n = c.outcomes.size();
    if (min_size && n < *min_size) continue;
    if (max_size && n > *max_size) continue;
    kept.push_back(c);
  }
  if (kept.empty()) {
    throw Error(ErrorKind::Validation, "cluster-size filter removed every cluster");
  }
  return ObservedDataset(std::move(kept), kind_);
}

PotentialOutcomeDataset::PotentialOutcomeDataset(std::vector<PotentialClusterRecord> clusters,
                                                 std::optional<OutcomeKind> kind)
    : clusters_(std::move(clusters)) {
  if (clusters_.empty()) {
    throw Error(ErrorKind::Validation, "potential-outcome table has no clusters");
  }
  std::set<std::string> seen;
  bool all_binary = true;
  for (const auto& c : clusters_) {
    check_unique_ids(seen, c.id);
    seen.insert(c.id);
    if (c.y1.size() != c.y0.size()) {
      throw Error(ErrorKind::Validation,
                  "cluster '" + c.id + "' has unequal y1/y0 lengths", {c.id});
    }
    if (c.y1.empty()) {
      throw Error(ErrorKind::Validation, "cluster '" + c.id + "' has no participants", {c.id});
    }
    check_values(c.y1, c.id, "y1 value");
    check_values(c.y0, c.id, "y0 value");
    all_binary = all_binary && std::all_of(c.y1.begin(), c.y1.end(), is_binary_value) &&
                 std::all_of(c.y0.begin(), c.y0.end(), is_binary_value);
    participants_ += c.y1.size();
  }
  if (kind == OutcomeKind::Binary && !all_binary) {
    throw Error(ErrorKind::Domain, "binary outcome kind requires every potential outcome in {0,1}");
  }
  kind_ = kind.value_or(all_binary ? OutcomeKind::Binary : OutcomeKind::Continuous);
}

ObservedDataset PotentialOutcomeDataset::reveal(const std::vector<int>& treatment) const {
  if (treatment.size() != clusters_.size()) {
    throw Error(ErrorKind::Validation, "assignment length does not match cluster count");
  }
  std::vector<ClusterRecord> observed;
  observed.reserve(clusters_.size());
  for (std::size_t j = 0; j < clusters_.size(); ++j) {
    const auto& c = clusters_[j];
    observed.push_back({c.id, treatment[j], treatment[j] == 1 ? c.y1 : c.y0});
  }
  return ObservedDataset(std::move(observed), kind_);
}

std::vector<ClusterSummary> summarize_clusters(const ObservedDataset& data) {
  std::vector<ClusterSummary> out;
  out.reserve(data.cluster_count());
  for (const auto& c : data.clusters()) {
    if (c.outcomes.empty()) {
      throw Error(ErrorKind::Validation, "cluster '" + c.id + "' has no outcomes", {c.id});
    }
    CompensatedSum total;
    for (double y : c.outcomes) total += y;
    ClusterSummary s;
    s.id = c.id;
    s.treatment = c.treatment;
    s.n = c.outcomes.size();
    s.mean = total.value() / static_cast<double>(s.n);
    if (data.outcome_kind() == OutcomeKind::Binary && s.mean > 0.0 && s.mean < 1.0) {
      s.log_odds = logit(s.mean);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string EstimandSpec::key() const {
  return std::string(to_string(margin)) + "_" + std::string(to_string(weighting));
}

std::string EstimandSpec::label() const {
  std::string s = margin == Margin::Marginal ? "Marginal" : "Cluster-specific";
  s += weighting == Weighting::ParticipantAverage ? ", participant-average" : ", cluster-average";
  return s;
}

std::string VarianceMethod::label() const {
  switch (kind) {
    case Kind::ModelBased: return "model_based";
    case Kind::HC0: return "hc0";
    case Kind::FayGraubard: {
      std::string b = std::to_string(bound);
      b.erase(b.find_last_not_of('0') + 1);
      if (!b.empty() && b.back() == '.') b.pop_back();
      return "fay_graubard(" + b + ")";
    }
  }
  return "unknown";
}

VarianceMethod VarianceMethod::parse(std::string_view label) {
  if (label == "model_based") return {Kind::ModelBased, 0.75};
  if (label == "hc0") return {Kind::HC0, 0.75};
  constexpr std::string_view prefix = "fay_graubard(";
  if (label.substr(0, prefix.size()) == prefix && label.back() == ')') {
    const std::string inner(label.substr(prefix.size(), label.size() - prefix.size() - 1));
    return {Kind::FayGraubard, std::stod(inner)};
  }
  throw Error(ErrorKind::Validation, "unknown variance method '" + std::string(label) + "'");
}

bool Diagnostics::has_flag(std::string_view flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace crt
