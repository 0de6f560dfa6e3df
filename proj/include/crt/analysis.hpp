// The full estimator suite laid out as four estimand blocks with eight
// estimator rows.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "crt/core.hpp"

namespace crt {

// Row order of the report.
enum class EstimatorId {
  IeeUnweighted,
  SummaryMarginalWeighted,
  GeeExchangeable,
  SummaryClusterSpecificWeighted,
  MixedModel,
  IeeWeighted,
  SummaryMarginalUnweighted,
  SummaryClusterSpecificUnweighted,
};

inline constexpr std::array<EstimatorId, 8> kAllEstimators{
    EstimatorId::IeeUnweighted,
    EstimatorId::SummaryMarginalWeighted,
    EstimatorId::GeeExchangeable,
    EstimatorId::SummaryClusterSpecificWeighted,
    EstimatorId::MixedModel,
    EstimatorId::IeeWeighted,
    EstimatorId::SummaryMarginalUnweighted,
    EstimatorId::SummaryClusterSpecificUnweighted,
};

std::string estimator_key(EstimatorId id);
std::string estimator_label(EstimatorId id, Measure measure);
std::optional<EstimatorId> parse_estimator_key(std::string_view key);
// Estimand the estimator is reported under.
EstimandSpec target_estimand(EstimatorId id, Measure measure);

struct AnalysisOptions {
  // Empty: odds ratio for binary outcomes, difference for continuous ones.
  std::optional<Measure> measure;
  BoundaryPolicy boundary_policy = BoundaryPolicy::Error;
  double fg_bound = 0.75;
  int quad_nodes = 15;
  std::optional<std::size_t> min_cluster_size;
  std::optional<std::size_t> max_cluster_size;
};

Measure resolve_measure(const ObservedDataset& data, const AnalysisOptions& options);

EstimateResult run_estimator(EstimatorId id, const ObservedDataset& data, Measure measure,
                             const AnalysisOptions& options = {});

struct CellFailure {
  ErrorKind kind = ErrorKind::Validation;
  std::string message;
  std::vector<std::string> clusters;

  friend bool operator==(const CellFailure&, const CellFailure&) = default;
};

struct AnalysisCell {
  EstimatorId estimator = EstimatorId::IeeUnweighted;
  EstimandSpec estimand;
  std::optional<EstimateResult> result;
  std::optional<CellFailure> failure;

  friend bool operator==(const AnalysisCell& a, const AnalysisCell& b) {
    return a.estimator == b.estimator && a.estimand.key() == b.estimand.key() &&
           a.estimand.measure == b.estimand.measure && a.result == b.result &&
           a.failure == b.failure;
  }
};

struct AnalysisGrid {
  Measure measure = Measure::OddsRatio;
  OutcomeKind outcome_kind = OutcomeKind::Binary;
  std::size_t clusters = 0;
  std::size_t participants = 0;
  std::vector<AnalysisCell> cells;

  std::size_t success_count() const;
  const AnalysisCell& cell(EstimatorId id) const;
  friend bool operator==(const AnalysisGrid&, const AnalysisGrid&) = default;
};

// Thrown when every row failed; carries the grid of failure records.
class AnalysisFailure : public Error {
 public:
  explicit AnalysisFailure(AnalysisGrid grid);
  const AnalysisGrid& grid() const noexcept { return grid_; }

 private:
  AnalysisGrid grid_;
};

// Runs every row; per-row failures are recorded in the cell. Throws only
// when the input itself is unusable or no row could be estimated.
AnalysisGrid analyze(const ObservedDataset& data, const AnalysisOptions& options = {});

}  // namespace crt
