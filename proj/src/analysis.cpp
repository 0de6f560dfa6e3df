#include "crt/analysis.hpp"

#include <stdexcept>

#include "crt/cluster_summary.hpp"
#include "crt/gee.hpp"
#include "crt/iee.hpp"
#include "crt/mixed.hpp"

namespace crt {

std::string estimator_key(EstimatorId id) {
  switch (id) {
    case EstimatorId::IeeUnweighted: return "iee_unweighted";
    case EstimatorId::SummaryMarginalWeighted: return "summary_marginal_weighted";
    case EstimatorId::GeeExchangeable: return "gee_exchangeable";
    case EstimatorId::SummaryClusterSpecificWeighted: return "summary_cluster_specific_weighted";
    case EstimatorId::MixedModel: return "mixed_model";
    case EstimatorId::IeeWeighted: return "iee_weighted";
    case EstimatorId::SummaryMarginalUnweighted: return "summary_marginal_unweighted";
    case EstimatorId::SummaryClusterSpecificUnweighted: return "summary_cluster_specific_unweighted";
  }
  return "unknown";
}

std::optional<EstimatorId> parse_estimator_key(std::string_view key) {
  for (EstimatorId id : kAllEstimators) {
    if (estimator_key(id) == key) return id;
  }
  return std::nullopt;
}

std::string estimator_label(EstimatorId id, Measure measure) {
  switch (id) {
    case EstimatorId::IeeUnweighted: return "IEEs (unweighted)";
    case EstimatorId::SummaryMarginalWeighted:
    case EstimatorId::SummaryClusterSpecificWeighted: return "Cluster-level summaries (weighted)";
    case EstimatorId::GeeExchangeable: return "GEEs with exchangeable correlation (unweighted)";
    case EstimatorId::MixedModel:
      return measure == Measure::OddsRatio ? "Mixed-effects logistic regression model"
                                           : "Linear mixed-effects model";
    case EstimatorId::IeeWeighted: return "IEEs (weighted)";
    case EstimatorId::SummaryMarginalUnweighted:
    case EstimatorId::SummaryClusterSpecificUnweighted: return "Cluster-level summaries (unweighted)";
  }
  return "unknown";
}

EstimandSpec target_estimand(EstimatorId id, Measure measure) {
  EstimandSpec spec;
  spec.measure = measure;
  switch (id) {
    case EstimatorId::IeeUnweighted:
    case EstimatorId::SummaryMarginalWeighted:
    case EstimatorId::GeeExchangeable:
      spec.margin = Margin::Marginal;
      spec.weighting = Weighting::ParticipantAverage;
      break;
    case EstimatorId::SummaryClusterSpecificWeighted:
    case EstimatorId::MixedModel:
      spec.margin = Margin::ClusterSpecific;
      spec.weighting = Weighting::ParticipantAverage;
      break;
    case EstimatorId::IeeWeighted:
    case EstimatorId::SummaryMarginalUnweighted:
      spec.margin = Margin::Marginal;
      spec.weighting = Weighting::ClusterAverage;
      break;
    case EstimatorId::SummaryClusterSpecificUnweighted:
      spec.margin = Margin::ClusterSpecific;
      spec.weighting = Weighting::ClusterAverage;
      break;
  }
  return spec;
}

Measure resolve_measure(const ObservedDataset& data, const AnalysisOptions& options) {
  if (data.outcome_kind() == OutcomeKind::Continuous) return Measure::Difference;
  return options.measure.value_or(Measure::OddsRatio);
}

EstimateResult run_estimator(EstimatorId id, const ObservedDataset& data, Measure measure,
                             const AnalysisOptions& options) {
  SandwichSpec fg;
  fg.bound = options.fg_bound;
  switch (id) {
    case EstimatorId::IeeUnweighted:
      return iee_estimate(data, Weighting::ParticipantAverage, measure, fg);
    case EstimatorId::IeeWeighted:
      return iee_estimate(data, Weighting::ClusterAverage, measure, fg);
    case EstimatorId::SummaryMarginalWeighted:
      return marginal_summary_estimate(data, Weighting::ParticipantAverage, measure);
    case EstimatorId::SummaryMarginalUnweighted:
      return marginal_summary_estimate(data, Weighting::ClusterAverage, measure);
    case EstimatorId::SummaryClusterSpecificWeighted:
      return cluster_specific_summary_estimate(data, Weighting::ParticipantAverage, measure,
                                               options.boundary_policy);
    case EstimatorId::SummaryClusterSpecificUnweighted:
      return cluster_specific_summary_estimate(data, Weighting::ClusterAverage, measure,
                                               options.boundary_policy);
    case EstimatorId::GeeExchangeable: {
      GeeOptions gee;
      gee.sandwich = fg;
      return gee_fit(data, measure, gee);
    }
    case EstimatorId::MixedModel: {
      if (measure == Measure::Difference) return lmm_fit(data);
      GlmmOptions glmm;
      glmm.quad_nodes = options.quad_nodes;
      return glmm_logit_fit(data, glmm);
    }
  }
  throw std::logic_error("unhandled estimator");
}

std::size_t AnalysisGrid::success_count() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.result ? 1 : 0;
  return n;
}

const AnalysisCell& AnalysisGrid::cell(EstimatorId id) const {
  for (const auto& c : cells) {
    if (c.estimator == id) return c;
  }
  throw std::out_of_range("estimator not present in grid: " + estimator_key(id));
}

AnalysisGrid analyze(const ObservedDataset& input, const AnalysisOptions& options) {
  if (!(options.fg_bound > 0.0 && options.fg_bound < 1.0)) {
    throw Error(ErrorKind::Domain, "Fay-Graubard bound must lie in (0, 1)");
  }
  if (options.quad_nodes < 1) {
    throw Error(ErrorKind::Domain, "quadrature needs at least one node");
  }
  const bool filtered = options.min_cluster_size || options.max_cluster_size;
  const ObservedDataset data =
      filtered ? input.filter_by_size(options.min_cluster_size, options.max_cluster_size) : input;
  data.require_both_arms();
  if (options.measure == Measure::OddsRatio && data.outcome_kind() == OutcomeKind::Continuous) {
    // Silently switching would hide a user mistake.
    throw Error(ErrorKind::Validation, "odds ratios need binary outcomes");
  }

  AnalysisGrid grid;
  grid.measure = resolve_measure(data, options);
  grid.outcome_kind = data.outcome_kind();
  grid.clusters = data.cluster_count();
  grid.participants = data.participant_count();
  for (EstimatorId id : kAllEstimators) {
    AnalysisCell cell;
    cell.estimator = id;
    cell.estimand = target_estimand(id, grid.measure);
    try {
      cell.result = run_estimator(id, data, grid.measure, options);
    } catch (const Error& e) {
      cell.failure = CellFailure{e.kind(), e.what(), e.clusters()};
    }
    grid.cells.push_back(std::move(cell));
  }
  if (grid.success_count() == 0) {
    throw AnalysisFailure(std::move(grid));
  }
  return grid;
}

AnalysisFailure::AnalysisFailure(AnalysisGrid grid)
    : Error(grid.cells.empty() ? ErrorKind::InestimableVariance : grid.cells.front().failure->kind,
            "no estimator produced an estimate"),
      grid_(std::move(grid)) {}

}  // namespace crt
