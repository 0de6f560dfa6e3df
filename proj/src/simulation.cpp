#include "crt/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <mutex>
#include <random>
#include <set>
#include <stdexcept>
#include <thread>

#include "crt/oracle.hpp"

namespace crt {

void DgpConfig::validate() const {
  if (n_clusters < 4) throw Error(ErrorKind::Validation, "n_clusters must be at least 4");
  if (strata.empty()) throw Error(ErrorKind::Validation, "at least one cluster size is required");
  double total = 0.0;
  for (const auto& s : strata) {
    if (s.size < 1) throw Error(ErrorKind::Validation, "cluster sizes must be at least 1");
    if (!(s.probability >= 0.0) || !std::isfinite(s.probability)) {
      throw Error(ErrorKind::Validation, "size probabilities must be non-negative");
    }
    if (!std::isfinite(s.effect) || !std::isfinite(base_for(s))) {
      throw Error(ErrorKind::Validation, "effects and control bases must be finite");
    }
    total += s.probability;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::Validation, "size probabilities must sum to 1");
  }
  if (!(random_intercept_sd >= 0.0) || !std::isfinite(random_intercept_sd)) {
    throw Error(ErrorKind::Validation, "random_intercept_sd must be non-negative");
  }
  if (!(residual_sd >= 0.0) || !std::isfinite(residual_sd)) {
    throw Error(ErrorKind::Validation, "residual_sd must be non-negative");
  }
}

std::vector<std::string> DgpConfig::warnings() const {
  std::vector<std::string> out;
  if (!informative) return out;
  std::set<std::size_t> sizes;
  std::set<double> effects, bases;
  for (const auto& s : strata) {
    if (s.probability <= 0.0) continue;
    sizes.insert(s.size);
    effects.insert(s.effect);
    bases.insert(base_for(s));
  }
  if (sizes.size() <= 1 || (effects.size() <= 1 && bases.size() <= 1)) {
    out.emplace_back("informative cluster size requested but sizes or effects do not vary");
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate) {
  return splitmix64(splitmix64(seed) ^ splitmix64(replicate + 0x632be59bd9b4e019ULL));
}

GeneratedTrial generate(const DgpConfig& config, std::uint64_t replicate) {
  config.validate();
  std::mt19937_64 rng(replicate_seed(config.seed, replicate));
  std::vector<double> probs;
  for (const auto& s : config.strata) probs.push_back(s.probability);
  std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const std::size_t m = config.n_clusters;
  std::vector<PotentialClusterRecord> clusters;
  clusters.reserve(m);
  const bool binary = config.outcome == OutcomeKind::Binary;
  for (std::size_t j = 0; j < m; ++j) {
    const SizeStratum& s = config.strata[pick(rng)];
    const double intercept = config.random_intercept_sd * normal(rng);
    const double base = config.base_for(s) + intercept;
    PotentialClusterRecord c;
    c.id = "c" + std::to_string(j + 1);
    c.y1.resize(s.size);
    c.y0.resize(s.size);
    if (binary) {
      const double p1 = expit(base + s.effect);
      const double p0 = expit(base);
      // One uniform per participant couples the two worlds, so a null effect
      // gives identical potential outcomes.
      for (std::size_t i = 0; i < s.size; ++i) {
        const double u = uniform(rng);
        c.y1[i] = u < p1 ? 1.0 : 0.0;
        c.y0[i] = u < p0 ? 1.0 : 0.0;
      }
    } else {
      for (std::size_t i = 0; i < s.size; ++i) {
        const double e = config.residual_sd * normal(rng);
        c.y1[i] = base + s.effect + e;
        c.y0[i] = base + e;
      }
    }
    clusters.push_back(std::move(c));
  }

  // Complete 1:1 randomisation; with odd M the extra cluster goes to a coin flip.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t treated = m / 2;
  if (m % 2 == 1 && uniform(rng) < 0.5) ++treated;
  std::vector<int> treatment(m, 0);
  for (std::size_t k = 0; k < treated; ++k) treatment[order[k]] = 1;

  PotentialOutcomeDataset po(std::move(clusters), config.outcome);
  ObservedDataset observed = po.reveal(treatment);
  return {std::move(po), std::move(observed), std::move(treatment), config.warnings()};
}

std::optional<double> estimator_truth(EstimatorId id, const PotentialOutcomeDataset& po,
                                      Measure measure, BoundaryPolicy policy) {
  try {
    return estimand_value(po, target_estimand(id, measure), policy);
  } catch (const Error& e) {
    if (e.is_input_error()) throw;
    return std::nullopt;
  }
}

const StudyCell& StudyReport::cell(EstimatorId id) const {
  for (const auto& c : cells) {
    if (c.estimator == id) return c;
  }
  throw std::out_of_range("estimator not in study: " + estimator_key(id));
}

namespace {

struct Outcome {
  ReplicateRecord record;
  std::vector<std::optional<double>> link_estimates;
  std::vector<std::optional<double>> link_se;
};

Outcome run_replicate(const DgpConfig& config, const StudyOptions& options, Measure measure,
                      std::uint64_t replicate) {
  const GeneratedTrial trial = generate(config, replicate);
  const std::size_t k = options.estimators.size();
  Outcome out;
  auto& r = out.record;
  r.replicate = replicate;
  r.estimates.resize(k);
  r.ci_low.resize(k);
  r.ci_high.resize(k);
  r.failures.resize(k);
  r.truths.resize(k);
  out.link_estimates.resize(k);
  out.link_se.resize(k);
  for (std::size_t e = 0; e < k; ++e) {
    const EstimatorId id = options.estimators[e];
    r.truths[e] = estimator_truth(id, trial.potential, measure, options.analysis.boundary_policy);
    try {
      const EstimateResult res = run_estimator(id, trial.observed, measure, options.analysis);
      r.estimates[e] = res.estimate;
      r.ci_low[e] = res.ci_low;
      r.ci_high[e] = res.ci_high;
      out.link_estimates[e] = res.link_scale_estimate;
      out.link_se[e] = res.se_link;
      if (id == EstimatorId::MixedModel && measure == Measure::Difference) {
        const double icc = res.diagnostics.values.at("icc");
        r.implied_lmm_target = precision_weighted_estimand(trial.potential, icc);
      }
    } catch (const Error& err) {
      r.failures[e] = std::string(to_string(err.kind())) + ": " + err.what();
    }
  }
  return out;
}

}  // namespace

StudyReport run_study(const DgpConfig& config, const StudyOptions& options) {
  config.validate();
  if (options.replicates < 1) throw Error(ErrorKind::Validation, "replicates must be at least 1");
  if (options.estimators.empty()) throw Error(ErrorKind::Validation, "no estimators requested");
  if (options.analysis.measure == Measure::OddsRatio && config.outcome == OutcomeKind::Continuous) {
    throw Error(ErrorKind::Validation, "odds ratios need binary outcomes");
  }
  const Measure measure = config.outcome == OutcomeKind::Continuous
                              ? Measure::Difference
                              : options.analysis.measure.value_or(Measure::OddsRatio);

  const std::size_t reps = options.replicates;
  std::vector<Outcome> outcomes(reps);
  unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(reps)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < reps; i = next++) {
      try {
        outcomes[i] = run_replicate(config, options, measure, options.first_replicate + i);
      } catch (...) {
        std::lock_guard lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
        next = reps;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  // Ordered reduction: identical output regardless of thread count.
  StudyReport report;
  report.config = config;
  report.measure = measure;
  report.requested_replicates = reps;
  report.warnings = config.warnings();
  for (std::size_t e = 0; e < options.estimators.size(); ++e) {
    StudyCell cell;
    cell.estimator = options.estimators[e];
    cell.estimand = target_estimand(cell.estimator, measure);
    CompensatedSum truth_sum;
    std::size_t truth_count = 0;
    for (const auto& o : outcomes) {
      if (o.record.truths[e]) {
        truth_sum += *o.record.truths[e];
        ++truth_count;
      }
    }
    cell.mean_truth = truth_count ? truth_sum.value() / truth_count : std::nan("");

    CompensatedSum est, link, se, bias, implied;
    std::size_t bias_count = 0, covered_rep = 0, covered_avg = 0, implied_count = 0;
    std::vector<double> links;
    for (const auto& o : outcomes) {
      const auto& r = o.record;
      if (!r.estimates[e]) {
        ++cell.failures;
        continue;
      }
      ++cell.replicates;
      est += *r.estimates[e];
      link += *o.link_estimates[e];
      links.push_back(*o.link_estimates[e]);
      se += *o.link_se[e];
      if (r.truths[e]) {
        bias += *r.estimates[e] - *r.truths[e];
        ++bias_count;
        if (*r.ci_low[e] <= *r.truths[e] && *r.truths[e] <= *r.ci_high[e]) ++covered_rep;
      }
      if (truth_count && *r.ci_low[e] <= cell.mean_truth && cell.mean_truth <= *r.ci_high[e]) {
        ++covered_avg;
      }
      if (cell.estimator == EstimatorId::MixedModel && r.implied_lmm_target) {
        implied += *r.implied_lmm_target;
        ++implied_count;
      }
    }
    const double n = static_cast<double>(cell.replicates);
    if (cell.replicates > 0) {
      cell.mean_estimate = est.value() / n;
      cell.mean_link_estimate = link.value() / n;
      cell.mean_model_se = se.value() / n;
      CompensatedSum ss;
      for (double v : links) ss += (v - cell.mean_link_estimate) * (v - cell.mean_link_estimate);
      cell.empirical_se = cell.replicates > 1 ? std::sqrt(ss.value() / (n - 1.0)) : 0.0;
      cell.bias_vs_replicate_truth = bias_count ? bias.value() / bias_count : std::nan("");
      cell.bias_vs_average_truth = cell.mean_estimate - cell.mean_truth;
      cell.coverage_replicate_truth =
          bias_count ? static_cast<double>(covered_rep) / bias_count : std::nan("");
      cell.coverage_average_truth = truth_count ? covered_avg / n : std::nan("");
    } else {
      cell.mean_estimate = cell.mean_link_estimate = std::nan("");
      cell.bias_vs_replicate_truth = cell.bias_vs_average_truth = std::nan("");
      cell.coverage_replicate_truth = cell.coverage_average_truth = std::nan("");
    }
    if (implied_count) cell.mean_implied_target = implied.value() / implied_count;
    report.cells.push_back(cell);
  }
  if (options.keep_records) {
    for (auto& o : outcomes) report.records.push_back(std::move(o.record));
  }
  return report;
}

}  // namespace crt
