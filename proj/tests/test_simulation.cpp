#include <doctest.h>

#include <cmath>

#include "crt/oracle.hpp"
#include "crt/simulation.hpp"
#include "oracles.hpp"

using namespace crt;

namespace {

DgpConfig informative_config(std::size_t m) {
  DgpConfig c;
  c.n_clusters = m;
  c.strata = {{20, 0.7, std::log(1.2), {}}, {200, 0.3, std::log(2.5), {}}};
  c.control_base = -2.5;
  c.random_intercept_sd = 0.3;
  c.seed = 2024;
  return c;
}

DgpConfig null_config(std::size_t m, OutcomeKind kind) {
  DgpConfig c;
  c.n_clusters = m;
  c.outcome = kind;
  c.strata = {{5, 0.5, 0.0, {}}, {40, 0.5, 0.0, {}}};
  c.control_base = kind == OutcomeKind::Binary ? -0.5 : 1.0;
  c.random_intercept_sd = 0.4;
  c.informative = false;
  c.seed = 99;
  return c;
}

}  // namespace

TEST_CASE("replicates are reproducible and distinct") {
  const auto cfg = informative_config(40);
  const auto a = generate(cfg, 3);
  const auto b = generate(cfg, 3);
  const auto c = generate(cfg, 4);
  REQUIRE(a.potential.cluster_count() == 40);
  for (std::size_t j = 0; j < 40; ++j) {
    CHECK(a.potential.clusters()[j].y1 == b.potential.clusters()[j].y1);
    CHECK(a.potential.clusters()[j].y0 == b.potential.clusters()[j].y0);
  }
  CHECK(a.treatment == b.treatment);
  bool differs = a.treatment != c.treatment;
  for (std::size_t j = 0; j < 40 && !differs; ++j) {
    differs = a.potential.clusters()[j].y1 != c.potential.clusters()[j].y1;
  }
  CHECK(differs);
  CHECK(replicate_seed(1, 0) != replicate_seed(1, 1));
  CHECK(replicate_seed(1, 0) != replicate_seed(2, 0));
}

TEST_CASE("observed data is a row selection of the potential table") {
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    for (auto kind : {OutcomeKind::Binary, OutcomeKind::Continuous}) {
      const auto t = generate(null_config(30, kind), rep);
      REQUIRE(t.observed.cluster_count() == t.potential.cluster_count());
      for (std::size_t j = 0; j < t.potential.cluster_count(); ++j) {
        const auto& pc = t.potential.clusters()[j];
        const auto& oc = t.observed.clusters()[j];
        CHECK(oc.id == pc.id);
        CHECK(oc.treatment == t.treatment[j]);
        CHECK(oc.outcomes == (t.treatment[j] == 1 ? pc.y1 : pc.y0));
      }
      CHECK(t.observed.outcome_kind() == kind);
    }
  }
}

TEST_CASE("one-to-one allocation and balance over replicates") {
  const auto cfg = informative_config(21);
  std::vector<int> treated(21, 0);
  const int reps = 4000;
  for (int r = 0; r < reps; ++r) {
    const auto t = generate(cfg, r);
    int arm1 = 0;
    for (int z : t.treatment) arm1 += z;
    CHECK((arm1 == 10 || arm1 == 11));
    for (std::size_t j = 0; j < 21; ++j) treated[j] += t.treatment[j];
  }
  // Binomial sd of the frequency is 0.5 / sqrt(reps); allow 4.5 sd.
  const double tol = 4.5 * 0.5 / std::sqrt(static_cast<double>(reps));
  for (int c : treated) CHECK(std::abs(static_cast<double>(c) / reps - 0.5) < tol);
}

TEST_CASE("null effects give zero difference estimands on every generated table") {
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    for (auto kind : {OutcomeKind::Binary, OutcomeKind::Continuous}) {
      const auto t = generate(null_config(25, kind), rep);
      const auto d = oracle::difference_truths(t.potential);
      if (kind == OutcomeKind::Binary) {
        // A common uniform drives both potential outcomes, so they coincide.
        CHECK(d.mg_pa == 0.0);
        CHECK(d.mg_ca == 0.0);
        CHECK(d.cs_pa == 0.0);
        CHECK(d.cs_ca == 0.0);
      } else {
        CHECK(std::abs(d.mg_pa) < 1e-12);
        CHECK(std::abs(d.cs_ca) < 1e-12);
      }
    }
  }
}

TEST_CASE("homogeneous clusters make participant and cluster averages agree in the limit") {
  DgpConfig c;
  c.n_clusters = 400;
  c.strata = {{20, 0.5, 0.5, {}}, {200, 0.5, 0.5, {}}};
  c.control_base = -1.0;
  c.random_intercept_sd = 0.0;
  c.informative = false;
  const auto t = generate(c, 0);
  const double pa = marginal_estimand(t.potential, Weighting::ParticipantAverage, Measure::OddsRatio);
  const double ca = marginal_estimand(t.potential, Weighting::ClusterAverage, Measure::OddsRatio);
  CHECK(std::abs(std::log(pa) - std::log(ca)) < 0.05);
}

TEST_CASE("informative configuration separates the participant- and cluster-average targets") {
  const auto t = generate(informative_config(2000), 0);
  const double pa = marginal_estimand(t.potential, Weighting::ParticipantAverage, Measure::OddsRatio);
  const double ca = marginal_estimand(t.potential, Weighting::ClusterAverage, Measure::OddsRatio);
  CHECK(pa / ca - 1.0 > 0.1);
}

TEST_CASE("configuration validation and warnings") {
  auto c = informative_config(10);
  CHECK_NOTHROW(c.validate());
  CHECK(c.warnings().empty());

  auto bad = c;
  bad.n_clusters = 3;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.strata[0].probability = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.strata[0].size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.random_intercept_sd = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.strata.clear();
  CHECK_THROWS_AS(bad.validate(), Error);

  auto degenerate = c;
  degenerate.strata = {{50, 1.0, 0.3, {}}};
  CHECK_FALSE(degenerate.warnings().empty());
  CHECK_FALSE(generate(degenerate, 0).warnings.empty());
  degenerate.informative = false;
  CHECK(degenerate.warnings().empty());
}

TEST_CASE("study results do not depend on the thread count") {
  auto cfg = informative_config(16);
  StudyOptions o;
  o.replicates = 12;
  o.analysis.boundary_policy = BoundaryPolicy::ContinuityCorrection;
  o.threads = 1;
  const auto one = run_study(cfg, o);
  o.threads = 4;
  const auto four = run_study(cfg, o);
  REQUIRE(one.cells.size() == four.cells.size());
  for (std::size_t k = 0; k < one.cells.size(); ++k) {
    CHECK(one.cells[k].mean_estimate == four.cells[k].mean_estimate);
    CHECK(one.cells[k].empirical_se == four.cells[k].empirical_se);
    CHECK(one.cells[k].coverage_replicate_truth == four.cells[k].coverage_replicate_truth);
    CHECK(one.cells[k].replicates + one.cells[k].failures == 12);
  }
  for (const auto& cell : one.cells) {
    CHECK(cell.coverage_replicate_truth >= 0.0);
    CHECK(cell.coverage_replicate_truth <= 1.0);
  }
}

TEST_CASE("null study centres every estimator on no effect") {
  auto cfg = null_config(60, OutcomeKind::Continuous);
  StudyOptions o;
  o.replicates = 60;
  const auto r = run_study(cfg, o);
  CHECK(r.measure == Measure::Difference);
  for (const auto& cell : r.cells) {
    REQUIRE(cell.replicates > 0);
    const double se_mean = cell.empirical_se / std::sqrt(static_cast<double>(cell.replicates));
    CHECK(std::abs(cell.mean_estimate) < 4.0 * se_mean + 1e-12);
    CHECK(cell.mean_truth == doctest::Approx(0.0).scale(1.0));
  }
  REQUIRE(r.cell(EstimatorId::MixedModel).mean_implied_target.has_value());
}

TEST_CASE("study bookkeeping") {
  auto cfg = informative_config(12);
  StudyOptions o;
  o.replicates = 5;
  o.first_replicate = 7;
  o.estimators = {EstimatorId::IeeUnweighted, EstimatorId::SummaryClusterSpecificUnweighted};
  const auto r = run_study(cfg, o);
  REQUIRE(r.cells.size() == 2);
  REQUIRE(r.records.size() == 5);
  CHECK(r.records.front().replicate == 7);
  for (const auto& cell : r.cells) CHECK(cell.replicates + cell.failures == 5);
  // Boundary clusters are common at this size, so the error policy records failures.
  const auto& rec = r.records.front();
  CHECK(rec.estimates.size() == 2);
  CHECK(rec.failures.size() == 2);

  o.replicates = 0;
  CHECK_THROWS_AS(run_study(cfg, o), Error);
}

TEST_CASE("trial-scale configuration") {
  DgpConfig c;
  c.n_clusters = 31;
  c.strata = {{12, 0.25, std::log(1.65), {}}, {60, 0.25, std::log(1.65), {}},
              {150, 0.25, std::log(1.65), {}}, {272, 0.25, std::log(1.65), {}}};
  c.control_base = std::log(0.045 / 0.955);
  c.random_intercept_sd = 0.319;
  c.informative = false;
  const auto t = generate(c, 0);
  CHECK(t.observed.cluster_count() == 31);
  CHECK(t.observed.max_cluster_size() <= 272);
  std::size_t min_size = 1000;
  for (const auto& cl : t.observed.clusters()) min_size = std::min(min_size, cl.outcomes.size());
  CHECK(min_size >= 12);
  // Latent-scale ICC of sd 0.319 is 0.319^2 / (0.319^2 + pi^2 / 3), about 0.03.
  CHECK(0.319 * 0.319 / (0.319 * 0.319 + M_PI * M_PI / 3.0) == doctest::Approx(0.03).epsilon(0.02));
}
