#include <doctest.h>

#include <cmath>
#include <random>

#include "crt/cluster_summary.hpp"
#include "crt/oracle.hpp"
#include "oracles.hpp"

using namespace crt;

namespace {

constexpr Weighting kWeightings[] = {Weighting::ParticipantAverage, Weighting::ClusterAverage};

// Closed-form delta-method HC0 for a two-group weighted comparison:
// each arm contributes sum w^2 (r - a)^2 / (W g)^2, with g the link slope.
double two_group_hc0(const std::vector<double>& response, const std::vector<int>& z,
                     const std::vector<double>& w, bool logit_scale) {
  double total = 0.0;
  for (int arm : {0, 1}) {
    long double sw = 0, swr = 0;
    for (std::size_t j = 0; j < response.size(); ++j) {
      if (z[j] != arm) continue;
      sw += w[j];
      swr += w[j] * response[j];
    }
    const double a = static_cast<double>(swr / sw);
    long double meat = 0;
    for (std::size_t j = 0; j < response.size(); ++j) {
      if (z[j] != arm) continue;
      meat += w[j] * w[j] * (response[j] - a) * (response[j] - a);
    }
    const double g = logit_scale ? a * (1.0 - a) : 1.0;
    total += static_cast<double>(meat / (sw * sw)) / (g * g);
  }
  return total;
}

struct ClusterArrays {
  std::vector<double> mean, log_odds, n;
  std::vector<int> z;
};

ClusterArrays arrays(const ObservedDataset& d) {
  ClusterArrays a;
  for (const auto& c : d.clusters()) {
    double s = 0;
    for (double y : c.outcomes) s += y;
    const double m = s / c.outcomes.size();
    a.mean.push_back(m);
    a.log_odds.push_back(std::log(m / (1 - m)));
    a.n.push_back(static_cast<double>(c.outcomes.size()));
    a.z.push_back(c.treatment);
  }
  return a;
}

std::vector<double> weights_for(const ClusterArrays& a, Weighting w) {
  return w == Weighting::ParticipantAverage ? a.n : std::vector<double>(a.n.size(), 1.0);
}

ObservedDataset replicate_clusters(const ObservedDataset& d, int k) {
  std::vector<ClusterRecord> out;
  for (int r = 0; r < k; ++r) {
    for (auto c : d.clusters()) {
      c.id += "_" + std::to_string(r);
      out.push_back(c);
    }
  }
  return ObservedDataset(out);
}

bool all_interior(const PotentialOutcomeDataset& po) {
  for (const auto& k : cluster_contrasts(po)) {
    if (!k.odds_ratio) return false;
  }
  return true;
}

// Each potential-outcome cluster observed once under each arm.
ObservedDataset both_arms(const PotentialOutcomeDataset& po) {
  std::vector<ClusterRecord> out;
  for (const auto& c : po.clusters()) {
    out.push_back({c.id + "_t", 1, c.y1});
    out.push_back({c.id + "_c", 0, c.y0});
  }
  return ObservedDataset(out);
}

}  // namespace

TEST_CASE("four-cluster fixture point estimates") {
  const auto d = oracle::ex1();
  CHECK(marginal_summary_estimate(d, Weighting::ParticipantAverage, Measure::OddsRatio).estimate ==
        doctest::Approx(4.0).epsilon(1e-12));
  CHECK(marginal_summary_estimate(d, Weighting::ClusterAverage, Measure::OddsRatio).estimate ==
        doctest::Approx(25.0 / 9.0).epsilon(1e-12));
  CHECK(cluster_specific_summary_estimate(d, Weighting::ParticipantAverage, Measure::OddsRatio).estimate ==
        doctest::Approx(std::pow(9.0, 2.0 / 3.0)).epsilon(1e-12));
  CHECK(cluster_specific_summary_estimate(d, Weighting::ClusterAverage, Measure::OddsRatio).estimate ==
        doctest::Approx(3.0).epsilon(1e-12));
  CHECK(marginal_summary_estimate(d, Weighting::ParticipantAverage, Measure::Difference).estimate ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(marginal_summary_estimate(d, Weighting::ClusterAverage, Measure::Difference).estimate ==
        doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("four-cluster fixture HC0 variance of the cluster-specific cluster-average estimator") {
  const auto fit = fit_cluster_specific_summary(oracle::ex1(), Weighting::ClusterAverage, Measure::OddsRatio);
  const double expected = std::pow(std::log(3.0) / 2.0, 2);
  CHECK(huber_white_vcov(fit) == doctest::Approx(expected).epsilon(1e-12));
  const auto r = cluster_specific_summary_estimate(oracle::ex1(), Weighting::ClusterAverage, Measure::OddsRatio);
  CHECK(r.se_link == doctest::Approx(std::log(3.0) / 2.0).epsilon(1e-12));
  REQUIRE(r.df);
  CHECK(*r.df == 2.0);
  CHECK(r.variance_method.kind == VarianceMethod::Kind::HC0);
}

TEST_CASE("HC0 matches the closed-form two-group sandwich on random data") {
  std::mt19937_64 rng(101);
  for (int rep = 0; rep < 300; ++rep) {
    const auto d = oracle::random_binary_observed(rng, 4, 40, 80);
    const auto a = arrays(d);
    for (Weighting w : kWeightings) {
      const auto wt = weights_for(a, w);
      const auto mg = fit_marginal_summary(d, w, Measure::OddsRatio);
      CHECK(huber_white_vcov(mg) ==
            doctest::Approx(two_group_hc0(a.mean, a.z, wt, true)).epsilon(1e-9));
      const auto md = fit_marginal_summary(d, w, Measure::Difference);
      CHECK(huber_white_vcov(md) ==
            doctest::Approx(two_group_hc0(a.mean, a.z, wt, false)).epsilon(1e-9));

      bool interior = true;
      for (double m : a.mean) interior = interior && m > 0.0 && m < 1.0;
      if (!interior) continue;
      const auto cs = fit_cluster_specific_summary(d, w, Measure::OddsRatio);
      CHECK(huber_white_vcov(cs) ==
            doctest::Approx(two_group_hc0(a.log_odds, a.z, wt, false)).epsilon(1e-9));
    }
  }
}

TEST_CASE("point estimates do not depend on the working variance function") {
  std::mt19937_64 rng(202);
  const auto gaussian = [](double) { return 1.0; };
  const auto binomial = [](double mu) { return mu * (1.0 - mu); };
  for (int rep = 0; rep < 200; ++rep) {
    const auto d = oracle::random_binary_observed(rng, 4, 30, 60);
    const auto a = arrays(d);
    for (Weighting w : kWeightings) {
      const auto wt = weights_for(a, w);
      const double beta = fit_marginal_summary(d, w, Measure::OddsRatio).beta_hat;
      CHECK(oracle::cluster_glm(a.mean, a.z, wt, true, gaussian)(1) == doctest::Approx(beta).epsilon(1e-10));
      CHECK(oracle::cluster_glm(a.mean, a.z, wt, true, binomial)(1) == doctest::Approx(beta).epsilon(1e-10));
      const double diff = fit_marginal_summary(d, w, Measure::Difference).beta_hat;
      CHECK(oracle::cluster_glm(a.mean, a.z, wt, false, gaussian)(1) == doctest::Approx(diff).epsilon(1e-10));
    }
  }
}

TEST_CASE("weighted residuals solve the normal equations in each arm") {
  std::mt19937_64 rng(303);
  for (int rep = 0; rep < 100; ++rep) {
    const auto d = oracle::random_binary_observed(rng, 4, 30, 60);
    for (Weighting w : kWeightings) {
      const auto fit = fit_marginal_summary(d, w, Measure::OddsRatio);
      double s[2] = {0, 0}, scale[2] = {0, 0};
      for (std::size_t j = 0; j < fit.residuals.size(); ++j) {
        s[fit.treatment[j]] += fit.weights[j] * fit.residuals[j];
        scale[fit.treatment[j]] += fit.weights[j];
      }
      CHECK(std::abs(s[0]) <= 1e-12 * scale[0]);
      CHECK(std::abs(s[1]) <= 1e-12 * scale[1]);
    }
  }
}

TEST_CASE("zero residuals give zero variance") {
  const ObservedDataset d({{"a", 1, {1, 0}}, {"b", 1, {1, 1, 0, 0}},
                           {"c", 0, {1, 0, 0, 0}}, {"d", 0, {1, 1, 0, 0, 0, 0, 0, 0}}});
  for (Weighting w : kWeightings) {
    CHECK(huber_white_vcov(fit_marginal_summary(d, w, Measure::OddsRatio)) == doctest::Approx(0.0));
    CHECK(huber_white_vcov(fit_cluster_specific_summary(d, w, Measure::OddsRatio)) == doctest::Approx(0.0));
  }
}

TEST_CASE("replicating every cluster k times divides the HC0 variance by k") {
  std::mt19937_64 rng(404);
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = oracle::random_binary_observed(rng, 4, 20, 40);
    for (int k : {2, 3, 5}) {
      const auto dk = replicate_clusters(d, k);
      for (Weighting w : kWeightings) {
        const auto f1 = fit_marginal_summary(d, w, Measure::OddsRatio);
        const auto fk = fit_marginal_summary(dk, w, Measure::OddsRatio);
        CHECK(fk.beta_hat == doctest::Approx(f1.beta_hat).epsilon(1e-12));
        CHECK(huber_white_vcov(fk) == doctest::Approx(huber_white_vcov(f1) / k).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("difference measure: cluster-specific equals marginal") {
  std::mt19937_64 rng(505);
  for (int rep = 0; rep < 100; ++rep) {
    const auto d = oracle::random_binary_observed(rng, 4, 30, 60);
    for (Weighting w : kWeightings) {
      const auto m = marginal_summary_estimate(d, w, Measure::Difference);
      const auto c = cluster_specific_summary_estimate(d, w, Measure::Difference);
      CHECK(m.estimate == c.estimate);
      CHECK(m.se_link == c.se_link);
    }
  }
}

TEST_CASE("equal cluster sizes make participant- and cluster-average weighting coincide") {
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> size(2, 30);
  std::bernoulli_distribution coin(0.4);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = size(rng);
    std::vector<ClusterRecord> cs;
    for (int j = 0; j < 8; ++j) {
      std::vector<double> y(n);
      for (auto& v : y) v = coin(rng);
      y[0] = 1;
      y[1] = 0;
      cs.push_back({"k" + std::to_string(j), j % 2, y});
    }
    const ObservedDataset d(cs);
    for (Measure m : {Measure::Difference, Measure::OddsRatio}) {
      const auto pa = marginal_summary_estimate(d, Weighting::ParticipantAverage, m);
      const auto ca = marginal_summary_estimate(d, Weighting::ClusterAverage, m);
      CHECK(pa.estimate == doctest::Approx(ca.estimate).epsilon(1e-12));
      CHECK(pa.se_link == doctest::Approx(ca.se_link).epsilon(1e-10));
    }
  }
}

TEST_CASE("a design observing every cluster under both arms recovers the estimands exactly") {
  std::mt19937_64 rng(707);
  int checked = 0;
  while (checked < 200) {
    const auto po = oracle::random_potential(rng, true, 2, 20, 40);
    if (!all_interior(po)) continue;
    ++checked;
    const auto d = both_arms(po);
    const auto t = oracle::odds_ratio_truths(po);
    const auto pa = Weighting::ParticipantAverage;
    const auto ca = Weighting::ClusterAverage;
    CHECK(marginal_summary_estimate(d, pa, Measure::OddsRatio).estimate == doctest::Approx(t.mg_pa).epsilon(1e-10));
    CHECK(marginal_summary_estimate(d, ca, Measure::OddsRatio).estimate == doctest::Approx(t.mg_ca).epsilon(1e-10));
    CHECK(fit_cluster_specific_summary(d, pa, Measure::OddsRatio).beta_hat ==
          doctest::Approx(std::log(t.cs_pa)).epsilon(1e-10));
    CHECK(fit_cluster_specific_summary(d, ca, Measure::OddsRatio).beta_hat ==
          doctest::Approx(std::log(t.cs_ca)).epsilon(1e-10));
    const auto td = oracle::difference_truths(po);
    CHECK(marginal_summary_estimate(d, pa, Measure::Difference).estimate == doctest::Approx(td.mg_pa).epsilon(1e-10));
    CHECK(marginal_summary_estimate(d, ca, Measure::Difference).estimate == doctest::Approx(td.mg_ca).epsilon(1e-10));
  }
  SUBCASE("the two-cluster table gives the fixture") {
    const auto d = both_arms(oracle::po1());
    CHECK(marginal_summary_estimate(d, Weighting::ParticipantAverage, Measure::OddsRatio).estimate ==
          doctest::Approx(4.0));
    CHECK(cluster_specific_summary_estimate(d, Weighting::ClusterAverage, Measure::OddsRatio).estimate ==
          doctest::Approx(3.0));
  }
}

TEST_CASE("boundary clusters") {
  const ObservedDataset d({{"A", 1, {1, 0}}, {"B", 1, {1, 1, 1}},
                           {"C", 0, {1, 0}}, {"D", 0, {0, 0, 0, 0}}});
  SUBCASE("error policy names the clusters") {
    try {
      cluster_specific_summary_estimate(d, Weighting::ClusterAverage, Measure::OddsRatio);
      FAIL("expected a boundedness error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::BoundednessViolation);
      CHECK(e.clusters() == std::vector<std::string>{"B", "D"});
    }
  }
  SUBCASE("continuity correction is applied and flagged") {
    const auto r = cluster_specific_summary_estimate(d, Weighting::ClusterAverage, Measure::OddsRatio,
                                                     BoundaryPolicy::ContinuityCorrection);
    CHECK(r.diagnostics.has_flag("continuity_correction"));
    CHECK(r.diagnostics.values.at("corrected_clusters") == 2.0);
    const double lb = std::log(3.5 / 0.5);
    const double ld = std::log(0.5 / 4.5);
    CHECK(r.link_scale_estimate == doctest::Approx((lb / 2.0) - (ld / 2.0)).epsilon(1e-12));
  }
  SUBCASE("marginal estimators are unaffected") {
    const auto r = marginal_summary_estimate(d, Weighting::ParticipantAverage, Measure::OddsRatio);
    CHECK(std::isfinite(r.estimate));
    CHECK(r.diagnostics.flags.empty());
  }
}

TEST_CASE("degenerate arms and too few clusters") {
  SUBCASE("an arm with no events") {
    const ObservedDataset d({{"A", 1, {1, 0}}, {"B", 1, {1, 0}}, {"C", 0, {0, 0}}, {"D", 0, {0}}});
    try {
      marginal_summary_estimate(d, Weighting::ParticipantAverage, Measure::OddsRatio);
      FAIL("expected a degenerate-arm error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateArm);
    }
    CHECK_NOTHROW(marginal_summary_estimate(d, Weighting::ParticipantAverage, Measure::Difference));
  }
  SUBCASE("one cluster in an arm") {
    const ObservedDataset d({{"A", 1, {1, 0}}, {"C", 0, {1, 0, 0}}, {"D", 0, {1, 0}}});
    try {
      marginal_summary_estimate(d, Weighting::ClusterAverage, Measure::Difference);
      FAIL("expected an inestimable-variance error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InestimableVariance);
    }
  }
  SUBCASE("odds ratio on continuous data") {
    const ObservedDataset d({{"A", 1, {0.5}}, {"B", 1, {1.5}}, {"C", 0, {0.2}}, {"D", 0, {0.1}}});
    CHECK_THROWS_AS(marginal_summary_estimate(d, Weighting::ClusterAverage, Measure::OddsRatio), Error);
    CHECK_NOTHROW(marginal_summary_estimate(d, Weighting::ClusterAverage, Measure::Difference));
  }
}

TEST_CASE("estimates are invariant to cluster order") {
  std::mt19937_64 rng(808);
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = oracle::random_binary_observed(rng, 4, 30, 40);
    auto shuffled = d.clusters();
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const ObservedDataset s(shuffled);
    for (Weighting w : kWeightings) {
      const auto a = marginal_summary_estimate(d, w, Measure::OddsRatio);
      const auto b = marginal_summary_estimate(s, w, Measure::OddsRatio);
      CHECK(a.estimate == doctest::Approx(b.estimate).epsilon(1e-13));
      CHECK(a.se_link == doctest::Approx(b.se_link).epsilon(1e-11));
    }
  }
}
