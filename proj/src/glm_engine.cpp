#include "crt/glm_engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crt {

Link link_for(Measure measure) {
  return measure == Measure::OddsRatio ? Link::Logit : Link::Identity;
}

VarianceMethod SandwichSpec::method() const {
  if (correction == Correction::FayGraubard) return {VarianceMethod::Kind::FayGraubard, bound};
  return {VarianceMethod::Kind::HC0, bound};
}

std::vector<double> unit_weights(const ObservedDataset& data) {
  return std::vector<double>(data.participant_count(), 1.0);
}

std::vector<double> inverse_size_weights(const ObservedDataset& data) {
  std::vector<double> w;
  w.reserve(data.participant_count());
  for (const auto& c : data.clusters()) {
    const double inv = 1.0 / static_cast<double>(c.outcomes.size());
    w.insert(w.end(), c.outcomes.size(), inv);
  }
  return w;
}

namespace {

// Sufficient statistics of one cluster under cluster-constant covariates.
struct ClusterTotals {
  int treatment = 0;
  double weight = 0.0;           // sum_i w_ij
  double weighted_outcome = 0.0; // sum_i w_ij y_ij
};

std::vector<ClusterTotals> cluster_totals(const ObservedDataset& data,
                                          std::span<const double> w) {
  if (w.size() != data.participant_count()) {
    throw Error(ErrorKind::Validation, "observation weights do not match participant count");
  }
  std::vector<ClusterTotals> totals;
  totals.reserve(data.cluster_count());
  std::size_t k = 0;
  for (const auto& c : data.clusters()) {
    ClusterTotals t;
    t.treatment = c.treatment;
    CompensatedSum sw, swy;
    for (double y : c.outcomes) {
      const double wi = w[k++];
      if (!(wi > 0.0) || !std::isfinite(wi)) {
        throw Error(ErrorKind::Validation, "observation weights must be positive and finite");
      }
      sw += wi;
      swy += wi * y;
    }
    t.weight = sw.value();
    t.weighted_outcome = swy.value();
    totals.push_back(t);
  }
  return totals;
}

Eigen::Vector2d design_row(int z) { return {1.0, static_cast<double>(z)}; }

Eigen::Vector2d solve_2x2(const Eigen::Matrix2d& a, const Eigen::Vector2d& b) {
  const double det = a.determinant();
  if (!(std::abs(det) > 1e-300) || !std::isfinite(det)) {
    throw Error(ErrorKind::RankDeficiency, "singular information matrix");
  }
  return a.inverse() * b;
}

}  // namespace

GlmFit fit_working_glm(const ObservedDataset& data, Link link,
                       std::span<const double> obs_weights) {
  data.require_both_arms();
  if (link == Link::Logit && data.outcome_kind() != OutcomeKind::Binary) {
    throw Error(ErrorKind::Validation, "logit link needs binary outcomes");
  }
  const auto totals = cluster_totals(data, obs_weights);

  GlmFit fit;
  fit.link = link;
  fit.weights.assign(obs_weights.begin(), obs_weights.end());

  if (link == Link::Logit) {
    for (int z = 0; z <= 1; ++z) {
      CompensatedSum sw, swy;
      for (const auto& t : totals) {
        if (t.treatment != z) continue;
        sw += t.weight;
        swy += t.weighted_outcome;
      }
      const double p = swy.value() / sw.value();
      if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorKind::Separation,
                    "weighted mean outcome in arm " + std::to_string(z) + " equals 0 or 1");
      }
    }
  }

  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  if (link == Link::Identity) {
    Eigen::Matrix2d xtwx = Eigen::Matrix2d::Zero();
    Eigen::Vector2d xtwy = Eigen::Vector2d::Zero();
    for (const auto& t : totals) {
      const Eigen::Vector2d x = design_row(t.treatment);
      xtwx += t.weight * x * x.transpose();
      xtwy += t.weighted_outcome * x;
    }
    beta = solve_2x2(xtwx, xtwy);
    fit.converged = true;
    fit.iterations = 1;
  } else {
    std::ostringstream trace;
    constexpr int kMaxIterations = 100;
    constexpr double kTolerance = 1e-10;
    for (int iter = 1; iter <= kMaxIterations; ++iter) {
      Eigen::Matrix2d xtwx = Eigen::Matrix2d::Zero();
      Eigen::Vector2d xtwz = Eigen::Vector2d::Zero();
      for (const auto& t : totals) {
        const Eigen::Vector2d x = design_row(t.treatment);
        const double eta = x.dot(beta);
        const double mu = expit(eta);
        const double v = mu * (1.0 - mu);
        // sum_i w_i v (eta + (y_i - mu)/v) = v*eta*sum w + (sum w y - mu sum w)
        const double working = v * eta * t.weight + (t.weighted_outcome - mu * t.weight);
        xtwx += v * t.weight * x * x.transpose();
        xtwz += working * x;
      }
      const Eigen::Vector2d next = solve_2x2(xtwx, xtwz);
      const double change = (next - beta).cwiseAbs().maxCoeff();
      const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
      trace << "iter " << iter << ": alpha=" << next(0) << " beta=" << next(1) << "\n";
      beta = next;
      fit.iterations = iter;
      if (change <= kTolerance * scale) {
        fit.converged = true;
        break;
      }
    }
    if (!fit.converged) {
      throw Error(ErrorKind::NonConvergence, "IRLS did not converge:\n" + trace.str());
    }
  }
  fit.coefficients = beta;

  auto& dec = fit.decomposition;
  for (const auto& t : totals) {
    const Eigen::Vector2d x = design_row(t.treatment);
    const double eta = x.dot(beta);
    const double mu = link == Link::Logit ? expit(eta) : eta;
    // Canonical links: D_j' V_j^-1 = x' (the Gaussian scale cancels in the sandwich).
    const double curvature = link == Link::Logit ? mu * (1.0 - mu) : 1.0;
    fit.fitted_values.push_back(mu);
    dec.scores.push_back(x * (t.weighted_outcome - mu * t.weight));
    dec.information.push_back(curvature * t.weight * x * x.transpose());
    dec.treatment.push_back(t.treatment);
    dec.bread += dec.information.back();
  }
  return fit;
}

Eigen::Matrix2d cluster_robust_covariance(const ScoreDecomposition& fit,
                                          const SandwichSpec& spec) {
  if (fit.scores.size() < 3) {
    throw Error(ErrorKind::InestimableVariance, "sandwich variance needs at least 3 clusters");
  }
  if (spec.correction == SandwichSpec::Correction::FayGraubard &&
      !(spec.bound > 0.0 && spec.bound < 1.0)) {
    throw Error(ErrorKind::Domain, "Fay-Graubard bound must lie in (0, 1)");
  }
  Eigen::FullPivLU<Eigen::Matrix2d> lu(fit.bread);
  if (lu.rank() < 2) {
    throw Error(ErrorKind::RankDeficiency, "sandwich bread matrix is singular");
  }
  const Eigen::Matrix2d bread_inv = lu.inverse();
  Eigen::Matrix2d meat = Eigen::Matrix2d::Zero();
  for (std::size_t j = 0; j < fit.scores.size(); ++j) {
    Eigen::Vector2d u = fit.scores[j];
    if (spec.correction == SandwichSpec::Correction::FayGraubard) {
      const Eigen::Matrix2d q = fit.information[j] * bread_inv;
      for (int k = 0; k < 2; ++k) {
        u(k) /= std::sqrt(1.0 - std::min(spec.bound, q(k, k)));
      }
    }
    meat += u * u.transpose();
  }
  return bread_inv * meat * bread_inv;
}

double cluster_robust_vcov(const ScoreDecomposition& fit, const SandwichSpec& spec) {
  return cluster_robust_covariance(fit, spec)(1, 1);
}

double cluster_robust_vcov(const GlmFit& fit, const SandwichSpec& spec) {
  if (!fit.converged) {
    throw Error(ErrorKind::NonConvergence, "sandwich requested for an unconverged fit");
  }
  return cluster_robust_vcov(fit.decomposition, spec);
}

}  // namespace crt
