#include "crt/gee.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "crt/inference.hpp"

namespace crt {

namespace {

// Covariates are cluster-level, so a cluster enters only through
// (n, sum y, sum y^2) and its treatment.
struct ClusterStats {
  int treatment = 0;
  double n = 0.0;
  double sum_y = 0.0;
  double sum_y2 = 0.0;
};

std::vector<ClusterStats> collect(const ObservedDataset& data) {
  std::vector<ClusterStats> out;
  out.reserve(data.cluster_count());
  for (const auto& c : data.clusters()) {
    ClusterStats s;
    s.treatment = c.treatment;
    s.n = static_cast<double>(c.outcomes.size());
    CompensatedSum sy, syy;
    for (double y : c.outcomes) {
      sy += y;
      syy += y * y;
    }
    s.sum_y = sy.value();
    s.sum_y2 = syy.value();
    out.push_back(s);
  }
  return out;
}

struct MeanModel {
  double mu;
  double variance;    // v(mu)
  double derivative;  // d mu / d eta
};

MeanModel evaluate(Link link, const Eigen::Vector2d& beta, int z) {
  const double eta = beta(0) + beta(1) * z;
  if (link == Link::Identity) return {eta, 1.0, 1.0};
  const double mu = expit(eta);
  const double v = mu * (1.0 - mu);
  return {mu, v, v};
}

}  // namespace

std::pair<double, double> exchangeable_rho_range(const ObservedDataset& data) {
  const double nmax = static_cast<double>(data.max_cluster_size());
  const double lower = nmax > 1.0 ? -1.0 / (nmax - 1.0) : -1.0;
  return {lower, 1.0};
}

GeeFit fit_gee_model(const ObservedDataset& data, Link link, const GeeOptions& options) {
  data.require_both_arms();
  if (link == Link::Logit && data.outcome_kind() != OutcomeKind::Binary) {
    throw Error(ErrorKind::Validation, "logit link needs binary outcomes");
  }
  const auto stats = collect(data);
  const auto [rho_lo, rho_hi] = exchangeable_rho_range(data);
  if (options.fixed_rho && !(*options.fixed_rho > rho_lo && *options.fixed_rho < rho_hi)) {
    throw Error(ErrorKind::Domain, "fixed rho lies outside the exchangeable range");
  }
  if (link == Link::Logit) {
    for (int z = 0; z <= 1; ++z) {
      double events = 0.0, size = 0.0;
      for (const auto& s : stats) {
        if (s.treatment != z) continue;
        events += s.sum_y;
        size += s.n;
      }
      if (events <= 0.0 || events >= size) {
        throw Error(ErrorKind::Separation, "arm " + std::to_string(z) + " has no outcome variation");
      }
    }
  }

  const double p = 2.0;
  double total_n = 0.0, total_pairs = 0.0;
  for (const auto& s : stats) {
    total_n += s.n;
    total_pairs += s.n * (s.n - 1.0) / 2.0;
  }

  GeeFit fit;
  fit.link = link;
  fit.rho_hat = options.fixed_rho.value_or(0.0);
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  std::ostringstream trace;

  auto moment_update = [&](const Eigen::Vector2d& b) {
    CompensatedSum sum_e2, sum_pairs;
    for (const auto& s : stats) {
      const MeanModel m = evaluate(link, b, s.treatment);
      const double sum_r = s.sum_y - s.n * m.mu;
      const double sum_r2 = s.sum_y2 - 2.0 * m.mu * s.sum_y + s.n * m.mu * m.mu;
      sum_e2 += sum_r2 / m.variance;
      sum_pairs += (sum_r * sum_r - sum_r2) / (2.0 * m.variance);
    }
    fit.phi_hat = sum_e2.value() / (total_n - p);
    if (options.fixed_rho) return;
    const double denominator = fit.phi_hat * (total_pairs - p);
    if (!(denominator > 0.0)) {
      fit.rho_hat = 0.0;
      fit.rho_clamped = true;
      return;
    }
    double rho = sum_pairs.value() / denominator;
    const double lo = rho_lo + 1e-6;
    const double hi = rho_hi - 1e-6;
    fit.rho_clamped = rho < lo || rho > hi;
    fit.rho_hat = std::clamp(rho, lo, hi);
  };

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    moment_update(beta);
    const double rho = fit.rho_hat;

    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    Eigen::Vector2d score = Eigen::Vector2d::Zero();
    for (const auto& s : stats) {
      const MeanModel m = evaluate(link, beta, s.treatment);
      const Eigen::Vector2d x(1.0, s.treatment);
      const double design_effect = 1.0 + (s.n - 1.0) * rho;
      // 1' R^-1 1 = n / (1 + (n-1) rho);  1' R^-1 r = sum r / (1 + (n-1) rho)
      info += (m.derivative * m.derivative / m.variance) * (s.n / design_effect) * x * x.transpose();
      score += (m.derivative / m.variance) * ((s.sum_y - s.n * m.mu) / design_effect) * x;
    }
    if (std::abs(info.determinant()) < 1e-300) {
      throw Error(ErrorKind::RankDeficiency, "singular GEE information matrix");
    }
    const Eigen::Vector2d step = info.inverse() * score;
    const double previous_rho = rho;
    beta += step;
    fit.iterations = iter;
    trace << "iter " << iter << ": alpha=" << beta(0) << " beta=" << beta(1)
          << " rho=" << fit.rho_hat << "\n";

    const double scale = std::max(1.0, beta.cwiseAbs().maxCoeff());
    if (step.cwiseAbs().maxCoeff() <= options.tolerance * scale) {
      // Confirm rho is stationary too.
      moment_update(beta);
      if (std::abs(fit.rho_hat - previous_rho) <= options.tolerance) {
        fit.converged = true;
        break;
      }
    }
  }
  if (!fit.converged) {
    throw Error(ErrorKind::NonConvergence, "GEE did not converge:\n" + trace.str());
  }
  fit.coefficients = beta;

  auto& dec = fit.decomposition;
  for (const auto& s : stats) {
    const MeanModel m = evaluate(link, beta, s.treatment);
    const Eigen::Vector2d x(1.0, s.treatment);
    const double design_effect = 1.0 + (s.n - 1.0) * fit.rho_hat;
    dec.information.push_back((m.derivative * m.derivative / m.variance) * (s.n / design_effect) *
                              x * x.transpose());
    dec.scores.push_back((m.derivative / m.variance) * ((s.sum_y - s.n * m.mu) / design_effect) * x);
    dec.treatment.push_back(s.treatment);
    dec.bread += dec.information.back();
  }
  return fit;
}

EstimateResult gee_fit(const ObservedDataset& data, Measure measure, const GeeOptions& options) {
  const GeeFit fit = fit_gee_model(data, link_for(measure), options);
  const double variance = cluster_robust_vcov(fit.decomposition, options.sandwich);
  Diagnostics diag;
  diag.values["rho_hat"] = fit.rho_hat;
  diag.values["phi_hat"] = fit.phi_hat;
  diag.values["iterations"] = fit.iterations;
  diag.values["converged"] = fit.converged ? 1.0 : 0.0;
  if (fit.rho_clamped) diag.flags.push_back("rho_clamped");
  if (options.fixed_rho) diag.flags.push_back("rho_fixed");
  const double df = static_cast<double>(data.cluster_count()) - 2.0;
  return make_wald_result(measure, fit.coefficients(1), std::sqrt(variance), df,
                          options.sandwich.method(), std::move(diag));
}

}  // namespace crt
