#include "crt/mixed.hpp"

#include <boost/math/tools/minima.hpp>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <tuple>

#include "crt/gauss_hermite.hpp"
#include "crt/inference.hpp"
#include "crt/oracle.hpp"

namespace crt {

// ---------------------------------------------------------------------------
// Linear mixed model

namespace {

struct LmmCluster {
  double n;
  int treatment;
  double sum_y;
  double within_ss;  // sum (y - ybar)^2
};

std::vector<LmmCluster> lmm_clusters(const ObservedDataset& data) {
  std::vector<LmmCluster> out;
  out.reserve(data.cluster_count());
  for (const auto& c : data.clusters()) {
    CompensatedSum sy;
    for (double y : c.outcomes) sy += y;
    const double n = static_cast<double>(c.outcomes.size());
    const double mean = sy.value() / n;
    CompensatedSum ss;
    for (double y : c.outcomes) ss += (y - mean) * (y - mean);
    out.push_back({n, c.treatment, sy.value(), ss.value()});
  }
  return out;
}

struct GlsSolution {
  Eigen::Vector2d beta;
  Eigen::Matrix2d xtrx;  // X' R^-1 X
  double quadratic;      // r' R^-1 r at beta
  double log_det_r;      // sum_j log |R_j|
};

// Generalised least squares with R_j = (1 - t) I + t J.
GlsSolution gls(const std::vector<LmmCluster>& clusters, double icc) {
  Eigen::Matrix2d xtrx = Eigen::Matrix2d::Zero();
  Eigen::Vector2d xtry = Eigen::Vector2d::Zero();
  double log_det = 0.0;
  for (const auto& c : clusters) {
    const double d = 1.0 + (c.n - 1.0) * icc;
    const Eigen::Vector2d x(1.0, c.treatment);
    xtrx += (c.n / d) * x * x.transpose();
    xtry += (c.sum_y / d) * x;
    log_det += (c.n - 1.0) * std::log1p(-icc) + std::log(d);
  }
  if (std::abs(xtrx.determinant()) < 1e-300) {
    throw Error(ErrorKind::RankDeficiency, "singular mixed-model design");
  }
  GlsSolution s;
  s.xtrx = xtrx;
  s.beta = xtrx.inverse() * xtry;
  s.log_det_r = log_det;
  CompensatedSum q;
  for (const auto& c : clusters) {
    const double d = 1.0 + (c.n - 1.0) * icc;
    const double mu = s.beta(0) + s.beta(1) * c.treatment;
    const double sum_r = c.sum_y - c.n * mu;
    // r' R^-1 r = W / (1 - t) + (sum r)^2 / (n d)
    q += c.within_ss / (1.0 - icc) + sum_r * sum_r / (c.n * d);
  }
  s.quadratic = q.value();
  return s;
}

double total_n(const std::vector<LmmCluster>& clusters) {
  double n = 0.0;
  for (const auto& c : clusters) n += c.n;
  return n;
}

double profile_criterion(const std::vector<LmmCluster>& clusters, double icc,
                         VarianceCriterion criterion) {
  const GlsSolution s = gls(clusters, icc);
  const double n = total_n(clusters);
  const double p = 2.0;
  if (criterion == VarianceCriterion::Reml) {
    const double sigma2 = s.quadratic / (n - p);
    return (n - p) * std::log(sigma2) + s.log_det_r + std::log(s.xtrx.determinant());
  }
  const double sigma2 = s.quadratic / n;
  return n * std::log(sigma2) + s.log_det_r;
}

void require_two_per_arm(const ObservedDataset& data, const char* what) {
  if (data.arm_cluster_count(0) < 2 || data.arm_cluster_count(1) < 2) {
    throw Error(ErrorKind::InestimableVariance,
                std::string(what) + " needs at least two clusters in each arm");
  }
}

}  // namespace

double lmm_profile_criterion(const ObservedDataset& data, double icc, VarianceCriterion criterion) {
  if (!(icc >= 0.0 && icc < 1.0)) {
    throw Error(ErrorKind::Domain, "icc must lie in [0, 1)");
  }
  return profile_criterion(lmm_clusters(data), icc, criterion);
}

LmmFit fit_lmm(const ObservedDataset& data, const LmmOptions& options) {
  require_two_per_arm(data, "linear mixed model");
  const auto clusters = lmm_clusters(data);
  const double n = total_n(clusters);
  if (n <= 2.0) {
    throw Error(ErrorKind::InestimableVariance, "too few participants for a mixed model");
  }
  auto criterion = [&](double t) { return profile_criterion(clusters, t, options.criterion); };

  LmmFit fit;
  double icc = 0.0;
  if (options.fixed_icc) {
    icc = *options.fixed_icc;
    if (!(icc >= 0.0 && icc < 1.0)) {
      throw Error(ErrorKind::Domain, "fixed icc must lie in [0, 1)");
    }
  } else {
    // Bracket on a grid that is dense near zero, then refine with Brent's
    // method (golden section with parabolic steps).
    std::vector<double> grid{0.0};
    for (double t = 1e-5; t < options.max_icc; t *= 1.25) grid.push_back(t);
    grid.push_back(options.max_icc);
    std::size_t best = 0;
    double best_value = criterion(grid[0]);
    for (std::size_t k = 1; k < grid.size(); ++k) {
      const double v = criterion(grid[k]);
      if (v < best_value) {
        best_value = v;
        best = k;
      }
    }
    const double lo = grid[best == 0 ? 0 : best - 1];
    const double hi = grid[std::min(best + 1, grid.size() - 1)];
    const int bits = static_cast<int>(std::ceil(1.0 - std::log2(options.tolerance)));
    auto [t, value] = boost::math::tools::brent_find_minima(criterion, lo, hi, bits);
    icc = value <= best_value ? t : grid[best];
    if (icc <= options.tolerance) {
      icc = criterion(0.0) <= criterion(icc) ? 0.0 : icc;
      fit.icc_boundary = true;
    }
  }

  const GlsSolution s = gls(clusters, icc);
  const double sigma2 = options.criterion == VarianceCriterion::Reml ? s.quadratic / (n - 2.0)
                                                                     : s.quadratic / n;
  fit.coefficients = s.beta;
  fit.covariance = sigma2 * s.xtrx.inverse();
  fit.icc = icc;
  fit.components = {icc * sigma2, (1.0 - icc) * sigma2};
  fit.criterion_value = profile_criterion(clusters, icc, options.criterion);
  return fit;
}

EstimateResult lmm_fit(const ObservedDataset& data, const LmmOptions& options) {
  const LmmFit fit = fit_lmm(data, options);
  Diagnostics diag;
  diag.values["icc"] = fit.icc;
  diag.values["sigma_b_sq"] = fit.components.sigma_b_sq;
  diag.values["sigma_w_sq"] = fit.components.sigma_w_sq;
  diag.values["criterion"] = fit.criterion_value;
  if (fit.icc_boundary) diag.flags.push_back("icc_boundary");
  if (options.fixed_icc) diag.flags.push_back("icc_fixed");
  if (options.criterion == VarianceCriterion::Ml) diag.flags.push_back("ml");
  return make_wald_result(Measure::Difference, fit.coefficients(1),
                          std::sqrt(fit.covariance(1, 1)), std::nullopt,
                          {VarianceMethod::Kind::ModelBased, 0.75}, std::move(diag));
}

double implied_lmm_target(const PotentialOutcomeDataset& po, const VarianceComponents& vc) {
  return precision_weighted_estimand(po, vc.icc());
}

// ---------------------------------------------------------------------------
// Logistic mixed model

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

GlmmLikelihood::GlmmLikelihood(const ObservedDataset& data, int quad_nodes) {
  if (data.outcome_kind() != OutcomeKind::Binary) {
    throw Error(ErrorKind::Validation, "logistic mixed model needs binary outcomes");
  }
  // Clusters with equal (n, events, treatment) contribute identical terms.
  std::map<std::tuple<std::size_t, std::size_t, int>, double> counts;
  for (const auto& c : data.clusters()) {
    std::size_t events = 0;
    for (double y : c.outcomes) events += y == 1.0 ? 1 : 0;
    counts[{c.outcomes.size(), events, c.treatment}] += 1.0;
  }
  for (const auto& [key, m] : counts) {
    patterns_.push_back({static_cast<double>(std::get<0>(key)),
                         static_cast<double>(std::get<1>(key)), std::get<2>(key), m});
  }
  const auto rule = gauss_hermite(quad_nodes);
  nodes_ = rule.nodes;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    log_weights_.push_back(std::log(rule.weights[k]) + rule.nodes[k] * rule.nodes[k]);
  }
}

GlmmLikelihood::ClusterTerm GlmmLikelihood::evaluate(const Pattern& p, double alpha,
                                                     double beta, double sigma) const {
  const double eta0 = alpha + beta * p.treatment;
  auto h = [&](double v) {
    const double eta = eta0 + sigma * v;
    return p.events * eta - p.n * softplus(eta) - 0.5 * v * v;
  };
  // Mode of the (strictly concave) integrand by damped Newton.
  double v = 0.0;
  double hv = h(v);
  double curvature = 1.0;
  for (int it = 0; it < 100; ++it) {
    const double mu = expit(eta0 + sigma * v);
    const double g1 = sigma * (p.events - p.n * mu) - v;
    curvature = sigma * sigma * p.n * mu * (1.0 - mu) + 1.0;
    double step = g1 / curvature;
    double next = v + step;
    double hn = h(next);
    for (int halve = 0; halve < 50 && hn < hv; ++halve) {
      step *= 0.5;
      next = v + step;
      hn = h(next);
    }
    v = next;
    hv = hn;
    if (std::abs(step) < 1e-12 * std::max(1.0, std::abs(v))) break;
  }
  {
    const double mu = expit(eta0 + sigma * v);
    curvature = sigma * sigma * p.n * mu * (1.0 - mu) + 1.0;
  }
  const double scale = 1.0 / std::sqrt(curvature);

  const std::size_t q = nodes_.size();
  std::vector<double> terms(q), points(q);
  double peak = -INFINITY;
  for (std::size_t k = 0; k < q; ++k) {
    points[k] = v + std::numbers::sqrt2 * scale * nodes_[k];
    terms[k] = log_weights_[k] + h(points[k]);
    peak = std::max(peak, terms[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < q; ++k) total += std::exp(terms[k] - peak);
  const double lse = peak + std::log(total);

  ClusterTerm out;
  out.log_lik = std::log(scale) + lse - 0.5 * std::log(std::numbers::pi);
  double d_eta = 0.0, d_sigma = 0.0;
  for (std::size_t k = 0; k < q; ++k) {
    const double weight = std::exp(terms[k] - lse);
    const double resid = p.events - p.n * expit(eta0 + sigma * points[k]);
    d_eta += weight * resid;
    d_sigma += weight * resid * points[k];
  }
  out.gradient = Eigen::Vector3d(d_eta, d_eta * p.treatment, d_sigma);
  return out;
}

double GlmmLikelihood::log_likelihood(double alpha, double beta, double sigma) const {
  CompensatedSum total;
  for (const auto& p : patterns_) total += p.multiplicity * evaluate(p, alpha, beta, sigma).log_lik;
  return total.value();
}

Eigen::Vector3d GlmmLikelihood::gradient(double alpha, double beta, double sigma) const {
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  for (const auto& p : patterns_) g += p.multiplicity * evaluate(p, alpha, beta, sigma).gradient;
  return g;
}

namespace {

using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct MinimizeResult {
  Eigen::VectorXd x;
  double value;
  Eigen::VectorXd gradient;
  int iterations;
  bool converged;
  bool stopped_by_guard;
};

// BFGS with Armijo backtracking. `guard` may stop the search early (used to
// detect a variance component heading to zero).
MinimizeResult bfgs(const Objective& f, Eigen::VectorXd x, double gtol, int max_iter,
                    const std::function<bool(const Eigen::VectorXd&)>& guard) {
  const auto dim = x.size();
  Eigen::VectorXd g(dim);
  double fx = f(x, g);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(dim, dim);
  MinimizeResult r{x, fx, g, 0, false, false};
  for (int iter = 1; iter <= max_iter; ++iter) {
    r.iterations = iter;
    if (g.cwiseAbs().maxCoeff() < gtol) {
      r.converged = true;
      break;
    }
    Eigen::VectorXd dir = -h_inv * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      h_inv.setIdentity();
      dir = -g;
      slope = g.dot(dir);
    }
    double t = 1.0;
    Eigen::VectorXd x_new(dim), g_new(dim);
    double f_new = INFINITY;
    for (int k = 0; k < 60; ++k) {
      x_new = x + t * dir;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * t * slope) break;
      t *= 0.5;
    }
    if (!(f_new <= fx + 1e-4 * t * slope)) break;  // line search failed
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
      h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    x = x_new;
    g = g_new;
    fx = f_new;
    if (guard && guard(x)) {
      r.stopped_by_guard = true;
      break;
    }
  }
  r.x = x;
  r.value = fx;
  r.gradient = g;
  if (g.cwiseAbs().maxCoeff() < gtol) r.converged = true;
  return r;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x) {
  const auto dim = x.size();
  Eigen::MatrixXd hess(dim, dim);
  Eigen::VectorXd gp(dim), gm(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x(i)));
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    f(xp, gp);
    f(xm, gm);
    hess.col(i) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

// A few Newton steps from a BFGS solution to sharpen the optimum.
void newton_polish(const Objective& f, MinimizeResult& r) {
  Eigen::VectorXd g(r.x.size());
  for (int k = 0; k < 8; ++k) {
    if (r.gradient.cwiseAbs().maxCoeff() < 1e-10) break;
    const Eigen::MatrixXd hess = numeric_hessian(f, r.x);
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd x_new = r.x - llt.solve(r.gradient);
    const double f_new = f(x_new, g);
    if (!(f_new <= r.value + 1e-12 * std::max(1.0, std::abs(r.value)))) break;
    r.x = x_new;
    r.value = f_new;
    r.gradient = g;
  }
}

}  // namespace

GlmmFit fit_glmm_logit(const ObservedDataset& data, const GlmmOptions& options) {
  require_two_per_arm(data, "logistic mixed model");
  data.require_both_arms();
  const GlmmLikelihood lik(data, options.quad_nodes);

  // Start from the pooled logistic closed form.
  double events[2] = {0, 0}, sizes[2] = {0, 0};
  for (const auto& c : data.clusters()) {
    for (double y : c.outcomes) events[c.treatment] += y;
    sizes[c.treatment] += static_cast<double>(c.outcomes.size());
  }
  const double p0 = events[0] / sizes[0];
  const double p1 = events[1] / sizes[1];
  if (!(p0 > 0 && p0 < 1 && p1 > 0 && p1 < 1)) {
    throw Error(ErrorKind::Separation, "an arm has no outcome variation");
  }

  // Objective over (alpha, beta) with sigma held fixed.
  auto fixed_fit = [&](double sigma) {
    Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      const Eigen::Vector3d grad = lik.gradient(x(0), x(1), sigma);
      g = -grad.head<2>();
      return -lik.log_likelihood(x(0), x(1), sigma);
    };
    Eigen::VectorXd start(2);
    start << logit(p0), logit(p1) - logit(p0);
    auto r = bfgs(f, start, options.gradient_tolerance, options.max_iterations, {});
    newton_polish(f, r);
    return std::pair{r, numeric_hessian(f, r.x)};
  };

  GlmmFit fit;
  auto finish_fixed = [&](double sigma) {
    auto [r, hess] = fixed_fit(sigma);
    fit.alpha = r.x(0);
    fit.beta = r.x(1);
    fit.sigma_b = sigma;
    fit.log_likelihood = -r.value;
    fit.gradient = lik.gradient(fit.alpha, fit.beta, sigma);
    fit.iterations += r.iterations;
    fit.converged = r.converged || r.gradient.cwiseAbs().maxCoeff() < options.gradient_tolerance;
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::InestimableVariance, "observed information is not positive definite");
    }
    fit.beta_variance = hess.inverse()(1, 1);
  };

  if (options.fixed_sigma_b) {
    if (!(*options.fixed_sigma_b >= 0.0)) {
      throw Error(ErrorKind::Domain, "fixed sigma_b must be non-negative");
    }
    finish_fixed(*options.fixed_sigma_b);
    return fit;
  }

  constexpr double kLogSigmaFloor = -9.0;  // sigma ~ 1.2e-4
  Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double sigma = std::exp(x(2));
    const Eigen::Vector3d grad = lik.gradient(x(0), x(1), sigma);
    g.resize(3);
    g << -grad(0), -grad(1), -grad(2) * sigma;
    return -lik.log_likelihood(x(0), x(1), sigma);
  };
  Eigen::VectorXd start(3);
  start << logit(p0), logit(p1) - logit(p0), std::log(0.5);
  auto r = bfgs(f, start, options.gradient_tolerance, options.max_iterations,
                [&](const Eigen::VectorXd& x) { return x(2) < kLogSigmaFloor; });
  if (!r.stopped_by_guard) newton_polish(f, r);

  const double sigma = std::exp(r.x(2));
  const bool near_zero = r.stopped_by_guard || sigma < 1e-3;
  if (near_zero) {
    // Compare against the sigma = 0 boundary fit and keep the better one.
    const double interior_value = r.value;
    GlmmFit boundary;
    std::swap(fit, boundary);
    finish_fixed(0.0);
    if (fit.log_likelihood + 1e-9 >= -interior_value || r.stopped_by_guard) {
      fit.sigma_boundary = true;
      fit.iterations += r.iterations;
      return fit;
    }
    fit = boundary;
  }

  const Eigen::MatrixXd hess = numeric_hessian(f, r.x);
  Eigen::LLT<Eigen::MatrixXd> llt(hess);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::InestimableVariance, "observed information is not positive definite");
  }
  fit.alpha = r.x(0);
  fit.beta = r.x(1);
  fit.sigma_b = sigma;
  fit.log_likelihood = -r.value;
  fit.gradient = lik.gradient(fit.alpha, fit.beta, sigma);
  fit.iterations = r.iterations;
  fit.converged = r.gradient.cwiseAbs().maxCoeff() < options.gradient_tolerance;
  fit.beta_variance = hess.inverse()(1, 1);
  return fit;
}

EstimateResult glmm_logit_fit(const ObservedDataset& data, const GlmmOptions& options) {
  const GlmmFit fit = fit_glmm_logit(data, options);
  Diagnostics diag;
  diag.values["sigma_b_sq"] = fit.sigma_b * fit.sigma_b;
  // Latent-scale intracluster correlation.
  diag.values["icc_latent"] =
      fit.sigma_b * fit.sigma_b / (fit.sigma_b * fit.sigma_b + std::numbers::pi * std::numbers::pi / 3.0);
  diag.values["log_likelihood"] = fit.log_likelihood;
  diag.values["iterations"] = fit.iterations;
  diag.values["converged"] = fit.converged ? 1.0 : 0.0;
  diag.values["quad_nodes"] = options.quad_nodes;
  if (fit.sigma_boundary) diag.flags.push_back("sigma_b_boundary");
  if (!fit.converged) diag.flags.push_back("not_converged");
  if (options.fixed_sigma_b) diag.flags.push_back("sigma_b_fixed");
  return make_wald_result(Measure::OddsRatio, fit.beta, std::sqrt(fit.beta_variance), std::nullopt,
                          {VarianceMethod::Kind::ModelBased, 0.75}, std::move(diag));
}

}  // namespace crt
