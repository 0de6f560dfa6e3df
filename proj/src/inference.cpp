#include "crt/inference.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

namespace crt {

double reference_quantile(double level, std::optional<double> df) {
  const double upper = 0.5 + level / 2.0;
  if (df) {
    if (!(*df > 0.0)) {
      throw Error(ErrorKind::InestimableVariance, "t reference needs positive degrees of freedom");
    }
    return boost::math::quantile(boost::math::students_t(*df), upper);
  }
  return boost::math::quantile(boost::math::normal(), upper);
}

double two_sided_p_value(double statistic, std::optional<double> df) {
  if (std::isnan(statistic)) return 1.0;
  if (std::isinf(statistic)) return 0.0;
  const double a = std::abs(statistic);
  if (df) {
    return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(*df), a));
  }
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), a));
}

EstimateResult make_wald_result(Measure measure, double link_estimate, double se_link,
                                std::optional<double> df, VarianceMethod method,
                                Diagnostics diagnostics, double level) {
  if (!std::isfinite(link_estimate) || !(se_link >= 0.0) || !std::isfinite(se_link)) {
    throw Error(ErrorKind::InestimableVariance, "non-finite estimate or standard error");
  }
  const double q = reference_quantile(level, df);
  const double lo = link_estimate - q * se_link;
  const double hi = link_estimate + q * se_link;

  double statistic = 0.0;
  if (se_link > 0.0) {
    statistic = link_estimate / se_link;
  } else if (link_estimate != 0.0) {
    statistic = link_estimate > 0 ? INFINITY : -INFINITY;
  }

  EstimateResult r;
  r.measure = measure;
  r.link_scale_estimate = link_estimate;
  r.se_link = se_link;
  r.df = df;
  r.variance_method = method;
  r.diagnostics = std::move(diagnostics);
  r.p_value = two_sided_p_value(statistic, df);
  if (measure == Measure::OddsRatio) {
    r.estimate = std::exp(link_estimate);
    r.ci_low = std::exp(lo);
    r.ci_high = std::exp(hi);
  } else {
    r.estimate = link_estimate;
    r.ci_low = lo;
    r.ci_high = hi;
  }
  return r;
}

}  // namespace crt
