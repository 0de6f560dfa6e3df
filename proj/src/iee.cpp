#include "crt/iee.hpp"

#include <cmath>

#include "crt/inference.hpp"

namespace crt {

EstimateResult iee_estimate(const ObservedDataset& data, Weighting weighting, Measure measure,
                            const SandwichSpec& sandwich) {
  const auto weights = weighting == Weighting::ParticipantAverage ? unit_weights(data)
                                                                  : inverse_size_weights(data);
  const GlmFit fit = fit_working_glm(data, link_for(measure), weights);
  const double variance = cluster_robust_vcov(fit, sandwich);

  Diagnostics diag;
  diag.values["iterations"] = fit.iterations;
  diag.values["converged"] = fit.converged ? 1.0 : 0.0;
  diag.values["clusters"] = static_cast<double>(data.cluster_count());
  const double df = static_cast<double>(data.cluster_count()) - 2.0;
  return make_wald_result(measure, fit.coefficients(1), std::sqrt(variance), df,
                          sandwich.method(), std::move(diag));
}

}  // namespace crt
