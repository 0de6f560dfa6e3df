// Wald intervals and p-values on the link scale.
#pragma once

#include <optional>

#include "crt/core.hpp"

namespace crt {

// Two-sided quantile of the reference distribution: t(df) or N(0,1).
double reference_quantile(double level, std::optional<double> df);

// Two-sided p-value for a Wald statistic.
double two_sided_p_value(double statistic, std::optional<double> df);

// Builds an EstimateResult from a link-scale estimate and its standard error.
// Odds ratios are exponentiated; the interval is formed on the link scale
// and then transformed.
EstimateResult make_wald_result(Measure measure, double link_estimate, double se_link,
                                std::optional<double> df, VarianceMethod method,
                                Diagnostics diagnostics, double level = 0.95);

}  // namespace crt
