// Independence estimating equations for the marginal estimands.
#pragma once

#include "crt/core.hpp"
#include "crt/glm_engine.hpp"

namespace crt {

/// Participant-average uses unit weights; cluster-average weights each
/// participant by 1/n_j so every cluster carries total weight one.
/// Variance: cluster-robust sandwich, Fay-Graubard corrected by default,
/// with a t(M - 2) reference.
EstimateResult iee_estimate(const ObservedDataset& data, Weighting weighting, Measure measure,
                            const SandwichSpec& sandwich = {});

}  // namespace crt
