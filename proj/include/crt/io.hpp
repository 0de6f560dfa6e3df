// CSV ingestion and export, and the flat key = value study configuration.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "crt/analysis.hpp"
#include "crt/core.hpp"
#include "crt/simulation.hpp"

namespace crt {

// Header: cluster_id,treatment,outcome. Clusters keep first-appearance order.
ObservedDataset parse_observed_csv(std::istream& in, std::optional<OutcomeKind> kind = std::nullopt);
ObservedDataset load_observed_csv(const std::filesystem::path& path,
                                  std::optional<OutcomeKind> kind = std::nullopt);

// Header: cluster_id,y1,y0.
PotentialOutcomeDataset parse_potential_csv(std::istream& in,
                                            std::optional<OutcomeKind> kind = std::nullopt);
PotentialOutcomeDataset load_potential_csv(const std::filesystem::path& path,
                                           std::optional<OutcomeKind> kind = std::nullopt);

void write_observed_csv(std::ostream& out, const ObservedDataset& data);
void write_potential_csv(std::ostream& out, const PotentialOutcomeDataset& data);

struct StudyConfig {
  DgpConfig dgp;
  AnalysisOptions analysis;
  std::optional<std::size_t> replicates;
};

// Flat document of `key = value` lines; values are numbers, true/false,
// quoted strings or [a, b, ...] lists. `#` starts a comment.
StudyConfig parse_study_config(std::istream& in);
StudyConfig load_study_config(const std::filesystem::path& path);

Measure parse_measure(std::string_view text);
BoundaryPolicy parse_boundary_policy(std::string_view text);
OutcomeKind parse_outcome_kind(std::string_view text);

}  // namespace crt
