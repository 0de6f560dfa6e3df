// Text and JSON rendering of analysis grids and study reports.
#pragma once

#include <string>

#include <json.hpp>

#include "crt/analysis.hpp"
#include "crt/simulation.hpp"

namespace crt {

inline constexpr int kSchemaVersion = 1;

nlohmann::json result_to_json(const EstimateResult& result);
EstimateResult result_from_json(const nlohmann::json& j);

nlohmann::json grid_to_json(const AnalysisGrid& grid);
// Inverse of grid_to_json; throws a validation error on malformed input.
AnalysisGrid grid_from_json(const nlohmann::json& j);

// Aligned table in four estimand blocks; p-values to two significant figures.
std::string render_grid_text(const AnalysisGrid& grid);

nlohmann::json study_to_json(const StudyReport& report);
std::string render_study_text(const StudyReport& report);

// p-value with two significant figures, e.g. 0.043 or 2.1e-05.
std::string format_p_value(double p);

}  // namespace crt
