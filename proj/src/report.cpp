#include "crt/report.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

namespace crt {

using nlohmann::json;

namespace {

// JSON has no infinities or NaN; encode them as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double read_number(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorKind::Validation, std::string("missing field '") + key + "'");
  const json& v = j.at(key);
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (s == "nan") return NAN;
  }
  throw Error(ErrorKind::Validation, std::string("field '") + key + "' is not a number");
}

template <typename Enum, std::size_t N>
Enum enum_from(const std::string& text, const Enum (&values)[N], const char* what) {
  for (Enum e : values) {
    if (to_string(e) == text) return e;
  }
  throw Error(ErrorKind::Validation, std::string("unknown ") + what + " '" + text + "'");
}

constexpr Measure kMeasures[] = {Measure::Difference, Measure::OddsRatio};
constexpr Margin kMargins[] = {Margin::Marginal, Margin::ClusterSpecific};
constexpr Weighting kWeightings[] = {Weighting::ParticipantAverage, Weighting::ClusterAverage};
constexpr OutcomeKind kOutcomeKinds[] = {OutcomeKind::Binary, OutcomeKind::Continuous};
constexpr ErrorKind kErrorKinds[] = {
    ErrorKind::Validation,          ErrorKind::Domain,        ErrorKind::UndefinedEstimand,
    ErrorKind::BoundednessViolation, ErrorKind::DegenerateArm, ErrorKind::InestimableVariance,
    ErrorKind::Separation,          ErrorKind::NonConvergence, ErrorKind::RankDeficiency};

std::string averaging_name(Averaging f) { return f == Averaging::Log ? "log" : "identity"; }

std::string variance_kind_name(VarianceMethod::Kind k) {
  switch (k) {
    case VarianceMethod::Kind::ModelBased: return "model_based";
    case VarianceMethod::Kind::HC0: return "hc0";
    case VarianceMethod::Kind::FayGraubard: return "fay_graubard";
  }
  return "unknown";
}

json estimand_to_json(const EstimandSpec& s) {
  return {{"key", s.key()},
          {"label", s.label()},
          {"margin", to_string(s.margin)},
          {"weighting", to_string(s.weighting)},
          {"measure", to_string(s.measure)},
          {"averaging", averaging_name(s.averaging)}};
}

EstimandSpec estimand_from_json(const json& j) {
  EstimandSpec s;
  s.margin = enum_from(j.at("margin").get<std::string>(), kMargins, "margin");
  s.weighting = enum_from(j.at("weighting").get<std::string>(), kWeightings, "weighting");
  s.measure = enum_from(j.at("measure").get<std::string>(), kMeasures, "measure");
  const auto f = j.at("averaging").get<std::string>();
  if (f != "log" && f != "identity") throw Error(ErrorKind::Validation, "unknown averaging '" + f + "'");
  s.averaging = f == "log" ? Averaging::Log : Averaging::Identity;
  return s;
}

}  // namespace

json result_to_json(const EstimateResult& r) {
  json values = json::object();
  for (const auto& [k, v] : r.diagnostics.values) values[k] = number(v);
  return {{"measure", to_string(r.measure)},
          {"estimate", number(r.estimate)},
          {"link_scale_estimate", number(r.link_scale_estimate)},
          {"se_link", number(r.se_link)},
          {"ci_low", number(r.ci_low)},
          {"ci_high", number(r.ci_high)},
          {"p_value", number(r.p_value)},
          {"df", r.df ? number(*r.df) : json(nullptr)},
          {"variance_method",
           {{"label", r.variance_method.label()},
            {"kind", variance_kind_name(r.variance_method.kind)},
            {"bound", r.variance_method.bound}}},
          {"diagnostics", {{"values", values}, {"flags", r.diagnostics.flags}}}};
}

EstimateResult result_from_json(const json& j) {
  try {
    EstimateResult r;
    r.measure = enum_from(j.at("measure").get<std::string>(), kMeasures, "measure");
    r.estimate = read_number(j, "estimate");
    r.link_scale_estimate = read_number(j, "link_scale_estimate");
    r.se_link = read_number(j, "se_link");
    r.ci_low = read_number(j, "ci_low");
    r.ci_high = read_number(j, "ci_high");
    r.p_value = read_number(j, "p_value");
    if (!j.at("df").is_null()) r.df = read_number(j, "df");
    const json& vm = j.at("variance_method");
    const auto kind = vm.at("kind").get<std::string>();
    if (kind == "model_based") {
      r.variance_method.kind = VarianceMethod::Kind::ModelBased;
    } else if (kind == "hc0") {
      r.variance_method.kind = VarianceMethod::Kind::HC0;
    } else if (kind == "fay_graubard") {
      r.variance_method.kind = VarianceMethod::Kind::FayGraubard;
    } else {
      throw Error(ErrorKind::Validation, "unknown variance method '" + kind + "'");
    }
    r.variance_method.bound = vm.at("bound").get<double>();
    const json& diag = j.at("diagnostics");
    for (const auto& [k, v] : diag.at("values").items()) {
      r.diagnostics.values[k] = read_number(diag.at("values"), k.c_str());
    }
    r.diagnostics.flags = diag.at("flags").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed result: ") + e.what());
  }
}

json grid_to_json(const AnalysisGrid& grid) {
  json cells = json::array();
  for (const auto& c : grid.cells) {
    json cell = {{"estimand", estimand_to_json(c.estimand)},
                 {"estimator",
                  {{"key", estimator_key(c.estimator)},
                   {"label", estimator_label(c.estimator, c.estimand.measure)}}},
                 {"status", c.result ? "ok" : "failed"},
                 {"result", c.result ? result_to_json(*c.result) : json(nullptr)},
                 {"failure", nullptr}};
    if (c.failure) {
      cell["failure"] = {{"kind", to_string(c.failure->kind)},
                         {"message", c.failure->message},
                         {"clusters", c.failure->clusters}};
    }
    cells.push_back(std::move(cell));
  }
  return {{"schema_version", kSchemaVersion},
          {"measure", to_string(grid.measure)},
          {"outcome_kind", to_string(grid.outcome_kind)},
          {"clusters", grid.clusters},
          {"participants", grid.participants},
          {"cells", cells}};
}

AnalysisGrid grid_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw Error(ErrorKind::Validation, "unsupported schema_version");
    }
    AnalysisGrid grid;
    grid.measure = enum_from(j.at("measure").get<std::string>(), kMeasures, "measure");
    grid.outcome_kind = enum_from(j.at("outcome_kind").get<std::string>(), kOutcomeKinds, "outcome kind");
    grid.clusters = j.at("clusters").get<std::size_t>();
    grid.participants = j.at("participants").get<std::size_t>();
    for (const auto& cj : j.at("cells")) {
      AnalysisCell cell;
      const auto key = cj.at("estimator").at("key").get<std::string>();
      const auto id = parse_estimator_key(key);
      if (!id) throw Error(ErrorKind::Validation, "unknown estimator '" + key + "'");
      cell.estimator = *id;
      cell.estimand = estimand_from_json(cj.at("estimand"));
      if (!cj.at("result").is_null()) cell.result = result_from_json(cj.at("result"));
      if (!cj.at("failure").is_null()) {
        const json& f = cj.at("failure");
        cell.failure = CellFailure{
            enum_from(f.at("kind").get<std::string>(), kErrorKinds, "error kind"),
            f.at("message").get<std::string>(), f.at("clusters").get<std::vector<std::string>>()};
      }
      grid.cells.push_back(std::move(cell));
    }
    return grid;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed analysis JSON: ") + e.what());
  }
}

std::string format_p_value(double p) {
  if (std::isnan(p)) return "NA";
  char buf[32];
  if (p >= 0.001 || p == 0.0) {
    std::snprintf(buf, sizeof buf, "%.2g", p);
    return buf;
  }
  std::snprintf(buf, sizeof buf, "%.1e", p);
  return buf;
}

namespace {

std::string fixed(double v, int decimals) {
  if (!std::isfinite(v)) return std::isnan(v) ? "NA" : (v > 0 ? "Inf" : "-Inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string render_grid_text(const AnalysisGrid& grid) {
  const bool ratio = grid.measure == Measure::OddsRatio;
  const int decimals = ratio ? 2 : 3;
  const std::string effect_header = ratio ? "Odds ratio (95% CI)" : "Difference (95% CI)";
  std::vector<std::array<std::string, 5>> rows;
  std::vector<std::string> notes;
  std::string current_block;
  for (const auto& c : grid.cells) {
    if (c.estimand.label() != current_block) {
      current_block = c.estimand.label();
      rows.push_back({current_block, "", "", "", ""});
    }
    std::array<std::string, 5> row;
    row[0] = "  " + estimator_label(c.estimator, grid.measure);
    if (c.result) {
      const auto& r = *c.result;
      row[1] = fixed(r.estimate, decimals) + " (" + fixed(r.ci_low, decimals) + " to " +
               fixed(r.ci_high, decimals) + ")";
      row[2] = format_p_value(r.p_value);
      row[3] = r.variance_method.label();
      row[4] = r.df ? "t(" + fixed(*r.df, 0) + ")" : "normal";
      for (const auto& f : r.diagnostics.flags) {
        notes.push_back(estimator_key(c.estimator) + ": " + f);
      }
    } else {
      row[1] = "not estimable";
      row[2] = "-";
      row[3] = std::string(to_string(c.failure->kind));
      std::string note = estimator_key(c.estimator) + ": " + c.failure->message;
      notes.push_back(note);
    }
    rows.push_back(row);
  }
  const std::array<std::string, 5> header{"Estimand / Estimator", effect_header, "P-value",
                                          "Variance", "Reference"};
  std::array<std::size_t, 5> width{};
  for (std::size_t k = 0; k < 5; ++k) width[k] = header[k].size();
  for (const auto& r : rows) {
    if (r[1].empty()) continue;  // block titles span the row
    for (std::size_t k = 0; k < 5; ++k) width[k] = std::max(width[k], r[k].size());
  }
  std::ostringstream out;
  out << "Clusters: " << grid.clusters << "  Participants: " << grid.participants
      << "  Outcome: " << to_string(grid.outcome_kind) << "  Measure: " << to_string(grid.measure)
      << "\n\n";
  auto line = [&](const std::array<std::string, 5>& r) {
    std::string s;
    for (std::size_t k = 0; k < 5; ++k) s += pad(r[k], width[k] + (k < 4 ? 2 : 0));
    while (!s.empty() && s.back() == ' ') s.pop_back();
    out << s << "\n";
  };
  line(header);
  for (const auto& r : rows) {
    if (r[1].empty()) {
      out << r[0] << "\n";
    } else {
      line(r);
    }
  }
  if (!notes.empty()) {
    out << "\nNotes:\n";
    for (const auto& n : notes) out << "  " << n << "\n";
  }
  return out.str();
}

json study_to_json(const StudyReport& report) {
  const auto& d = report.config;
  json strata = json::array();
  for (const auto& s : d.strata) {
    strata.push_back({{"size", s.size},
                      {"probability", s.probability},
                      {"effect", s.effect},
                      {"control_base", d.base_for(s)}});
  }
  json cells = json::array();
  for (const auto& c : report.cells) {
    json cell = {{"estimator", estimator_key(c.estimator)},
                 {"estimator_label", estimator_label(c.estimator, report.measure)},
                 {"estimand", estimand_to_json(c.estimand)},
                 {"replicates", c.replicates},
                 {"failures", c.failures},
                 {"mean_estimate", number(c.mean_estimate)},
                 {"mean_link_estimate", number(c.mean_link_estimate)},
                 {"empirical_se", number(c.empirical_se)},
                 {"mean_model_se", number(c.mean_model_se)},
                 {"mean_truth", number(c.mean_truth)},
                 {"bias_vs_replicate_truth", number(c.bias_vs_replicate_truth)},
                 {"bias_vs_average_truth", number(c.bias_vs_average_truth)},
                 {"coverage_replicate_truth", number(c.coverage_replicate_truth)},
                 {"coverage_average_truth", number(c.coverage_average_truth)}};
    if (c.mean_implied_target) cell["mean_implied_target"] = number(*c.mean_implied_target);
    cells.push_back(std::move(cell));
  }
  json records = json::array();
  auto opt = [](const std::optional<double>& v) { return v ? number(*v) : json(nullptr); };
  for (const auto& r : report.records) {
    json rec = {{"replicate", r.replicate}};
    json per = json::array();
    for (std::size_t e = 0; e < r.estimates.size(); ++e) {
      per.push_back({{"estimate", opt(r.estimates[e])},
                     {"ci_low", opt(r.ci_low[e])},
                     {"ci_high", opt(r.ci_high[e])},
                     {"truth", opt(r.truths[e])},
                     {"failure", r.failures[e] ? json(*r.failures[e]) : json(nullptr)}});
    }
    rec["cells"] = per;
    if (r.implied_lmm_target) rec["implied_lmm_target"] = number(*r.implied_lmm_target);
    records.push_back(std::move(rec));
  }
  return {{"schema_version", kSchemaVersion},
          {"measure", to_string(report.measure)},
          {"requested_replicates", report.requested_replicates},
          {"config",
           {{"n_clusters", d.n_clusters},
            {"outcome", to_string(d.outcome)},
            {"control_base", d.control_base},
            {"random_intercept_sd", d.random_intercept_sd},
            {"residual_sd", d.residual_sd},
            {"seed", d.seed},
            {"informative", d.informative},
            {"strata", strata}}},
          {"warnings", report.warnings},
          {"cells", cells},
          {"records", records}};
}

std::string render_study_text(const StudyReport& report) {
  std::ostringstream out;
  out << "Replicates: " << report.requested_replicates << "  Clusters: " << report.config.n_clusters
      << "  Measure: " << to_string(report.measure) << "\n";
  for (const auto& w : report.warnings) out << "warning: " << w << "\n";
  out << "\n";
  const std::array<std::string, 10> header{"Estimator", "Target", "Mean", "Truth", "Bias",
                                           "Emp SE", "Model SE", "Coverage", "N", "Failed"};
  std::vector<std::array<std::string, 10>> rows;
  for (const auto& c : report.cells) {
    rows.push_back({estimator_key(c.estimator), c.estimand.key(), fixed(c.mean_estimate, 4),
                    fixed(c.mean_truth, 4), fixed(c.bias_vs_replicate_truth, 4),
                    fixed(c.empirical_se, 4), fixed(c.mean_model_se, 4),
                    fixed(c.coverage_replicate_truth, 3), std::to_string(c.replicates),
                    std::to_string(c.failures)});
  }
  std::array<std::size_t, 10> width{};
  for (std::size_t k = 0; k < 10; ++k) {
    width[k] = header[k].size();
    for (const auto& r : rows) width[k] = std::max(width[k], r[k].size());
  }
  auto line = [&](const std::array<std::string, 10>& r) {
    std::string s;
    for (std::size_t k = 0; k < 10; ++k) s += pad(r[k], width[k] + 2);
    while (!s.empty() && s.back() == ' ') s.pop_back();
    out << s << "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  for (const auto& c : report.cells) {
    if (c.mean_implied_target) {
      out << "\n" << estimator_key(c.estimator) << ": mean precision-weighted target at fitted icc = "
          << fixed(*c.mean_implied_target, 4) << "\n";
    }
  }
  return out.str();
}

}  // namespace crt
