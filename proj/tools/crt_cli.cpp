// Command-line front end: analyze, truth, simulate, verify.
//
// Exit codes: 0 success, 1 invalid input, 2 nothing could be estimated.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "crt/analysis.hpp"
#include "crt/io.hpp"
#include "crt/oracle.hpp"
#include "crt/report.hpp"
#include "crt/simulation.hpp"

namespace {

constexpr int kExitInput = 1;
constexpr int kExitEstimation = 2;

using nlohmann::json;

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw crt::Error(crt::ErrorKind::Validation, "cannot write '" + path.string() + "'");
  out << content;
}

struct AnalyzeArgs {
  std::string input;
  std::string measure;
  std::optional<std::size_t> min_size;
  std::optional<std::size_t> max_size;
  std::string boundary = "error";
  double fg_bound = 0.75;
  int quad_nodes = 15;
  std::string format = "text";
};

int run_analyze(const AnalyzeArgs& a) {
  const crt::ObservedDataset data = crt::load_observed_csv(a.input);
  crt::AnalysisOptions options;
  if (!a.measure.empty()) options.measure = crt::parse_measure(a.measure);
  options.boundary_policy = crt::parse_boundary_policy(a.boundary);
  options.fg_bound = a.fg_bound;
  options.quad_nodes = a.quad_nodes;
  options.min_cluster_size = a.min_size;
  options.max_cluster_size = a.max_size;
  try {
    const crt::AnalysisGrid grid = crt::analyze(data, options);
    if (a.format == "json") {
      std::cout << crt::grid_to_json(grid).dump(2) << "\n";
    } else {
      std::cout << crt::render_grid_text(grid);
    }
    return 0;
  } catch (const crt::AnalysisFailure& e) {
    if (a.format == "json") {
      std::cout << crt::grid_to_json(e.grid()).dump(2) << "\n";
    } else {
      std::cout << crt::render_grid_text(e.grid());
    }
    std::cerr << "error: " << e.what() << "\n";
    return kExitEstimation;
  }
}

struct TruthArgs {
  std::string input;
  std::string f = "log";
  std::optional<double> rho;
  std::string outcome;
  std::string boundary = "error";
  std::string format = "text";
};

int run_truth(const TruthArgs& a) {
  std::optional<crt::OutcomeKind> kind;
  if (!a.outcome.empty()) kind = crt::parse_outcome_kind(a.outcome);
  const crt::PotentialOutcomeDataset po = crt::load_potential_csv(a.input, kind);
  if (a.f != "log" && a.f != "identity") {
    throw crt::Error(crt::ErrorKind::Validation, "--f must be log or identity");
  }
  const crt::Averaging f = a.f == "log" ? crt::Averaging::Log : crt::Averaging::Identity;
  const crt::BoundaryPolicy policy = crt::parse_boundary_policy(a.boundary);
  if (a.rho && !(*a.rho >= 0.0 && *a.rho <= 1.0)) {
    throw crt::Error(crt::ErrorKind::Domain, "--rho must lie in [0, 1]");
  }

  std::vector<crt::Measure> measures{crt::Measure::Difference};
  if (po.outcome_kind() == crt::OutcomeKind::Binary) measures.push_back(crt::Measure::OddsRatio);
  json entries = json::array();
  std::size_t defined = 0;
  for (crt::Measure m : measures) {
    for (crt::Margin margin : {crt::Margin::Marginal, crt::Margin::ClusterSpecific}) {
      for (crt::Weighting w : {crt::Weighting::ParticipantAverage, crt::Weighting::ClusterAverage}) {
        crt::EstimandSpec spec{margin, w, m, f};
        json e = {{"estimand", spec.key()}, {"label", spec.label()}, {"measure", crt::to_string(m)}};
        try {
          e["value"] = crt::estimand_value(po, spec, policy);
          ++defined;
        } catch (const crt::Error& err) {
          if (err.is_input_error()) throw;
          e["value"] = nullptr;
          e["error"] = std::string(crt::to_string(err.kind())) + ": " + err.what();
        }
        entries.push_back(e);
      }
    }
  }
  json out = {{"schema_version", crt::kSchemaVersion},
              {"clusters", po.cluster_count()},
              {"participants", po.participant_count()},
              {"averaging", a.f},
              {"estimands", entries}};
  if (a.rho) {
    out["precision_weighted"] = {{"rho", *a.rho},
                                 {"value", crt::precision_weighted_estimand(po, *a.rho)}};
    ++defined;
  }

  if (a.format == "json") {
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << "Clusters: " << po.cluster_count() << "  Participants: " << po.participant_count()
              << "\n\n";
    for (const auto& e : entries) {
      char line[160];
      const std::string name = e["label"].get<std::string>() + " " + e["measure"].get<std::string>();
      if (e["value"].is_null()) {
        std::snprintf(line, sizeof line, "%-52s undefined (%s)", name.c_str(),
                      e["error"].get<std::string>().c_str());
      } else {
        std::snprintf(line, sizeof line, "%-52s %.10g", name.c_str(), e["value"].get<double>());
      }
      std::cout << line << "\n";
    }
    if (a.rho) {
      std::printf("%-52s %.10g\n", ("Precision-weighted difference at rho=" + std::to_string(*a.rho)).c_str(),
                  out["precision_weighted"]["value"].get<double>());
    }
  }
  return defined > 0 ? 0 : kExitEstimation;
}

struct SimulateArgs {
  std::string config;
  std::string out;
  std::uint64_t replicate = 0;
};

int run_simulate(const SimulateArgs& a) {
  const crt::StudyConfig cfg = crt::load_study_config(a.config);
  const crt::GeneratedTrial trial = crt::generate(cfg.dgp, a.replicate);
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "potential.csv");
    crt::write_potential_csv(f, trial.potential);
  }
  {
    std::ofstream f(dir / "observed.csv");
    crt::write_observed_csv(f, trial.observed);
  }
  for (const auto& w : trial.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << (dir / "potential.csv").string() << " and "
            << (dir / "observed.csv").string() << " (" << trial.observed.cluster_count()
            << " clusters, " << trial.observed.participant_count() << " participants)\n";
  return 0;
}

struct VerifyArgs {
  std::string config;
  std::optional<std::size_t> replicates;
  std::string out;
  unsigned threads = 0;
};

int run_verify(const VerifyArgs& a) {
  const crt::StudyConfig cfg = crt::load_study_config(a.config);
  crt::StudyOptions options;
  options.analysis = cfg.analysis;
  options.replicates = a.replicates.value_or(cfg.replicates.value_or(100));
  options.threads = a.threads;
  const crt::StudyReport report = crt::run_study(cfg.dgp, options);
  if (!a.out.empty()) write_file(a.out, crt::study_to_json(report).dump(2) + "\n");
  std::cout << crt::render_study_text(report);
  for (const auto& c : report.cells) {
    if (c.replicates > 0) return 0;
  }
  return kExitEstimation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimands and estimators for cluster-randomised trials"};
  app.require_subcommand(1);

  AnalyzeArgs analyze;
  auto* an = app.add_subcommand("analyze", "Run every estimator on observed trial data");
  an->add_option("--input", analyze.input, "CSV with cluster_id,treatment,outcome")->required();
  an->add_option("--measure", analyze.measure, "or | diff")->check(CLI::IsMember({"or", "diff"}));
  an->add_option("--min-cluster-size", analyze.min_size, "Keep clusters with at least K participants");
  an->add_option("--max-cluster-size", analyze.max_size, "Keep clusters with at most K participants");
  an->add_option("--boundary-policy", analyze.boundary, "error | cc")
      ->check(CLI::IsMember({"error", "cc"}));
  an->add_option("--fg-bound", analyze.fg_bound, "Fay-Graubard bound in (0, 1)");
  an->add_option("--quad-nodes", analyze.quad_nodes, "Quadrature nodes for the mixed logistic model");
  an->add_option("--format", analyze.format, "text | json")->check(CLI::IsMember({"text", "json"}));

  TruthArgs truth;
  auto* tr = app.add_subcommand("truth", "Estimand values from a potential-outcome table");
  tr->add_option("--input", truth.input, "CSV with cluster_id,y1,y0")->required();
  tr->add_option("--f", truth.f, "log | identity")->check(CLI::IsMember({"log", "identity"}));
  tr->add_option("--rho", truth.rho, "Also report the precision-weighted difference at rho");
  tr->add_option("--outcome", truth.outcome, "binary | continuous")
      ->check(CLI::IsMember({"binary", "continuous"}));
  tr->add_option("--boundary-policy", truth.boundary, "error | cc")
      ->check(CLI::IsMember({"error", "cc"}));
  tr->add_option("--format", truth.format, "text | json")->check(CLI::IsMember({"text", "json"}));

  SimulateArgs simulate;
  auto* si = app.add_subcommand("simulate", "Write one simulated trial as CSV");
  si->add_option("--config", simulate.config, "Study config file")->required();
  si->add_option("--out", simulate.out, "Output directory")->required();
  si->add_option("--replicate", simulate.replicate, "Replicate index");

  VerifyArgs verify;
  auto* ve = app.add_subcommand("verify", "Monte Carlo study against oracle truths");
  ve->add_option("--config", verify.config, "Study config file")->required();
  ve->add_option("--replicates", verify.replicates, "Number of replicates");
  ve->add_option("--out", verify.out, "JSON report path");
  ve->add_option("--threads", verify.threads, "Worker threads (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*an) return run_analyze(analyze);
    if (*tr) return run_truth(truth);
    if (*si) return run_simulate(simulate);
    if (*ve) return run_verify(verify);
  } catch (const crt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_input_error() ? kExitInput : kExitEstimation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
