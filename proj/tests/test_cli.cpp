#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "crt/analysis.hpp"
#include "crt/io.hpp"
#include "crt/report.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace crt;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path p = fs::temp_directory_path() / ("crt_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

fs::path write(const std::string& name, const std::string& content) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << content;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Run run(const std::string& args) {
  const fs::path out = scratch() / "stdout.txt";
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = std::string("\"") + CRT_CLI_PATH + "\" " + args + " >\"" + out.string() +
                          "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return {code, slurp(out), slurp(err)};
}

std::string ex1_csv() {
  std::ostringstream s;
  write_observed_csv(s, oracle::ex1());
  return s.str();
}

}  // namespace

TEST_CASE("analyze JSON output parses back to the in-memory grid") {
  const fs::path input = write("ex1.csv", ex1_csv());
  const Run r = run("analyze --input \"" + input.string() + "\" --format json");
  REQUIRE(r.code == 0);
  const AnalysisGrid parsed = grid_from_json(nlohmann::json::parse(r.out));
  const AnalysisGrid direct = analyze(load_observed_csv(input));
  CHECK(parsed == direct);
  CHECK(parsed.cell(EstimatorId::SummaryClusterSpecificUnweighted).result->estimate ==
        doctest::Approx(3.0).epsilon(1e-10));
  // Byte-identical on repetition.
  CHECK(run("analyze --input \"" + input.string() + "\" --format json").out == r.out);
}

TEST_CASE("analyze text output and options") {
  const fs::path input = write("ex1.csv", ex1_csv());
  const Run r = run("analyze --input \"" + input.string() + "\"");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Cluster-specific, participant-average") != std::string::npos);
  CHECK(run("analyze --input \"" + input.string() + "\" --measure diff --fg-bound 0.5").code == 0);
  CHECK(run("analyze --input \"" + input.string() + "\" --boundary-policy cc --quad-nodes 7").code == 0);
}

TEST_CASE("validation errors exit with 1") {
  const auto check_input_error = [](const std::string& name, const std::string& content,
                                    const std::string& extra = "") {
    const fs::path p = write(name, content);
    const Run r = run("analyze --input \"" + p.string() + "\"" + extra);
    CHECK_MESSAGE(r.code == 1, name);
    CHECK_MESSAGE(r.err.find("error") != std::string::npos, name);
    return r;
  };
  const Run mixed = check_input_error("mixed.csv", "cluster_id,treatment,outcome\nA,1,1\nA,0,0\nB,0,1\n");
  CHECK(mixed.err.find("'A'") != std::string::npos);
  const Run text = check_input_error("text.csv", "cluster_id,treatment,outcome\nA,1,1\nB,0,abc\n");
  CHECK(text.err.find("line 3") != std::string::npos);
  check_input_error("missing.csv", "cluster_id,treatment,outcome\nA,1\n");
  const Run empty = check_input_error("empty.csv", "");
  CHECK(empty.err.find("no data rows") != std::string::npos);
  check_input_error("continuous_or.csv",
                    "cluster_id,treatment,outcome\nA,1,0.5\nB,1,1.5\nC,0,0.2\nD,0,0.7\n", " --measure or");
  check_input_error("ok.csv", ex1_csv(), " --fg-bound 1.5");

  CHECK(run("analyze --input \"" + (scratch() / "absent.csv").string() + "\"").code == 1);
  CHECK(run("analyze").code == 1);
  CHECK(run("analyze --input x.csv --measure rr").code == 1);
  CHECK(run("frobnicate").code == 1);
}

TEST_CASE("potential-outcome validation errors exit with 1") {
  const fs::path two = write("po_two.csv", "cluster_id,y1,y0\n1,2,0\n1,1,0\n");
  CHECK(run("truth --input \"" + two.string() + "\" --outcome binary").code == 1);
  const fs::path dup = write("po_dup.csv", "cluster_id,y1,y0\ncluster_id,y1,y0\n1,1,0\n");
  const Run r = run("truth --input \"" + dup.string() + "\"");
  CHECK(r.code == 1);
  CHECK(r.err.find("duplicate header") != std::string::npos);
  CHECK(run("truth --input \"" + dup.string() + "\" --rho 1.5").code == 1);
}

TEST_CASE("no estimable cell exits with 2") {
  const fs::path p = write("flat.csv", "cluster_id,treatment,outcome\nA,1,1\nA,1,1\nB,0,1\nB,0,1\n");
  const Run r = run("analyze --input \"" + p.string() + "\" --format json");
  CHECK(r.code == 2);
  const auto grid = grid_from_json(nlohmann::json::parse(r.out));
  CHECK(grid.success_count() == 0);
}

TEST_CASE("truth on the two-cluster table") {
  std::ostringstream s;
  write_potential_csv(s, oracle::po1());
  const fs::path p = write("po1.csv", s.str());
  const Run r = run("truth --input \"" + p.string() + "\" --rho 0.5 --format json");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  std::map<std::string, double> or_values;
  for (const auto& e : j["estimands"]) {
    if (e["measure"] == "odds_ratio") or_values[e["estimand"]] = e["value"].get<double>();
  }
  CHECK(or_values["marginal_participant_average"] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(or_values["marginal_cluster_average"] == doctest::Approx(25.0 / 9.0).epsilon(1e-12));
  CHECK(or_values["cluster_specific_participant_average"] == doctest::Approx(std::pow(9.0, 2.0 / 3.0)).epsilon(1e-12));
  CHECK(or_values["cluster_specific_cluster_average"] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(j["precision_weighted"]["value"].get<double>() == doctest::Approx(3.0 / 11.0).epsilon(1e-12));
  CHECK(run("truth --input \"" + p.string() + "\" --f identity").code == 0);
}

TEST_CASE("simulate and verify") {
  const fs::path cfg = write("study.cfg",
                             "n_clusters = 12\nsizes = [5, 30]\nsize_probabilities = [0.5, 0.5]\n"
                             "effects = [0.2, 0.8]\ncontrol_base = -0.5\nrandom_intercept_sd = 0.3\n"
                             "seed = 3\nboundary_policy = \"cc\"\n");
  const fs::path dir = scratch() / "sim";
  const Run s = run("simulate --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\" --replicate 2");
  REQUIRE(s.code == 0);
  const auto po = load_potential_csv(dir / "potential.csv");
  const auto obs = load_observed_csv(dir / "observed.csv");
  CHECK(po.cluster_count() == 12);
  CHECK(obs.participant_count() == po.participant_count());

  const fs::path report = scratch() / "report.json";
  const Run v = run("verify --config \"" + cfg.string() + "\" --replicates 4 --threads 2 --out \"" +
                    report.string() + "\"");
  CHECK(v.code == 0);
  const auto j = nlohmann::json::parse(slurp(report));
  CHECK(j["schema_version"] == kSchemaVersion);
  CHECK(j["cells"].size() == 8);

  const fs::path bad = write("bad.cfg", "sizes = [5]\nunknown_key = 1\n");
  CHECK(run("verify --config \"" + bad.string() + "\"").code == 1);
}
