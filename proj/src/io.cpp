#include "crt/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace crt {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string_view rest(line);
  while (true) {
    const auto comma = rest.find(',');
    fields.push_back(unquote(trim(rest.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return fields;
}

std::optional<double> to_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

Error line_error(std::size_t line, const std::string& what) {
  return Error(ErrorKind::Validation, "line " + std::to_string(line) + ": " + what);
}

// Reads header plus rows, checking the column layout. Each returned row has
// exactly the expected number of fields; `line_numbers` is 1-based.
struct Table {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

Table read_table(std::istream& in, const std::vector<std::string>& expected) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::vector<std::string>> header;
  Table table;
  std::string joined;
  for (const auto& e : expected) joined += (joined.empty() ? "" : ",") + e;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);  // UTF-8 byte order mark
    }
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (!header) {
      std::map<std::string, int> seen;
      for (const auto& f : fields) {
        if (++seen[f] > 1) throw line_error(line_no, "duplicate header column '" + f + "'");
      }
      if (fields != expected) {
        throw line_error(line_no, "expected header '" + joined + "'");
      }
      header = fields;
      continue;
    }
    if (fields == expected) throw line_error(line_no, "duplicate header row");
    if (fields.size() != expected.size()) {
      throw line_error(line_no, "expected " + std::to_string(expected.size()) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (fields[k].empty()) throw line_error(line_no, "missing value for '" + expected[k] + "'");
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (table.rows.empty()) throw Error(ErrorKind::Validation, "no data rows");
  return table;
}

double numeric_field(const std::string& text, const std::string& column, std::size_t line) {
  const auto v = to_number(text);
  if (!v) throw line_error(line, "non-numeric " + column + " '" + text + "'");
  if (!std::isfinite(*v)) throw line_error(line, "non-finite " + column + " '" + text + "'");
  return *v;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Validation, "cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

ObservedDataset parse_observed_csv(std::istream& in, std::optional<OutcomeKind> kind) {
  const Table table = read_table(in, {"cluster_id", "treatment", "outcome"});
  std::vector<ClusterRecord> clusters;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    const double t = numeric_field(row[1], "treatment", line);
    if (t != 0.0 && t != 1.0) throw line_error(line, "treatment must be 0 or 1, got '" + row[1] + "'");
    const double y = numeric_field(row[2], "outcome", line);
    const int z = static_cast<int>(t);
    auto [it, inserted] = index.try_emplace(row[0], clusters.size());
    if (inserted) {
      clusters.push_back({row[0], z, {}});
    } else if (clusters[it->second].treatment != z) {
      throw Error(ErrorKind::Validation,
                  "line " + std::to_string(line) + ": cluster '" + row[0] +
                      "' has rows with both treatment 0 and 1",
                  {row[0]});
    }
    clusters[it->second].outcomes.push_back(y);
  }
  return ObservedDataset(std::move(clusters), kind);
}

ObservedDataset load_observed_csv(const std::filesystem::path& path, std::optional<OutcomeKind> kind) {
  auto in = open_input(path);
  return parse_observed_csv(in, kind);
}

PotentialOutcomeDataset parse_potential_csv(std::istream& in, std::optional<OutcomeKind> kind) {
  const Table table = read_table(in, {"cluster_id", "y1", "y0"});
  std::vector<PotentialClusterRecord> clusters;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    const double y1 = numeric_field(row[1], "y1", line);
    const double y0 = numeric_field(row[2], "y0", line);
    auto [it, inserted] = index.try_emplace(row[0], clusters.size());
    if (inserted) clusters.push_back({row[0], {}, {}});
    clusters[it->second].y1.push_back(y1);
    clusters[it->second].y0.push_back(y0);
  }
  return PotentialOutcomeDataset(std::move(clusters), kind);
}

PotentialOutcomeDataset load_potential_csv(const std::filesystem::path& path,
                                           std::optional<OutcomeKind> kind) {
  auto in = open_input(path);
  return parse_potential_csv(in, kind);
}

namespace {

std::string format_value(double v) {
  char buf[32];
  if (v == 0.0 || v == 1.0) return v == 0.0 ? "0" : "1";
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_observed_csv(std::ostream& out, const ObservedDataset& data) {
  out << "cluster_id,treatment,outcome\n";
  for (const auto& c : data.clusters()) {
    for (double y : c.outcomes) out << c.id << ',' << c.treatment << ',' << format_value(y) << '\n';
  }
}

void write_potential_csv(std::ostream& out, const PotentialOutcomeDataset& data) {
  out << "cluster_id,y1,y0\n";
  for (const auto& c : data.clusters()) {
    for (std::size_t i = 0; i < c.y1.size(); ++i) {
      out << c.id << ',' << format_value(c.y1[i]) << ',' << format_value(c.y0[i]) << '\n';
    }
  }
}

Measure parse_measure(std::string_view text) {
  if (text == "or" || text == "odds_ratio") return Measure::OddsRatio;
  if (text == "diff" || text == "difference") return Measure::Difference;
  throw Error(ErrorKind::Validation, "unknown measure '" + std::string(text) + "'");
}

BoundaryPolicy parse_boundary_policy(std::string_view text) {
  if (text == "error") return BoundaryPolicy::Error;
  if (text == "cc" || text == "continuity_correction") return BoundaryPolicy::ContinuityCorrection;
  throw Error(ErrorKind::Validation, "unknown boundary policy '" + std::string(text) + "'");
}

OutcomeKind parse_outcome_kind(std::string_view text) {
  if (text == "binary") return OutcomeKind::Binary;
  if (text == "continuous") return OutcomeKind::Continuous;
  throw Error(ErrorKind::Validation, "unknown outcome kind '" + std::string(text) + "'");
}

namespace {

struct ConfigValue {
  std::vector<std::string> items;  // one item unless the value is a list
  bool is_list = false;
  bool quoted = false;
  std::size_t line = 0;
};

std::string strip_comment(const std::string& line) {
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quotes = !in_quotes;
    if (line[i] == '#' && !in_quotes) return line.substr(0, i);
  }
  return line;
}

class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, ConfigValue> values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double number(const std::string& key) {
    const auto& v = scalar(key);
    const auto n = to_number(v.items[0]);
    if (!n || v.quoted) throw bad(key, v, "a number");
    return *n;
  }

  std::size_t count(const std::string& key) {
    const double n = number(key);
    if (!(n >= 0.0) || n != std::floor(n) || n > 9.0e15) throw bad(key, values_.at(key), "a whole number");
    return static_cast<std::size_t>(n);
  }

  bool boolean(const std::string& key) {
    const auto& v = scalar(key);
    if (v.items[0] == "true" && !v.quoted) return true;
    if (v.items[0] == "false" && !v.quoted) return false;
    throw bad(key, v, "true or false");
  }

  std::string text(const std::string& key) { return scalar(key).items[0]; }

  std::vector<double> numbers(const std::string& key) {
    used_.insert(key);
    const auto& v = values_.at(key);
    if (!v.is_list) throw bad(key, v, "a list");
    std::vector<double> out;
    for (const auto& item : v.items) {
      const auto n = to_number(item);
      if (!n) throw bad(key, v, "a list of numbers");
      out.push_back(*n);
    }
    return out;
  }

  void reject_unknown() const {
    for (const auto& [key, v] : values_) {
      if (!used_.count(key)) {
        throw Error(ErrorKind::Validation,
                    "line " + std::to_string(v.line) + ": unknown config key '" + key + "'");
      }
    }
  }

 private:
  const ConfigValue& scalar(const std::string& key) {
    used_.insert(key);
    const auto& v = values_.at(key);
    if (v.is_list) throw bad(key, v, "a single value");
    return v;
  }

  static Error bad(const std::string& key, const ConfigValue& v, const std::string& want) {
    return Error(ErrorKind::Validation,
                 "line " + std::to_string(v.line) + ": '" + key + "' must be " + want);
  }

  std::map<std::string, ConfigValue> values_;
  std::set<std::string> used_;
};

}  // namespace

StudyConfig parse_study_config(std::istream& in) {
  std::map<std::string, ConfigValue> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw line_error(line_no, "expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    std::string raw = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || raw.empty()) throw line_error(line_no, "expected 'key = value'");
    if (values.count(key)) throw line_error(line_no, "duplicate key '" + key + "'");
    ConfigValue v;
    v.line = line_no;
    if (raw.front() == '[') {
      if (raw.back() != ']') throw line_error(line_no, "unterminated list for '" + key + "'");
      v.is_list = true;
      const std::string inner = trim(std::string_view(raw).substr(1, raw.size() - 2));
      if (!inner.empty()) {
        for (auto& item : split_fields(inner)) {
          if (item.empty()) throw line_error(line_no, "empty list item for '" + key + "'");
          v.items.push_back(item);
        }
      }
    } else {
      v.quoted = raw.size() >= 2 && raw.front() == '"' && raw.back() == '"';
      v.items.push_back(unquote(raw));
    }
    values.emplace(key, std::move(v));
  }

  ConfigReader r(std::move(values));
  StudyConfig cfg;
  auto& d = cfg.dgp;
  if (r.has("n_clusters")) d.n_clusters = r.count("n_clusters");
  if (r.has("outcome")) d.outcome = parse_outcome_kind(r.text("outcome"));
  if (r.has("control_base")) d.control_base = r.number("control_base");
  if (r.has("random_intercept_sd")) d.random_intercept_sd = r.number("random_intercept_sd");
  if (r.has("residual_sd")) d.residual_sd = r.number("residual_sd");
  if (r.has("seed")) {
    const std::string s = r.text("seed");
    std::uint64_t seed = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error(ErrorKind::Validation, "'seed' must be a non-negative integer");
    }
    d.seed = seed;
  }
  if (r.has("informative")) d.informative = r.boolean("informative");
  if (!r.has("sizes")) throw Error(ErrorKind::Validation, "config needs 'sizes'");
  const auto sizes = r.numbers("sizes");
  std::vector<double> probs(sizes.size(), sizes.empty() ? 0.0 : 1.0 / sizes.size());
  if (r.has("size_probabilities")) probs = r.numbers("size_probabilities");
  std::vector<double> effects(sizes.size(), 0.0);
  if (r.has("effects")) effects = r.numbers("effects");
  std::optional<std::vector<double>> bases;
  if (r.has("control_base_by_size")) bases = r.numbers("control_base_by_size");
  if (probs.size() != sizes.size() || effects.size() != sizes.size() ||
      (bases && bases->size() != sizes.size())) {
    throw Error(ErrorKind::Validation, "per-size lists must all have the same length as 'sizes'");
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (!(sizes[k] >= 1.0) || sizes[k] != std::floor(sizes[k])) {
      throw Error(ErrorKind::Validation, "cluster sizes must be positive whole numbers");
    }
    SizeStratum s;
    s.size = static_cast<std::size_t>(sizes[k]);
    s.probability = probs[k];
    s.effect = effects[k];
    if (bases) s.control_base = (*bases)[k];
    d.strata.push_back(s);
  }

  auto& a = cfg.analysis;
  if (r.has("measure")) a.measure = parse_measure(r.text("measure"));
  if (r.has("boundary_policy")) a.boundary_policy = parse_boundary_policy(r.text("boundary_policy"));
  if (r.has("fg_bound")) a.fg_bound = r.number("fg_bound");
  if (r.has("quad_nodes")) a.quad_nodes = static_cast<int>(r.count("quad_nodes"));
  if (r.has("replicates")) cfg.replicates = r.count("replicates");
  r.reject_unknown();
  d.validate();
  return cfg;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_study_config(in);
}

}  // namespace crt
