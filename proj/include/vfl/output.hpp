#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vfl/core.hpp"
#include "vfl/scenario.hpp"
#include "vfl/stats.hpp"

namespace vfl {

using json = nlohmann::ordered_json;

// Shortest text that round-trips the double; NaN prints as "nan".
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return detail::fmt(x);
}

inline json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

// ---------------------------------------------------------------------------
// Result tables.

struct ResultRow {
  std::string study;
  std::string observable;
  std::size_t n = 0;
  std::size_t samples = 0;
  double value = std::nan("");
  double se = std::nan("");
  double target = std::nan("");
  double tolerance = std::nan("");
  bool gate = false;  // acceptance gate rows decide the exit status
  bool pass = true;
  std::string test;
};

struct ResultTable {
  std::string study;
  std::vector<ResultRow> rows;
  json summary = json::object();
  std::map<std::string, std::vector<PairingSeries>> series;  // csv stem -> series
  std::vector<std::string> failures;                         // member run errors
  bool alarm = false;                                        // a member hit NumericalAlarm

  ResultRow& add(ResultRow r) {
    r.study = study;
    rows.push_back(std::move(r));
    return rows.back();
  }
  bool pass() const {
    if (!failures.empty()) return false;
    for (const auto& r : rows)
      if (r.gate && !r.pass) return false;
    return true;
  }
  const ResultRow& row(const std::string& observable) const {
    for (const auto& r : rows)
      if (r.observable == observable) return r;
    throw InvalidInput("ResultTable: no row '" + observable + "'");
  }
};

inline void write_result_csv(std::ostream& os, const ResultTable& t) {
  os << "study,observable,N,samples,value,se,target,tolerance,gate,pass,test\n";
  for (const auto& r : t.rows) {
    os << r.study << ',' << r.observable << ',' << r.n << ',' << r.samples << ','
       << format_double(r.value) << ',' << format_double(r.se) << ','
       << format_double(r.target) << ',' << format_double(r.tolerance) << ','
       << (r.gate ? 1 : 0) << ',' << (r.pass ? 1 : 0) << ",\"" << r.test << "\"\n";
  }
}

// Fixed schema shared by every observable.
inline void write_series_csv(std::ostream& os, const std::vector<PairingSeries>& series) {
  os << "time,value,N,ensemble_id,w_path_id,seed\n";
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.times.size(); ++i)
      os << format_double(s.times[i]) << ',' << format_double(s.values[i]) << ',' << s.n << ','
         << s.ensemble_id << ',' << s.w_path_id << ',' << s.seed << '\n';
}

inline json table_json(const ResultTable& t) {
  json j;
  j["study"] = t.study;
  j["pass"] = t.pass();
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"observable", r.observable},
                    {"N", r.n},
                    {"samples", r.samples},
                    {"value", json_number(r.value)},
                    {"se", json_number(r.se)},
                    {"target", json_number(r.target)},
                    {"tolerance", json_number(r.tolerance)},
                    {"gate", r.gate},
                    {"pass", r.pass},
                    {"test", r.test}});
  }
  j["rows"] = rows;
  j["summary"] = t.summary;
  j["failures"] = t.failures;
  return j;
}

// ---------------------------------------------------------------------------
// Files and manifests.

inline std::string file_digest(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw FormatError("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return hex64(fnv1a(ss.str()));
}

// Collects written files relative to an output root.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  const std::filesystem::path& root() const { return root_; }

  std::string path(const std::string& rel) {
    const auto p = root_ / rel;
    std::filesystem::create_directories(p.parent_path());
    files_.push_back(rel);
    return p.string();
  }

  template <class Fn>
  void write_text(const std::string& rel, Fn&& fn) {
    std::ofstream os(path(rel), std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write " + rel);
    fn(os);
  }

  json inventory() const {
    json inv = json::array();
    for (const auto& f : files_) inv.push_back({{"path", f}, {"fnv1a", file_digest(root_ / f)}});
    return inv;
  }

 private:
  std::filesystem::path root_;
  std::vector<std::string> files_;
};

inline void write_table_files(OutputDir& out, const std::string& prefix, const ResultTable& t) {
  out.write_text(prefix + "results.csv", [&](std::ostream& os) { write_result_csv(os, t); });
  for (const auto& [stem, series] : t.series)
    out.write_text(prefix + stem + ".csv", [&](std::ostream& os) { write_series_csv(os, series); });
  out.write_text(prefix + "summary.json",
                 [&](std::ostream& os) { os << table_json(t).dump(2) << '\n'; });
}

struct RunManifest {
  std::vector<std::string> command;
  Scenario scenario;
  json seeds = json::object();
  json tolerances = json::object();
  json files = json::array();

  json to_json() const {
    json j;
    j["artifact_version"] = kArtifactVersion;
    j["scenario_hash"] = scenario_hash(scenario);
    j["command"] = command;
    j["config"] = to_config_text(scenario);
    j["kernel"] = scenario.kernel().describe();
    j["conventions"] = "c_k = int f exp(-i k.x) dx; H^alpha weights (1+|k|^2)^alpha";
    j["tolerances"] = tolerances;
    j["seeds"] = seeds;
    j["files"] = files;
    return j;
  }

  static RunManifest from_json(const json& j) {
    RunManifest m;
    if (!j.contains("config") || !j.contains("command"))
      throw ConfigError("manifest lacks config or command");
    if (j.value("artifact_version", "") != kArtifactVersion)
      throw ConfigError("manifest artifact version mismatch");
    std::istringstream is(j["config"].get<std::string>());
    m.scenario = load_scenario(is, {});
    if (scenario_hash(m.scenario) != j.value("scenario_hash", ""))
      throw ConfigError("manifest config does not match its hash");
    m.command = j["command"].get<std::vector<std::string>>();
    m.seeds = j.value("seeds", json::object());
    m.tolerances = j.value("tolerances", json::object());
    m.files = j.value("files", json::array());
    return m;
  }
};

}  // namespace vfl
