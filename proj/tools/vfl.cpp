// Command-line driver: configure a scenario, run it, write CSV/JSON/binary
// outputs and a manifest that reproduces them.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vfl/vfl.hpp"

namespace fs = std::filesystem;
using namespace vfl;

namespace {

enum Exit { kPass = 0, kFailure = 1, kGatesFailed = 2, kConfigError = 3, kAlarm = 4 };

struct Common {
  std::string config;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned threads = 0;
  bool reproducible = false;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Splits `--section.key=value` and `--section.key value` out of the extras.
std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.find('.') == std::string::npos)
      throw ConfigError("unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("override " + a + " lacks a value");
      out.emplace_back(a.substr(2), extras[++i]);
    }
  }
  return out;
}

Scenario build_scenario(const Common& c) {
  Scenario s;
  if (!c.config.empty()) {
    s = load_scenario_file(c.config, c.overrides);
  } else {
    std::istringstream empty;
    s = load_scenario(empty, c.overrides);
  }
  if (c.seed_set) s.master_seed = c.seed;
  if (c.threads) s.threads = c.threads;
  if (c.reproducible) s.reproducible = true;
  if (!s.reproducible && !c.seed_set) s.master_seed = std::random_device{}() | (std::uint64_t{std::random_device{}()} << 32);
  validate(s);
  return s;
}

fs::path output_root(const Common& c) {
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv("VFL_OUT_DIR")) return env;
  return "vfl_out";
}

void write_manifest(OutputDir& out, const Scenario& sc, const std::vector<std::string>& command,
                    const json& seeds, const json& tolerances) {
  RunManifest m;
  m.command = command;
  m.scenario = sc;
  m.seeds = seeds;
  m.tolerances = tolerances;
  m.files = out.inventory();
  std::ofstream os(out.root() / "manifest.json", std::ios::trunc);
  os << m.to_json().dump(2) << '\n';
}

json solver_tolerances(const Scenario& sc) {
  const SpdeScheme s = sc.scheme();
  return {{"positivity_tolerance", s.positivity_tolerance},
          {"stability_constant", s.stability_constant},
          {"dealias", "2/3 rule"}};
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns an exit code; `command` is what replay reruns.

int cmd_mean_field(const Scenario& sc, OutputDir& out, const std::vector<std::string>& command) {
  MeanFieldOptions opt;
  opt.pairings = sc.test_functions();
  opt.keep_path = false;
  opt.snapshot_file = out.path("v.vflf");
  opt.snapshot_every = sc.snapshot_every;
  const auto w = NoisePathRecord::brownian(sc.master_seed, sc.w_path_id, sc.dt, sc.steps(), 1);
  w.save(out.path("w_path.vflw"));
  const auto run = run_mean_field(sc, w, opt);
  for (const auto* s : {&run.mass, &run.l2_norm_sq, &run.grid_min, &run.grid_max, &run.h4_norm_sq})
    out.write_text("monitors/" + s->observable + ".csv",
                   [&](std::ostream& os) { write_series_csv(os, {*s}); });
  const auto phis = sc.test_functions();
  for (std::size_t p = 0; p < phis.size(); ++p) {
    PairingSeries s;
    s.observable = "v[" + phis[p].name() + "]";
    s.w_path_id = sc.w_path_id;
    s.seed = sc.master_seed;
    for (std::size_t n = 0; n < run.times.size(); ++n) s.push(run.times[n], run.continuum[p].phi[n]);
    out.write_text("pairings/v_" + std::to_string(p) + ".csv",
                   [&](std::ostream& os) { write_series_csv(os, {s}); });
  }
  json summary = {{"final_mass", run.mass.back()},
                  {"l2_norm_sq", {run.l2_norm_sq.values.front(), run.l2_norm_sq.back()}},
                  {"grid_min", {run.grid_min.values.front(), run.grid_min.back()}},
                  {"grid_max", {run.grid_max.values.front(), run.grid_max.back()}},
                  {"plot", {{"x", "time"}, {"y", "monitor"}}}};
  out.write_text("summary.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
  write_manifest(out, sc, command,
                 {{"master_seed", sc.master_seed}, {"w_path_id", sc.w_path_id}},
                 solver_tolerances(sc));
  std::cout << "mean-field: " << run.times.size() - 1 << " steps, mass "
            << format_double(run.mass.back()) << ", grid range [" << format_double(run.grid_min.back())
            << ", " << format_double(run.grid_max.back()) << "]\n";
  return kPass;
}

NoisePathRecord w_record_for(const Scenario& sc, std::uint32_t ensemble,
                             const std::string& w_file) {
  if (!w_file.empty()) return NoisePathRecord::load(w_file);
  return NoisePathRecord::brownian(sc.master_seed, sc.common_path(ensemble), sc.dt, sc.steps(), 1);
}

int cmd_particles(const Scenario& sc, OutputDir& out, const std::vector<std::string>& command,
                  std::size_t n, std::uint32_t ensemble, const std::string& w_file) {
  if (n == 0) n = sc.n_list.back();
  auto w = w_record_for(sc, ensemble, w_file);
  if (sc.conditional_on_w && w.path_id != sc.w_path_id)
    throw ConfigError("conditional run: W record path id differs from run.w_path_id");
  w.save(out.path("w_path.vflw"));
  MeanFieldOptions mopt;
  mopt.pairings = sc.test_functions();
  mopt.keep_path = false;
  const auto mf = run_mean_field(sc, w, mopt);
  ParticleRunOptions opt;
  opt.log_series = true;
  opt.trajectory_file = out.path("particles.vflp");
  opt.snapshot_every = std::max<std::size_t>(sc.snapshot_every, 1);
  const auto run = run_particles(sc, n, ensemble, mf, opt);
  std::size_t idx = 0;
  for (const auto& s : run.series)
    out.write_text("series/" + std::to_string(idx++) + ".csv",
                   [&](std::ostream& os) { write_series_csv(os, {s}); });
  json names = json::array();
  for (const auto& s : run.series) names.push_back(s.observable);
  json residuals = json::array();
  for (const auto& wf : run.weak_form) {
    const auto r = weak_form_residual(wf);
    residuals.push_back(r.back());
  }
  json summary = {{"N", n},
                  {"ensemble_id", ensemble},
                  {"w_path_id", run.w_path_id},
                  {"series_files", names},
                  {"eta_T", run.eta_T},
                  {"M_T", run.m_T},
                  {"QV_T", run.qv_T},
                  {"sobolev_sq_T", run.sobolev_T},
                  {"alpha", sc.alpha_list},
                  {"weak_form_residual_T", residuals},
                  {"stream_audit", run.stream_audit},
                  {"plot", {{"x", "time"}, {"y", "pairing"}}}};
  out.write_text("summary.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
  write_manifest(out, sc, command,
                 {{"master_seed", sc.master_seed},
                  {"ensemble_id", ensemble},
                  {"w_path_id", run.w_path_id},
                  {"N", n}},
                 solver_tolerances(sc));
  std::cout << "particles: N=" << n << " ensemble=" << ensemble << " W path=" << run.w_path_id
            << "\n";
  return kPass;
}

int cmd_fluct_limit(const Scenario& sc, OutputDir& out, const std::vector<std::string>& command,
                    std::uint32_t ensemble, const std::string& w_file) {
  auto w = w_record_for(sc, ensemble, w_file);
  w.save(out.path("w_path.vflw"));
  MeanFieldOptions mopt;
  mopt.pairings = sc.test_functions();
  mopt.keep_path = true;
  const auto mf = run_mean_field(sc, w, mopt);
  FluctuationRunOptions opt;
  opt.log_series = true;
  opt.snapshot_file = out.path("eta.vflf");
  opt.snapshot_every = sc.snapshot_every;
  const auto run = run_fluctuation_limit(sc, ensemble, mf, opt);
  std::size_t idx = 0;
  for (const auto& s : run.series)
    out.write_text("series/" + std::to_string(idx++) + ".csv",
                   [&](std::ostream& os) { write_series_csv(os, {s}); });
  json names = json::array();
  for (const auto& s : run.series) names.push_back(s.observable);
  json summary = {{"ensemble_id", ensemble},
                  {"w_path_id", run.w_path_id},
                  {"series_files", names},
                  {"eta_T", run.eta_T},
                  {"clamped_cells", run.clamped_cells},
                  {"plot", {{"x", "time"}, {"y", "pairing"}}}};
  out.write_text("summary.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
  write_manifest(out, sc, command,
                 {{"master_seed", sc.master_seed},
                  {"ensemble_id", ensemble},
                  {"w_path_id", run.w_path_id}},
                 solver_tolerances(sc));
  std::cout << "fluct-limit: ensemble=" << ensemble << " W path=" << run.w_path_id << "\n";
  return kPass;
}

void print_table(const ResultTable& t) {
  for (const auto& r : t.rows) {
    if (!r.gate) continue;
    std::cout << (r.pass ? "PASS " : "FAIL ") << t.study << ' ' << r.observable
              << " value=" << format_double(r.value) << " target=" << format_double(r.target)
              << " tol=" << format_double(r.tolerance) << '\n';
  }
  for (const auto& f : t.failures) std::cout << "FAIL member " << f << '\n';
}

int cmd_study(const Scenario& sc, OutputDir& out, const std::vector<std::string>& command,
              const std::string& kind) {
  const Gates gates;
  const ResultTable t = run_study(kind, sc, gates);
  write_table_files(out, "", t);
  write_manifest(out, sc, command, t.summary.value("seeds", json::object()), gates_json(gates));
  print_table(t);
  if (t.alarm) return kAlarm;
  return t.pass() ? kPass : kGatesFailed;
}

// Aggregates every summary.json below the output root.
int cmd_report(const fs::path& root) {
  if (!fs::exists(root)) throw ConfigError("report: no output directory " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.path().filename() == "summary.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  json report = json::array();
  bool all_pass = true;
  std::ostringstream md;
  md << "| run | study | gate | value | target | pass |\n|---|---|---|---|---|---|\n";
  for (const auto& f : files) {
    std::ifstream is(f);
    json j;
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      throw FormatError("report: cannot parse " + f.string());
    }
    const std::string rel = fs::relative(f.parent_path(), root).string();
    if (!j.contains("rows")) {
      report.push_back({{"run", rel}, {"kind", "run"}});
      continue;
    }
    all_pass &= j.value("pass", false);
    for (const auto& r : j["rows"]) {
      if (!r.value("gate", false)) continue;
      md << "| " << rel << " | " << j.value("study", "") << " | " << r.value("observable", "")
         << " | " << r["value"].dump() << " | " << r["target"].dump() << " | "
         << (r.value("pass", false) ? "yes" : "no") << " |\n";
    }
    report.push_back({{"run", rel}, {"study", j.value("study", "")}, {"pass", j.value("pass", false)}});
  }
  std::ofstream(root / "report.md") << md.str();
  std::ofstream(root / "report.json") << json{{"pass", all_pass}, {"runs", report}}.dump(2) << '\n';
  std::cout << md.str();
  return all_pass ? kPass : kGatesFailed;
}

int dispatch(const std::vector<std::string>& command, const Scenario& sc, OutputDir& out);

// Reruns a manifest into a fresh directory and compares every listed file.
int cmd_replay(const fs::path& manifest_path, const Common& c) {
  std::ifstream is(manifest_path);
  if (!is) throw ConfigError("replay: cannot open " + manifest_path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception&) {
    throw ConfigError("replay: manifest is not valid JSON");
  }
  const RunManifest m = RunManifest::from_json(j);
  Scenario sc = m.scenario;
  if (c.threads) sc.threads = c.threads;
  const fs::path root = c.out_dir.empty() ? manifest_path.parent_path() / "replay" : fs::path(c.out_dir);
  OutputDir out(root);
  const int code = dispatch(m.command, sc, out);
  std::size_t mismatches = 0;
  for (const auto& f : m.files) {
    const std::string rel = f.at("path").get<std::string>();
    const fs::path p = root / rel;
    const bool same = fs::exists(p) && file_digest(p) == f.at("fnv1a").get<std::string>();
    if (!same) {
      ++mismatches;
      std::cout << "DIFF " << rel << '\n';
    }
  }
  std::cout << "replay: " << m.files.size() - mismatches << "/" << m.files.size()
            << " files identical\n";
  if (mismatches) return kGatesFailed;
  return code == kAlarm ? kAlarm : kPass;
}

int dispatch(const std::vector<std::string>& command, const Scenario& sc, OutputDir& out) {
  const std::string& name = command.at(0);
  auto arg = [&](std::size_t i, const std::string& def) {
    return i < command.size() ? command[i] : def;
  };
  if (name == "mean-field") return cmd_mean_field(sc, out, command);
  if (name == "particles")
    return cmd_particles(sc, out, command, std::stoul(arg(1, "0")),
                         static_cast<std::uint32_t>(std::stoul(arg(2, "0"))), arg(3, ""));
  if (name == "fluct-limit")
    return cmd_fluct_limit(sc, out, command, static_cast<std::uint32_t>(std::stoul(arg(1, "0"))),
                           arg(2, ""));
  if (name == "study") return cmd_study(sc, out, command, arg(1, ""));
  throw ConfigError("manifest names an unknown command '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic point-vortex fluctuation studies on the flat torus"};
  app.require_subcommand(1);
  app.allow_extras();
  Common c;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "INI scenario file");
    sub->add_option("--out-dir", c.out_dir, "output directory (default $VFL_OUT_DIR or vfl_out)");
    sub->add_option("--seed", c.seed, "master seed")->each([&](const std::string&) { c.seed_set = true; });
    sub->add_option("--threads", c.threads, "worker threads");
    sub->add_flag("--reproducible", c.reproducible, "fix seeds and bitwise outputs");
    sub->allow_extras();
  };

  auto* mean = app.add_subcommand("mean-field", "run the mean-field SPDE on one W path");
  add_common(mean);

  std::size_t n = 0;
  std::uint32_t ensemble = 0;
  std::string w_file;
  auto* part = app.add_subcommand("particles", "run one particle ensemble member with full logs");
  add_common(part);
  part->add_option("--N", n, "particle count (default: largest of particles.N)");
  part->add_option("--ensemble", ensemble, "ensemble id");
  part->add_option("--w-record", w_file, "VFLW file supplying the common noise");

  auto* fluct = app.add_subcommand("fluct-limit", "run the limit fluctuation SPDE");
  add_common(fluct);
  fluct->add_option("--ensemble", ensemble, "ensemble id");
  fluct->add_option("--w-record", w_file, "VFLW file supplying the common noise");

  std::string kind;
  auto* study = app.add_subcommand("study", "run a study and evaluate its gates");
  add_common(study);
  study->add_option("kind", kind, "rate | clt0 | conditional-m | coupling | limit-compare")
      ->required()
      ->check(CLI::IsMember({"rate", "clt0", "conditional-m", "coupling", "limit-compare"}));

  auto* report = app.add_subcommand("report", "aggregate summaries below the output directory");
  add_common(report);

  std::string manifest;
  auto* replay = app.add_subcommand("replay", "rerun a manifest and compare its files");
  add_common(replay);
  replay->add_option("manifest", manifest, "manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }

  try {
    // Unknown flags stay with the subcommand that received them.
    std::vector<std::string> extras = app.remaining();
    for (const auto* sub : app.get_subcommands()) {
      const auto more = sub->remaining();
      extras.insert(extras.end(), more.begin(), more.end());
    }
    c.overrides = parse_overrides(extras);
    if (report->parsed()) return cmd_report(output_root(c));
    if (replay->parsed()) return cmd_replay(manifest, c);

    const Scenario sc = build_scenario(c);
    OutputDir out(output_root(c));
    std::vector<std::string> command;
    if (mean->parsed()) command = {"mean-field"};
    else if (part->parsed())
      command = {"particles", std::to_string(n), std::to_string(ensemble), w_file};
    else if (fluct->parsed()) command = {"fluct-limit", std::to_string(ensemble), w_file};
    else command = {"study", kind};
    return dispatch(command, sc, out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalAlarm& e) {
    std::cerr << "numerical alarm: " << e.what() << '\n';
    return kAlarm;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
