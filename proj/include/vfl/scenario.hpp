#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "vfl/core.hpp"
#include "vfl/kernel.hpp"
#include "vfl/particles.hpp"
#include "vfl/sigma.hpp"
#include "vfl/spde.hpp"
#include "vfl/spectral.hpp"
#include "vfl/trig.hpp"

namespace vfl {

inline constexpr const char* kArtifactVersion = "1.0.0";

struct InitialMode {
  int k1 = 0;
  int k2 = 0;
  complex c;
};

// Every knob of a run. Field names mirror the config keys `section.key`.
struct Scenario {
  // [initial]
  std::string initial_preset = "default";  // default | uniform
  std::vector<InitialMode> initial_modes;  // added on top of the preset, Hermitian pairs
  // [sigma]
  std::string sigma_preset = "default";  // default | off | constant
  double sigma_amplitude = 1.0;
  // [time]
  double T = 0.25;
  double dt = 2.5e-3;
  bool milstein = false;  // common_noise = euler | milstein
  // [grid]
  int M = 128;
  // [kernel]
  KernelMode kernel_mode = KernelMode::regularized;
  int k_max = 128;
  double epsilon = 0.0;  // 0 means pi / k_max
  int table_resolution = 256;
  std::string table_file;
  DriftMethod drift_method = DriftMethod::direct;
  int pm_oversample = 2;
  // [particles]
  std::vector<std::size_t> n_list{256, 512, 1024, 2048, 4096};
  std::size_t ensembles = 100;
  bool conditional_on_w = true;
  int k_eval = 16;
  std::size_t snapshot_every = 0;  // 0 disables trajectory files
  // [stats]
  std::vector<double> alpha_list{-2.0};
  std::vector<std::string> phi_list{"cos(x1)", "cos(x2)", "cos(x1+x2)"};
  int k_stat = 32;
  double entropy_m = 2.0;
  std::size_t samples = 2000;
  std::size_t repetitions = 20;
  std::vector<double> s_grid{0.25, 0.5, 1.0, 2.0};
  // [run]
  std::uint64_t master_seed = 20240601;
  bool reproducible = true;
  std::uint32_t w_path_id = 0;
  unsigned threads = 1;

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(T / dt)); }
  double kernel_epsilon() const { return epsilon > 0.0 ? epsilon : pi / k_max; }

  SpectralGrid grid() const { return SpectralGrid(M); }

  FourierField initial_density() const {
    FourierField v = uniform_density(grid());
    if (initial_preset == "default") {
      for (int a : {-1, 1})
        for (int b : {-1, 1}) v.ref(a, b) = 0.125;
    } else if (initial_preset != "uniform") {
      throw ConfigError("initial.preset: unknown preset '" + initial_preset + "'");
    }
    for (const auto& m : initial_modes) {
      if (m.k1 == 0 && m.k2 == 0) throw ConfigError("initial.modes: k = 0 is fixed by mass");
      v.set_pair(m.k1, m.k2, v.at(m.k1, m.k2) + m.c);
    }
    return v;
  }

  DivFreeVectorField sigma() const {
    if (sigma_preset == "off" || sigma_amplitude == 0.0) return DivFreeVectorField::off();
    if (sigma_preset == "default") return DivFreeVectorField::standard(sigma_amplitude);
    if (sigma_preset == "constant") return DivFreeVectorField::constant(sigma_amplitude, 0.0);
    throw ConfigError("sigma.preset: unknown preset '" + sigma_preset + "'");
  }

  KernelSpec kernel() const {
    KernelSpec k;
    switch (kernel_mode) {
      case KernelMode::regularized:
        k = KernelSpec::regularized(kernel_epsilon());
        k.k_max = k_max;
        break;
      case KernelMode::spectral_truncated: k = KernelSpec::spectral_truncated(k_max); break;
      case KernelMode::free_space_plus_correction:
        k = KernelSpec::free_space_plus_correction(table_resolution);
        if (!table_file.empty())
          k.table = std::make_shared<const CorrectionTable>(CorrectionTable::load(table_file));
        break;
      case KernelMode::off: k = KernelSpec::off(); break;
    }
    return k;
  }

  DriftOptions drift_options() const {
    DriftOptions o;
    o.method = drift_method;
    o.pm_oversample = pm_oversample;
    return o;
  }

  SpdeScheme scheme() const {
    SpdeScheme s;
    s.dt = dt;
    s.nonlinear = kernel_mode != KernelMode::off;  // K = 0 makes the limit linear
    s.milstein = milstein;
    return s;
  }

  std::vector<TestFunction> test_functions() const {
    std::vector<TestFunction> out;
    for (const auto& p : phi_list) out.push_back(TestFunction::parse(p));
    return out;
  }

  // Path id of the common noise seen by ensemble member e.
  std::uint32_t common_path(std::uint32_t ensemble_id) const {
    return conditional_on_w ? w_path_id : ensemble_id;
  }
};

// ---------------------------------------------------------------------------
// Config text: INI sections, `key = value`, lists comma-separated, modes as
// `k1 k2 re im` groups separated by ';'.

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  is >> v;
  std::string rest;
  if (is.fail() || (is >> rest)) throw ConfigError(key + ": cannot parse '" + text + "'");
  return v;
}

template <>
inline bool parse_value<bool>(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_value<T>(key, item));
  return out;
}

// Shortest decimal text that reads back to the same double.
inline std::string fmt(double x) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    os << (i ? ", " : "");
    if constexpr (std::is_floating_point_v<T>) os << fmt(v[i]);
    else os << v[i];
  }
  return os.str();
}


}  // namespace detail

// Flat key -> value view of a scenario, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> scenario_entries(const Scenario& s) {
  using detail::fmt;
  using detail::join;
  std::string modes;
  for (const auto& m : s.initial_modes) {
    if (!modes.empty()) modes += "; ";
    modes += std::to_string(m.k1) + " " + std::to_string(m.k2) + " " + fmt(m.c.real()) + " " +
             fmt(m.c.imag());
  }
  return {
      {"initial.preset", s.initial_preset},
      {"initial.modes", modes},
      {"sigma.preset", s.sigma_preset},
      {"sigma.amplitude", fmt(s.sigma_amplitude)},
      {"time.T", fmt(s.T)},
      {"time.dt", fmt(s.dt)},
      {"time.common_noise", s.milstein ? "milstein" : "euler"},
      {"grid.M", std::to_string(s.M)},
      {"kernel.mode", to_string(s.kernel_mode)},
      {"kernel.k_max", std::to_string(s.k_max)},
      {"kernel.epsilon", fmt(s.epsilon)},
      {"kernel.table_resolution", std::to_string(s.table_resolution)},
      {"kernel.table_file", s.table_file},
      {"kernel.drift_method",
       s.drift_method == DriftMethod::direct ? "direct" : "particle_mesh"},
      {"kernel.pm_oversample", std::to_string(s.pm_oversample)},
      {"particles.N", join(s.n_list)},
      {"particles.ensembles", std::to_string(s.ensembles)},
      {"particles.conditional_on_W", s.conditional_on_w ? "true" : "false"},
      {"particles.k_eval", std::to_string(s.k_eval)},
      {"particles.snapshot_every", std::to_string(s.snapshot_every)},
      {"stats.alpha", join(s.alpha_list)},
      {"stats.phi", join(s.phi_list)},
      {"stats.K_stat", std::to_string(s.k_stat)},
      {"stats.entropy_m", fmt(s.entropy_m)},
      {"stats.samples", std::to_string(s.samples)},
      {"stats.repetitions", std::to_string(s.repetitions)},
      {"stats.s_grid", join(s.s_grid)},
      {"run.master_seed", std::to_string(s.master_seed)},
      {"run.reproducible", s.reproducible ? "true" : "false"},
      {"run.w_path_id", std::to_string(s.w_path_id)},
      {"run.threads", std::to_string(s.threads)},
  };
}

inline void apply_setting(Scenario& s, const std::string& key, const std::string& value) {
  using detail::parse_list;
  using detail::parse_value;
  if (key == "initial.preset") s.initial_preset = value;
  else if (key == "initial.modes") {
    s.initial_modes.clear();
    for (const auto& group : detail::split(value, ';')) {
      std::istringstream is(group);
      InitialMode m;
      double re = 0, im = 0;
      if (!(is >> m.k1 >> m.k2 >> re >> im)) throw ConfigError("initial.modes: bad group");
      m.c = complex(re, im);
      s.initial_modes.push_back(m);
    }
  } else if (key == "sigma.preset") s.sigma_preset = value;
  else if (key == "sigma.amplitude") s.sigma_amplitude = parse_value<double>(key, value);
  else if (key == "time.T") s.T = parse_value<double>(key, value);
  else if (key == "time.dt") s.dt = parse_value<double>(key, value);
  else if (key == "time.common_noise") {
    if (value != "euler" && value != "milstein")
      throw ConfigError("time.common_noise: expected euler or milstein");
    s.milstein = value == "milstein";
  }
  else if (key == "grid.M") s.M = parse_value<int>(key, value);
  else if (key == "kernel.mode") {
    try {
      s.kernel_mode = parse_kernel_mode(value);
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "kernel.k_max") s.k_max = parse_value<int>(key, value);
  else if (key == "kernel.epsilon") s.epsilon = parse_value<double>(key, value);
  else if (key == "kernel.table_resolution") s.table_resolution = parse_value<int>(key, value);
  else if (key == "kernel.table_file") s.table_file = value;
  else if (key == "kernel.drift_method") {
    if (value == "direct") s.drift_method = DriftMethod::direct;
    else if (value == "particle_mesh") s.drift_method = DriftMethod::particle_mesh;
    else throw ConfigError("kernel.drift_method: expected direct or particle_mesh");
  } else if (key == "kernel.pm_oversample") s.pm_oversample = parse_value<int>(key, value);
  else if (key == "particles.N") s.n_list = parse_list<std::size_t>(key, value);
  else if (key == "particles.ensembles") s.ensembles = parse_value<std::size_t>(key, value);
  else if (key == "particles.conditional_on_W") s.conditional_on_w = parse_value<bool>(key, value);
  else if (key == "particles.k_eval") s.k_eval = parse_value<int>(key, value);
  else if (key == "particles.snapshot_every")
    s.snapshot_every = parse_value<std::size_t>(key, value);
  else if (key == "stats.alpha") s.alpha_list = parse_list<double>(key, value);
  else if (key == "stats.phi") s.phi_list = detail::split(value, ',');
  else if (key == "stats.K_stat") s.k_stat = parse_value<int>(key, value);
  else if (key == "stats.entropy_m") s.entropy_m = parse_value<double>(key, value);
  else if (key == "stats.samples") s.samples = parse_value<std::size_t>(key, value);
  else if (key == "stats.repetitions") s.repetitions = parse_value<std::size_t>(key, value);
  else if (key == "stats.s_grid") s.s_grid = parse_list<double>(key, value);
  else if (key == "run.master_seed") s.master_seed = parse_value<std::uint64_t>(key, value);
  else if (key == "run.reproducible") s.reproducible = parse_value<bool>(key, value);
  else if (key == "run.w_path_id") s.w_path_id = parse_value<std::uint32_t>(key, value);
  else if (key == "run.threads") s.threads = parse_value<unsigned>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

// Rejects scenarios that violate the run invariants.
inline void validate(const Scenario& s) {
  if (!(s.T > 0.0) || !(s.dt > 0.0)) throw ConfigError("time: T and dt must be positive");
  if (std::abs(s.steps() * s.dt - s.T) > 1e-9 * s.T)
    throw ConfigError("time: T must be a multiple of dt");
  if (s.M < 8 || s.M % 2) throw ConfigError("grid.M must be even and >= 8");
  if (s.k_max < 1) throw ConfigError("kernel.k_max must be positive");
  if (s.pm_oversample < 1) throw ConfigError("kernel.pm_oversample must be positive");
  if (s.n_list.empty()) throw ConfigError("particles.N must not be empty");
  for (std::size_t i = 0; i < s.n_list.size(); ++i) {
    if (s.n_list[i] < 2) throw ConfigError("particles.N entries must be >= 2");
    if (i && s.n_list[i] <= s.n_list[i - 1])
      throw ConfigError("particles.N must be strictly increasing");
  }
  if (s.ensembles < 1) throw ConfigError("particles.ensembles must be positive");
  if (s.k_stat < 1 || s.k_stat > s.M / 2 - 1) throw ConfigError("stats.K_stat out of range");
  if (!(s.entropy_m > 1.0)) throw ConfigError("stats.entropy_m must exceed 1");
  if (s.threads < 1) throw ConfigError("run.threads must be positive");
  try {
    for (const auto& p : s.phi_list) TestFunction::parse(p);
    const auto sigma = s.sigma();
    check_stability(s.scheme(), sigma, s.M);
    const auto v0 = s.initial_density();
    if (v0.hermitian_defect() > 1e-14) throw ConfigError("initial density is not real");
    const auto [lo, hi] = grid_min_max(to_grid(v0));
    if (!(lo > 0.0)) throw ConfigError("initial density must be strictly positive on the grid");
    (void)hi;
    s.kernel();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

// Reads INI text; `overrides` are applied afterwards in order.
inline Scenario load_scenario(std::istream& is,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  Scenario s;
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) apply_setting(s, section + "." + key, value.data());
  }
  for (const auto& [k, v] : overrides) apply_setting(s, k, v);
  return s;
}

inline Scenario load_scenario_file(const std::string& path,
                                   const std::vector<std::pair<std::string, std::string>>& ov) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  return load_scenario(is, ov);
}

inline std::string to_config_text(const Scenario& s) {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, value] : scenario_entries(s)) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << value << "\n";
  }
  return os.str();
}

// FNV-1a, used only as a stable fingerprint.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

// Hash of the canonical config text minus run.threads, which never changes results.
inline std::string scenario_hash(const Scenario& s) {
  Scenario c = s;
  c.threads = 1;
  return hex64(fnv1a(to_config_text(c)));
}

}  // namespace vfl
