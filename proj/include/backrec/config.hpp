#pragma once

#include "backrec/experiment.hpp"
#include "backrec/field.hpp"
#include "backrec/grid.hpp"
#include "backrec/types.hpp"
#include "backrec/version.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace backrec {

// Sectioned key-value run configuration.  Sections mirror the run stages:
//
//   [field]    family = constant | autonomous | lipschitz_t | loglip_t
//   [grid]     dim, points, side
//   [mesh]     horizon, steps, scheme = be | cn
//   [problem]  delta, seed, u0 = sin | mix | file:PATH, tolerances
//   [sweep]    deltas, seeds, t_star
//   [output]   dir, trajectory = values | norms
//
// Unknown sections or keys are rejected with the offending line.
struct RunConfig {
  struct Field {
    std::string family = "constant";
    double value = 1.0;       // constant
    double base = 1.0;        // autonomous
    double amp = 0.5;         // autonomous
    double gamma = 0.5;       // lipschitz_t
    double beta = 0.1;        // loglip_t
    std::optional<double> t0;  // loglip_t; defaults to horizon / 2
  } field;
  struct Grid {
    int dim = 1;
    int points = 128;
    double side = 6.283185307179586;
  } grid;
  struct Mesh {
    double horizon = 1.0;
    int steps = 128;
    std::string scheme = "be";
  } mesh;
  struct Problem {
    double delta = 1e-3;
    std::uint64_t seed = 42;
    std::string u0 = "mix";
    int u0_mode = 1;
    double u0_amplitude = 1.0;
    double u0_decay = 2.0;
    int u0_modes = 16;
    std::optional<double> E;  // a-priori bound; unset means h1_norm(u0_true)
    double inner_tolerance = 1e-12;
    double outer_tolerance = 1e-10;
    double alpha_floor = 1e-14;
  } problem;
  struct Sweep {
    std::vector<double> deltas = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
    int seeds = 3;
    std::optional<double> t_star;  // defaults to horizon / 4
  } sweep;
  struct Output {
    std::string dir = ".";
    std::string trajectory = "values";
  } output;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& value,
                           int line) {
  double out = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last)
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                      "' expects a number, got '" + value + "'");
  return out;
}

inline long long parse_int(const std::string& key, const std::string& value,
                           int line) {
  long long out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                      "' expects an integer, got '" + value + "'");
  return out;
}

inline std::vector<double> parse_double_list(const std::string& key,
                                             const std::string& value,
                                             int line) {
  std::vector<double> out;
  std::istringstream is(value);
  std::string item;
  while (std::getline(is, item, ','))
    out.push_back(parse_double(key, trim(item), line));
  if (out.empty())
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                      "' expects a comma-separated list");
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace detail

inline RunConfig parse_config(std::istream& is) {
  RunConfig cfg;
  std::string raw;
  std::string section;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) +
                          ": malformed section header '" + line + "'");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "field" && section != "grid" && section != "mesh" &&
          section != "problem" && section != "sweep" && section != "output")
        throw ConfigError("line " + std::to_string(lineno) +
                          ": unknown section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key +
                        "' appears before any [section]");

    auto unknown = [&]() -> ConfigError {
      return ConfigError("line " + std::to_string(lineno) +
                         ": unknown key '" + key + "' in [" + section + "]");
    };
    if (section == "field") {
      if (key == "family") cfg.field.family = value;
      else if (key == "value") cfg.field.value = detail::parse_double(key, value, lineno);
      else if (key == "base") cfg.field.base = detail::parse_double(key, value, lineno);
      else if (key == "amp") cfg.field.amp = detail::parse_double(key, value, lineno);
      else if (key == "gamma") cfg.field.gamma = detail::parse_double(key, value, lineno);
      else if (key == "beta") cfg.field.beta = detail::parse_double(key, value, lineno);
      else if (key == "t0") cfg.field.t0 = detail::parse_double(key, value, lineno);
      else throw unknown();
    } else if (section == "grid") {
      if (key == "dim") cfg.grid.dim = static_cast<int>(detail::parse_int(key, value, lineno));
      else if (key == "points") cfg.grid.points = static_cast<int>(detail::parse_int(key, value, lineno));
      else if (key == "side") cfg.grid.side = detail::parse_double(key, value, lineno);
      else throw unknown();
    } else if (section == "mesh") {
      if (key == "horizon") cfg.mesh.horizon = detail::parse_double(key, value, lineno);
      else if (key == "steps") cfg.mesh.steps = static_cast<int>(detail::parse_int(key, value, lineno));
      else if (key == "scheme") cfg.mesh.scheme = value;
      else throw unknown();
    } else if (section == "problem") {
      if (key == "delta") cfg.problem.delta = detail::parse_double(key, value, lineno);
      else if (key == "seed") cfg.problem.seed = static_cast<std::uint64_t>(detail::parse_int(key, value, lineno));
      else if (key == "u0") cfg.problem.u0 = value;
      else if (key == "u0_mode") cfg.problem.u0_mode = static_cast<int>(detail::parse_int(key, value, lineno));
      else if (key == "u0_amplitude") cfg.problem.u0_amplitude = detail::parse_double(key, value, lineno);
      else if (key == "u0_decay") cfg.problem.u0_decay = detail::parse_double(key, value, lineno);
      else if (key == "u0_modes") cfg.problem.u0_modes = static_cast<int>(detail::parse_int(key, value, lineno));
      else if (key == "E") {
        if (value != "auto") cfg.problem.E = detail::parse_double(key, value, lineno);
      }
      else if (key == "inner_tolerance") cfg.problem.inner_tolerance = detail::parse_double(key, value, lineno);
      else if (key == "outer_tolerance") cfg.problem.outer_tolerance = detail::parse_double(key, value, lineno);
      else if (key == "alpha_floor") cfg.problem.alpha_floor = detail::parse_double(key, value, lineno);
      else throw unknown();
    } else if (section == "sweep") {
      if (key == "deltas") cfg.sweep.deltas = detail::parse_double_list(key, value, lineno);
      else if (key == "seeds") cfg.sweep.seeds = static_cast<int>(detail::parse_int(key, value, lineno));
      else if (key == "t_star") cfg.sweep.t_star = detail::parse_double(key, value, lineno);
      else throw unknown();
    } else if (section == "output") {
      if (key == "dir") cfg.output.dir = value;
      else if (key == "trajectory") cfg.output.trajectory = value;
      else throw unknown();
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(is);
}

// ---------------------------------------------------------------------------
// Builders from the resolved configuration.

inline Scheme make_scheme(const RunConfig& cfg) {
  if (cfg.mesh.scheme == "be") return Scheme::backward_euler;
  if (cfg.mesh.scheme == "cn") return Scheme::crank_nicolson;
  throw ConfigError("key 'scheme' must be 'be' or 'cn', got '" +
                    cfg.mesh.scheme + "'");
}

inline CoefficientField<double> make_field(const RunConfig& cfg) {
  BuiltinParams<double> p;
  p.value = cfg.field.value;
  p.base = cfg.field.base;
  p.amplitude = cfg.field.amp;
  p.gamma = cfg.field.gamma;
  p.beta = cfg.field.beta;
  p.t0 = cfg.field.t0;
  BuiltinKind kind;
  if (cfg.field.family == "constant") kind = BuiltinKind::constant;
  else if (cfg.field.family == "autonomous") kind = BuiltinKind::autonomous;
  else if (cfg.field.family == "lipschitz_t") kind = BuiltinKind::lipschitz_t;
  else if (cfg.field.family == "loglip_t") kind = BuiltinKind::loglip_t;
  else
    throw ConfigError("key 'family' names no built-in field: '" +
                      cfg.field.family + "'");
  try {
    return builtin(kind, p, cfg.grid.dim, cfg.mesh.horizon, cfg.grid.side);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[field] parameters invalid: ") + e.what());
  }
}

inline PeriodicGrid<double> make_grid(const RunConfig& cfg) {
  try {
    return PeriodicGrid<double>(cfg.grid.dim, cfg.grid.points, cfg.grid.side);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[grid] parameters invalid: ") + e.what());
  }
}

inline TimeMesh<double> make_mesh(const RunConfig& cfg) {
  try {
    return TimeMesh<double>(0.0, cfg.mesh.horizon, cfg.mesh.steps);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[mesh] parameters invalid: ") + e.what());
  }
}

inline StateVector<double> make_initial_state(const RunConfig& cfg,
                                              const PeriodicGrid<double>& g) {
  const auto& p = cfg.problem;
  if (p.u0 == "sin") return sinusoid_state(g, p.u0_mode, p.u0_amplitude);
  if (p.u0 == "mix")
    return mixed_mode_state(g, p.u0_amplitude, p.u0_decay, p.u0_modes);
  if (p.u0.rfind("file:", 0) == 0) {
    const std::string path = p.u0.substr(5);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("key 'u0' names an unreadable file: " + path);
    StateVector<double> s = path.size() > 4 && path.substr(path.size() - 4) == ".csv"
                                ? load_csv<double>(is)
                                : load_binary<double>(is);
    if (!(s.grid == g))
      throw ConfigError("key 'u0': state file grid does not match [grid]");
    return s;
  }
  throw ConfigError("key 'u0' must be 'sin', 'mix' or 'file:PATH', got '" +
                    p.u0 + "'");
}

inline ManufacturedCase<double> make_case(const RunConfig& cfg) {
  ManufacturedCase<double> c{make_field(cfg), make_grid(cfg), make_mesh(cfg),
                             StateVector<double>{}, make_scheme(cfg),
                             cfg.problem.inner_tolerance};
  c.u0_true = make_initial_state(cfg, c.grid);
  return c;
}

// Resolved-config echo for report provenance.
inline nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["field"] = {{"family", cfg.field.family}, {"value", cfg.field.value},
                {"base", cfg.field.base},     {"amp", cfg.field.amp},
                {"gamma", cfg.field.gamma},   {"beta", cfg.field.beta}};
  if (cfg.field.t0) j["field"]["t0"] = *cfg.field.t0;
  j["grid"] = {{"dim", cfg.grid.dim},
               {"points", cfg.grid.points},
               {"side", cfg.grid.side}};
  j["mesh"] = {{"horizon", cfg.mesh.horizon},
               {"steps", cfg.mesh.steps},
               {"scheme", cfg.mesh.scheme}};
  j["problem"] = {{"delta", cfg.problem.delta},
                  {"seed", cfg.problem.seed},
                  {"u0", cfg.problem.u0},
                  {"u0_mode", cfg.problem.u0_mode},
                  {"u0_amplitude", cfg.problem.u0_amplitude},
                  {"u0_decay", cfg.problem.u0_decay},
                  {"u0_modes", cfg.problem.u0_modes},
                  {"inner_tolerance", cfg.problem.inner_tolerance},
                  {"outer_tolerance", cfg.problem.outer_tolerance},
                  {"alpha_floor", cfg.problem.alpha_floor}};
  if (cfg.problem.E) j["problem"]["E"] = *cfg.problem.E;
  j["sweep"] = {{"deltas", cfg.sweep.deltas}, {"seeds", cfg.sweep.seeds}};
  if (cfg.sweep.t_star) j["sweep"]["t_star"] = *cfg.sweep.t_star;
  j["output"] = {{"dir", cfg.output.dir},
                 {"trajectory", cfg.output.trajectory}};
  return j;
}

/// Flattened "section.key=value" lines for CSV provenance headers.
inline std::vector<std::string> provenance_lines(const RunConfig& cfg) {
  std::vector<std::string> lines;
  lines.push_back(std::string("version=") + kVersion);
  const nlohmann::json j = to_json(cfg);
  for (const auto& [section, body] : j.items())
    for (const auto& [key, value] : body.items())
      lines.push_back(section + "." + key + "=" +
                      (value.is_string() ? value.get<std::string>()
                                         : value.dump()));
  return lines;
}

}  // namespace backrec
