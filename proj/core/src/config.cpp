#include "levsq/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "levsq/constants.hpp"
#include "levsq/errors.hpp"

namespace levsq {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(k[0])) && k[0] != '_')
    return false;
  for (char c : k) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) {
    throw config_error("config key '" + key + "': cannot parse '" + text +
                       "' as a number");
  }
  return v;
}

void parse_into(ConfigMap& out, const std::string& text,
                const std::string& source, int depth);

void handle_include(ConfigMap& out, const std::string& target,
                    const std::string& source, int depth) {
  if (depth > 8) {
    throw config_error("config include depth limit exceeded at '" + source +
                       "' (include cycle?)");
  }
  const auto& presets = builtin_presets();
  const auto preset = presets.find(target);
  if (preset != presets.end()) {
    parse_into(out, preset->second, "<preset:" + target + ">", depth + 1);
    return;
  }
  namespace fs = std::filesystem;
  fs::path p(target);
  if (p.is_relative() && !source.empty() && source.front() != '<') {
    p = fs::path(source).parent_path() / p;
  }
  std::ifstream in(p);
  if (!in) {
    throw config_error("config include '" + target +
                       "' is neither a built-in preset nor a readable file "
                       "(resolved to " +
                       p.string() + ")");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  parse_into(out, buf.str(), p.string(), depth + 1);
}

void parse_into(ConfigMap& out, const std::string& text,
                const std::string& source, int depth) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      std::istringstream words(line);
      std::string head, rest;
      words >> head;
      std::getline(words, rest);
      rest = trim(rest);
      if (head == "include" && !rest.empty()) {
        handle_include(out, rest, source, depth);
        continue;
      }
      std::ostringstream msg;
      msg << source << ":" << lineno
          << ": expected 'key = value' or 'include <name>', got '" << line
          << "'";
      throw config_error(msg.str());
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key)) {
      std::ostringstream msg;
      msg << source << ":" << lineno << ": bad key '" << key << "'";
      throw config_error(msg.str());
    }
    if (value.empty()) {
      std::ostringstream msg;
      msg << source << ":" << lineno << ": key '" << key
          << "' has an empty value";
      throw config_error(msg.str());
    }
    out.set(key, value);
  }
}

int parse_axis(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "x" || t == "0") return axis_x;
  if (t == "y" || t == "1") return axis_y;
  if (t == "z" || t == "2") return axis_z;
  throw config_error("config key '" + key + "': expected an axis (x, y, z), got '" +
                     text + "'");
}

}  // namespace

void ConfigMap::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

bool ConfigMap::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_.insert(key);
  return parse_double(key, it->second);
}

double ConfigMap::require_double(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end())
    throw config_error("missing required config key '" + key + "'");
  consumed_.insert(key);
  return parse_double(key, it->second);
}

int ConfigMap::get_int(const std::string& key, int fallback) const {
  const double v = get_double(key, static_cast<double>(fallback));
  const int i = static_cast<int>(std::llround(v));
  if (std::abs(v - i) > 1e-9) {
    throw config_error("config key '" + key + "': expected an integer");
  }
  return i;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_.insert(key);
  const std::string t = trim(it->second);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw config_error("config key '" + key + "': expected a boolean, got '" +
                     it->second + "'");
}

std::string ConfigMap::get_string(const std::string& key,
                                  const std::string& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_.insert(key);
  return trim(it->second);
}

std::vector<double> ConfigMap::get_doubles(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return {};
  consumed_.insert(key);
  std::string t = it->second;
  for (char& c : t) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(t);
  std::vector<double> out;
  std::string word;
  while (in >> word) out.push_back(parse_double(key, word));
  return out;
}

std::vector<int> ConfigMap::get_ints(const std::string& key,
                                     const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (double v : get_doubles(key)) {
    const int i = static_cast<int>(std::llround(v));
    if (std::abs(v - i) > 1e-9) {
      throw config_error("config key '" + key + "': expected integers");
    }
    out.push_back(i);
  }
  return out;
}

void ConfigMap::reject_unknown() const {
  std::vector<std::string> leftover;
  for (const auto& [key, value] : entries_) {
    if (!consumed_.count(key)) leftover.push_back(key);
  }
  if (leftover.empty()) return;
  std::ostringstream msg;
  msg << "unknown config key" << (leftover.size() > 1 ? "s" : "") << ":";
  for (const auto& k : leftover) msg << " '" << k << "'";
  throw config_error(msg.str());
}

ConfigMap parse_config_text(const std::string& text,
                            const std::string& source_name) {
  ConfigMap out;
  parse_into(out, text, source_name, 0);
  return out;
}

ConfigMap load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  ConfigMap out;
  parse_into(out, buf.str(), path, 0);
  return out;
}

RunConfig RunConfig::from(const ConfigMap& cfg) {
  RunConfig rc;
  ExperimentParams& p = rc.params;

  p.sphere_radius = cfg.get_double("sphere_radius", p.sphere_radius);
  p.wavelength = cfg.get_double("wavelength", p.wavelength);
  if (cfg.has("long_freq") && cfg.has("long_freq_hz")) {
    throw config_error(
        "set either long_freq (rad/s) or long_freq_hz (Hz), not both");
  }
  if (cfg.has("long_freq_hz")) {
    p.long_freq = 2.0 * pi * cfg.require_double("long_freq_hz");
  } else {
    p.long_freq = cfg.get_double("long_freq", p.long_freq);
  }
  p.density = cfg.get_double("density", p.density);
  p.dielectric_const = {cfg.get_double("dielectric_re", p.dielectric_const.real()),
                        cfg.get_double("dielectric_im", p.dielectric_const.imag())};
  p.bb_absorption = cfg.get_double("bb_absorption", p.bb_absorption);
  p.gas_pressure = cfg.get_double("gas_pressure", p.gas_pressure);
  p.gas_temperature = cfg.get_double("gas_temperature", p.gas_temperature);
  p.gas_molecule_mass =
      cfg.get_double("gas_molecule_mass", p.gas_molecule_mass);
  p.internal_temperature =
      cfg.get_double("internal_temperature", p.internal_temperature);
  p.numerical_aperture =
      cfg.get_double("numerical_aperture", p.numerical_aperture);
  p.laser_power = cfg.get_double("laser_power", p.laser_power);
  p.filling_factor = cfg.get_double("filling_factor", p.filling_factor);
  p.solve_power = cfg.get_bool("solve_power", p.solve_power);

  const std::vector<double> eta = cfg.get_doubles("measurement_efficiency");
  if (eta.size() == 1) {
    p.measurement_efficiency = {eta[0], eta[0], eta[0]};
  } else if (eta.size() == 3) {
    p.measurement_efficiency = {eta[0], eta[1], eta[2]};
  } else if (!eta.empty()) {
    throw config_error(
        "measurement_efficiency takes one value or three per-axis values");
  }
  const char* eta_keys[3] = {"measurement_efficiency_x",
                             "measurement_efficiency_y",
                             "measurement_efficiency_z"};
  for (int i = 0; i < 3; ++i) {
    p.measurement_efficiency[i] =
        cfg.get_double(eta_keys[i], p.measurement_efficiency[i]);
  }

  rc.freq_ratio = cfg.get_double("freq_ratio", rc.freq_ratio);
  rc.n_cycles = cfg.get_int("n_cycles", rc.n_cycles);
  rc.free_fall = cfg.get_double("free_fall", rc.free_fall);
  rc.gravity = cfg.get_bool("gravity", rc.gravity);
  if (cfg.has("vertical_axis")) {
    rc.vertical_axis =
        parse_axis("vertical_axis", cfg.get_string("vertical_axis", "x"));
  }
  rc.max_k = cfg.get_int("max_k", rc.max_k);
  rc.residual_tol = cfg.get_double("residual_tol", rc.residual_tol);
  const std::string pattern =
      cfg.get_string("scatter_model", "axial_dipole");
  if (pattern == "axial_dipole") {
    rc.scatter = ScatterModel::axial_dipole;
  } else if (pattern == "circular_dipole") {
    rc.scatter = ScatterModel::circular_dipole;
  } else {
    throw config_error(
        "scatter_model must be axial_dipole or circular_dipole, got '" +
        pattern + "'");
  }
  rc.readout_time = cfg.get_double("readout_time", rc.readout_time);

  rc.use_optics = cfg.get_bool("use_optics", rc.use_optics);
  rc.perp_ratio = cfg.get_double("perp_ratio", rc.perp_ratio);
  rc.gamma_z_over_omega =
      cfg.get_double("gamma_z_over_omega", rc.gamma_z_over_omega);
  rc.gamma_perp_over_omega =
      cfg.get_double("gamma_perp_over_omega", rc.gamma_perp_over_omega);

  rc.impulse_dp = cfg.get_double("impulse_dp", rc.impulse_dp);
  if (cfg.has("impulse_axis")) {
    rc.impulse_axis =
        parse_axis("impulse_axis", cfg.get_string("impulse_axis", "z"));
  }
  rc.impulse_time = cfg.get_double("impulse_time", rc.impulse_time);

  rc.sweep_lo = cfg.get_double("sweep_lo", rc.sweep_lo);
  rc.sweep_hi = cfg.get_double("sweep_hi", rc.sweep_hi);
  rc.sweep_points = cfg.get_int("sweep_points", rc.sweep_points);
  const std::string scale = cfg.get_string("sweep_scale", "linear");
  if (scale == "linear") {
    rc.sweep_scale = SweepScale::linear;
  } else if (scale == "log") {
    rc.sweep_scale = SweepScale::log10;
  } else {
    throw config_error("sweep_scale must be linear or log, got '" + scale +
                       "'");
  }
  rc.cycles_list = cfg.get_ints("cycles_list", rc.cycles_list);

  const double seed = cfg.get_double("seed", 0.0);
  if (seed < 0) throw config_error("seed must be non-negative");
  rc.seed = static_cast<std::uint64_t>(seed);
  rc.mode = cfg.get_string("mode", rc.mode);
  if (rc.mode != "deterministic" && rc.mode != "stochastic") {
    throw config_error("mode must be deterministic or stochastic, got '" +
                       rc.mode + "'");
  }
  rc.ensemble = cfg.get_int("ensemble", rc.ensemble);
  if (rc.ensemble < 1) throw config_error("ensemble must be >= 1");
  rc.out = cfg.get_string("out", rc.out);
  rc.record_points = cfg.get_int("record_points", rc.record_points);
  if (rc.record_points < 2) throw config_error("record_points must be >= 2");
  rc.threads = cfg.get_int("threads", rc.threads);

  cfg.reject_unknown();
  return rc;
}

}  // namespace levsq
