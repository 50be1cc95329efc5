#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "levsq/focal_optics.hpp"
#include "levsq/params.hpp"

namespace levsq {

// Flat key = value configuration text. '#' starts a comment, blank lines
// are skipped, later assignments override earlier ones, and an
//   include <preset-or-path>
// line splices another file (built-in preset names are tried first, then
// paths relative to the including file). Keys are tracked on read so that
// anything left unconsumed can be rejected.
class ConfigMap {
 public:
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  double require_double(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key,
                            const std::vector<int>& fallback) const;

  // Throws config_error naming every key never consumed by a getter.
  void reject_unknown() const;

  const std::map<std::string, std::string>& entries() const {
    return entries_;
  }

 private:
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> consumed_;
};

// Built-in presets by name; `table1` carries the reference experiment.
const std::map<std::string, std::string>& builtin_presets();

ConfigMap parse_config_text(const std::string& text,
                            const std::string& source_name);
ConfigMap load_config(const std::string& path);

enum class SweepScale { linear, log10 };

// Everything a CLI invocation needs, assembled from a ConfigMap plus the
// command-line overrides.
struct RunConfig {
  ExperimentParams params;

  // Protocol shape.
  double freq_ratio = 0.2;
  int n_cycles = 3;
  double free_fall = 0.5e-3;
  bool gravity = false;
  int vertical_axis = axis_x;
  int max_k = 6;
  double residual_tol = 1e-6;
  ScatterModel scatter = ScatterModel::axial_dipole;
  double readout_time = 0.0;

  // Trap provenance: full focal-optics solve, or synthetic frequencies
  // (omega_z = params.long_freq, omega_perp = perp_ratio * omega_z) with
  // configured decoherence-to-frequency ratios.
  bool use_optics = true;
  double perp_ratio = 3.0;
  double gamma_z_over_omega = 0.25;
  double gamma_perp_over_omega = 4.5e-3;

  // Impulse injection (magnitude 0 disables; time < 0 means the middle of
  // the free fall).
  double impulse_dp = 0.0;
  int impulse_axis = axis_z;
  double impulse_time = -1.0;

  // Sweep grid.
  double sweep_lo = 0.0;
  double sweep_hi = 0.0;
  int sweep_points = 0;
  SweepScale sweep_scale = SweepScale::linear;
  std::vector<int> cycles_list = {1, 2, 3};

  // Execution.
  std::uint64_t seed = 0;
  std::string mode = "deterministic";
  int ensemble = 1;
  std::string out;  // empty = stdout
  int record_points = 25;
  int threads = 0;  // 0 = hardware concurrency

  static RunConfig from(const ConfigMap& cfg);
};

}  // namespace levsq
