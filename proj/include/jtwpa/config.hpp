#pragma once

// Run configuration: a single JSON document describing the device, the
// drive, the solver selection and the sweep grid.

#include <cmath>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jtwpa/analysis.hpp"
#include "jtwpa/device.hpp"
#include "jtwpa/errors.hpp"
#include "jtwpa/hbal.hpp"
#include "jtwpa/transient.hpp"

namespace jtwpa {

enum class SolverSelector { transient, harmonic_balance, cme, compare };

inline std::string_view to_string(SolverSelector s) {
  switch (s) {
    case SolverSelector::transient: return "transient";
    case SolverSelector::harmonic_balance: return "harmonic-balance";
    case SolverSelector::cme: return "cme";
    case SolverSelector::compare: return "compare";
  }
  return "transient";
}

inline SolverSelector solver_selector_from_string(std::string_view s) {
  if (s == "transient") return SolverSelector::transient;
  if (s == "harmonic-balance") return SolverSelector::harmonic_balance;
  if (s == "cme") return SolverSelector::cme;
  if (s == "compare") return SolverSelector::compare;
  throw ConfigurationError("solver: expected one of transient, harmonic-balance, cme, compare; got '" +
                           std::string(s) + "'");
}

struct DriveConfig {
  double pump_frequency = 4.415e9;
  double pump_power_dbm = -79.0;
  double signal_frequency = 4.215e9;
  double signal_power_dbm = -110.0;
  double total_time = 20e-9;
};

struct RunConfig {
  std::string benchmark;  // empty or "snail-250"
  TwpaDeviceSpec device;
  bool lossless = false;  // junction model for transient runs
  double flux = 0.0;
  DriveConfig drive;
  SolverSelector solver = SolverSelector::transient;
  SolverSettings transient;
  WindowStart window = WindowStart::computed;
  double arrival_threshold = 0.05;
  InputReference reference = InputReference::calibration;
  HbSettings hb;
  std::vector<double> grid = linear_grid(0.0, 10e9, 51);
  std::vector<std::string> record;
  std::string output_dir = "out";

  OperatingPoint operating_point() const {
    OperatingPoint op;
    op.pump_frequency = drive.pump_frequency;
    op.pump_power_dbm = drive.pump_power_dbm;
    op.signal_power_dbm = drive.signal_power_dbm;
    op.flux = flux;
    return op;
  }

  SweepOptions sweep_options(unsigned jobs) const {
    SweepOptions o;
    o.transient = transient;
    o.total_time = drive.total_time;
    o.lossless = lossless;
    o.window = window;
    o.arrival_threshold = arrival_threshold;
    o.reference = reference;
    o.hb = hb;
    o.jobs = jobs;
    return o;
  }

  /// Device with the configured flux applied.
  TwpaDeviceSpec biased_device() const { return with_flux(device, flux); }
};

namespace detail {

using nlohmann::json;

inline std::string type_name(const json& j) { return j.type_name(); }

inline void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  if (!obj.is_object())
    throw ConfigurationError(path + ": expected an object, got " + type_name(obj));
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigurationError("unknown key '" + (path.empty() ? "" : path + ".") + it.key() + "'");
}

inline std::string key_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void read_number(const json& obj, const std::string& path, const std::string& key, double& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number())
    throw ConfigurationError(key_path(path, key) + ": expected number, got " + type_name(v));
  out = v.get<double>();
  if (!std::isfinite(out)) throw ConfigurationError(key_path(path, key) + ": must be finite");
}

inline void read_int(const json& obj, const std::string& path, const std::string& key, int& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer())
    throw ConfigurationError(key_path(path, key) + ": expected integer, got " + type_name(v));
  out = v.get<int>();
}

inline void read_bool(const json& obj, const std::string& path, const std::string& key, bool& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_boolean())
    throw ConfigurationError(key_path(path, key) + ": expected boolean, got " + type_name(v));
  out = v.get<bool>();
}

inline bool read_string(const json& obj, const std::string& path, const std::string& key,
                        std::string& out) {
  if (!obj.contains(key)) return false;
  const json& v = obj.at(key);
  if (!v.is_string())
    throw ConfigurationError(key_path(path, key) + ": expected string, got " + type_name(v));
  out = v.get<std::string>();
  return true;
}

inline void parse_device(const json& j, TwpaDeviceSpec& d) {
  const std::string p = "device";
  check_keys(j, p,
             {"critical_current", "junction_capacitance", "normal_resistance", "ic_rn_product",
              "junction_ratio", "n_large", "ground_capacitance", "n_cells", "port_impedance",
              "alternating_polarity", "flux_bias"});
  auto& jl = d.cell.large_junction;
  read_number(j, p, "critical_current", jl.critical_current);
  read_number(j, p, "junction_capacitance", jl.capacitance);
  read_number(j, p, "junction_ratio", d.cell.junction_ratio);
  read_int(j, p, "n_large", d.cell.n_large);
  read_number(j, p, "ground_capacitance", d.cell.ground_capacitance);
  read_int(j, p, "n_cells", d.n_cells);
  read_number(j, p, "port_impedance", d.port_impedance);
  read_bool(j, p, "alternating_polarity", d.alternating_polarity);
  if (j.contains("normal_resistance") && j.contains("ic_rn_product"))
    throw ConfigurationError("device: give either normal_resistance or ic_rn_product, not both");
  if (j.contains("normal_resistance")) {
    if (j.at("normal_resistance").is_null()) {
      jl.normal_resistance.reset();
    } else {
      double r = 0.0;
      read_number(j, p, "normal_resistance", r);
      jl.normal_resistance = r;
    }
  } else if (j.contains("ic_rn_product")) {
    double v = 0.0;
    read_number(j, p, "ic_rn_product", v);
    jl.normal_resistance = ambegaokar_baratoff_rn(jl.critical_current, v);
  } else if (j.contains("critical_current") && jl.normal_resistance) {
    // Keep the Ic*Rn product of the preset when only Ic changes.
    jl.normal_resistance = ambegaokar_baratoff_rn(jl.critical_current, kAluminiumIcRn);
  }
  if (j.contains("flux_bias")) {
    const json& f = j.at("flux_bias");
    const std::string fp = "device.flux_bias";
    check_keys(f, fp, {"scheme", "l_add", "l_ext", "dc_current_per_half_quantum", "strict_current"});
    std::string scheme;
    if (read_string(f, fp, "scheme", scheme)) {
      try {
        d.flux_bias.scheme = flux_scheme_from_string(scheme);
      } catch (const DomainError& e) {
        throw ConfigurationError(fp + ".scheme: " + e.what());
      }
    }
    read_number(f, fp, "l_add", d.flux_bias.l_add);
    read_number(f, fp, "l_ext", d.flux_bias.l_ext);
    read_number(f, fp, "dc_current_per_half_quantum", d.flux_bias.dc_current_per_half_quantum);
    read_bool(f, fp, "strict_current", d.flux_bias.strict_current);
  }
}

inline std::vector<double> parse_grid(const json& j) {
  const std::string p = "sweep";
  check_keys(j, p, {"start", "stop", "points", "frequencies"});
  if (j.contains("frequencies")) {
    if (j.contains("start") || j.contains("stop") || j.contains("points"))
      throw ConfigurationError("sweep: give either frequencies or start/stop/points");
    const json& f = j.at("frequencies");
    if (!f.is_array()) throw ConfigurationError("sweep.frequencies: expected array, got " + type_name(f));
    std::vector<double> g;
    for (const auto& v : f) {
      if (!v.is_number())
        throw ConfigurationError("sweep.frequencies: expected number entries, got " + type_name(v));
      g.push_back(v.get<double>());
    }
    return g;
  }
  double start = 0.0, stop = 10e9;
  int points = 51;
  read_number(j, p, "start", start);
  read_number(j, p, "stop", stop);
  read_int(j, p, "points", points);
  if (points < 1) throw ConfigurationError("sweep.points: must be >= 1");
  if (points > 1 && !(stop > start)) throw ConfigurationError("sweep: stop must exceed start");
  return points == 1 ? std::vector<double>{start} : linear_grid(start, stop, points);
}

}  // namespace detail

/// Parses and validates a run configuration. Schema errors raise
/// ConfigurationError naming the key; physical violations raise DomainError.
inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  check_keys(j, "", {"benchmark", "device", "junction_model", "flux", "drive", "solver", "transient",
                     "harmonic_balance", "sweep", "record", "output_dir"});
  RunConfig c;
  if (read_string(j, "", "benchmark", c.benchmark)) {
    if (c.benchmark != "snail-250")
      throw ConfigurationError("benchmark: unknown preset '" + c.benchmark + "' (expected snail-250)");
    c.device = snail250_device();
  } else {
    c.device.cell.large_junction.normal_resistance.reset();
  }
  if (j.contains("device")) parse_device(j.at("device"), c.device);

  std::string model;
  if (read_string(j, "", "junction_model", model)) {
    if (model == "rsj") c.lossless = false;
    else if (model == "lossless") c.lossless = true;
    else throw ConfigurationError("junction_model: expected rsj or lossless, got '" + model + "'");
  }
  read_number(j, "", "flux", c.flux);
  c.device.flux_bias.target_flux = c.flux;
  // Preset pump level: -78 dBm at half a flux quantum, -79 dBm otherwise.
  if (!c.benchmark.empty() && std::abs(std::abs(fold_flux(c.flux)) - 0.5) < 1e-12)
    c.drive.pump_power_dbm = -78.0;

  if (j.contains("drive")) {
    const json& d = j.at("drive");
    const std::string p = "drive";
    check_keys(d, p, {"pump_frequency", "pump_power_dbm", "signal_frequency", "signal_power_dbm", "total_time"});
    read_number(d, p, "pump_frequency", c.drive.pump_frequency);
    read_number(d, p, "pump_power_dbm", c.drive.pump_power_dbm);
    read_number(d, p, "signal_frequency", c.drive.signal_frequency);
    read_number(d, p, "signal_power_dbm", c.drive.signal_power_dbm);
    read_number(d, p, "total_time", c.drive.total_time);
  }
  std::string solver;
  if (read_string(j, "", "solver", solver)) c.solver = solver_selector_from_string(solver);

  if (j.contains("transient")) {
    const json& t = j.at("transient");
    const std::string p = "transient";
    check_keys(t, p, {"time_step", "adaptive", "newton_tolerance", "max_newton_iters", "min_step", "max_step",
                      "ramp_time", "window_start", "arrival_threshold", "input_reference"});
    read_number(t, p, "time_step", c.transient.time_step);
    read_bool(t, p, "adaptive", c.transient.adaptive);
    read_number(t, p, "newton_tolerance", c.transient.newton_tolerance);
    read_int(t, p, "max_newton_iters", c.transient.max_newton_iters);
    read_number(t, p, "min_step", c.transient.min_step);
    read_number(t, p, "max_step", c.transient.max_step);
    read_number(t, p, "ramp_time", c.transient.ramp_time);
    read_number(t, p, "arrival_threshold", c.arrival_threshold);
    std::string s;
    try {
      if (read_string(t, p, "window_start", s)) c.window = window_start_from_string(s);
      if (read_string(t, p, "input_reference", s)) c.reference = input_reference_from_string(s);
    } catch (const DomainError& e) {
      throw ConfigurationError(std::string("transient: ") + e.what());
    }
  }
  if (j.contains("harmonic_balance")) {
    const json& h = j.at("harmonic_balance");
    const std::string p = "harmonic_balance";
    check_keys(h, p, {"n_pump_harmonics", "n_modes", "newton_tolerance", "max_iters", "n_time_samples"});
    read_int(h, p, "n_pump_harmonics", c.hb.n_pump_harmonics);
    read_int(h, p, "n_modes", c.hb.n_modes);
    read_number(h, p, "newton_tolerance", c.hb.newton_tolerance);
    read_int(h, p, "max_iters", c.hb.max_iters);
    read_int(h, p, "n_time_samples", c.hb.n_time_samples);
  }
  if (j.contains("sweep")) c.grid = parse_grid(j.at("sweep"));
  if (j.contains("record")) {
    const json& r = j.at("record");
    if (!r.is_array()) throw ConfigurationError("record: expected array, got " + type_name(r));
    for (const auto& v : r) {
      if (!v.is_string()) throw ConfigurationError("record: expected string entries, got " + type_name(v));
      c.record.push_back(v.get<std::string>());
    }
  }
  read_string(j, "", "output_dir", c.output_dir);

  // Physical validation.
  c.device.validate();
  c.operating_point().validate();
  c.transient.validate();
  c.hb.validate();
  if (!(c.drive.total_time > 0.0)) throw DomainError("drive.total_time must be > 0");
  if (!(c.drive.signal_frequency > 0.0)) throw DomainError("drive.signal_frequency must be > 0");
  if (!(c.arrival_threshold > 0.0 && c.arrival_threshold < 1.0))
    throw DomainError("transient.arrival_threshold must lie in (0, 1)");
  if (c.grid.empty()) throw DomainError("sweep grid is empty");
  for (std::size_t i = 0; i < c.grid.size(); ++i) {
    if (!(c.grid[i] >= 0.0) || !std::isfinite(c.grid[i]))
      throw DomainError("sweep frequencies must be finite and >= 0");
    if (i > 0 && !(c.grid[i] > c.grid[i - 1]))
      throw DomainError("sweep frequencies must be strictly increasing");
  }
  return c;
}

inline RunConfig parse_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigurationError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig parse_config(const char* text) { return parse_config(std::string_view(text)); }
inline RunConfig parse_config(const std::string& text) { return parse_config(std::string_view(text)); }

/// Closed-form device summary at the configured flux.
inline nlohmann::json device_info(const RunConfig& c) {
  const TwpaDeviceSpec d = c.biased_device();
  d.validate();
  const double flux = d.flux_bias.scheme == FluxScheme::none ? 0.0 : c.flux;
  const auto coeffs = snail_taylor_coefficients(d.cell, flux, 4);
  nlohmann::json j;
  j["flux_Phi0"] = flux;
  j["flux_scheme"] = std::string(to_string(d.flux_bias.scheme));
  j["n_cells"] = d.n_cells;
  j["josephson_inductance_H"] = josephson_inductance(d.cell.large_junction.critical_current);
  j["cell_inductance_H"] = snail_effective_inductance(d.cell, flux);
  j["c2"] = coeffs[0];
  j["c3"] = coeffs[1];
  j["c4"] = coeffs[2];
  if (d.cell.large_junction.normal_resistance)
    j["normal_resistance_ohm"] = *d.cell.large_junction.normal_resistance;
  else
    j["normal_resistance_ohm"] = nullptr;
  j["propagation_time_s"] = propagation_time_estimate(d, flux);
  j["characteristic_impedance_ohm"] = characteristic_impedance(d, flux);
  if (d.flux_bias.scheme == FluxScheme::mutual_loop) {
    const MutualDesign md = design_mutual(d.flux_bias);
    j["mutual_inductance_H"] = md.mutual;
    j["coupling"] = md.coupling;
    j["coupling_clamped"] = md.clamped;
    j["dc_current_A"] = dc_current_for_flux(flux, md.mutual);
  }
  return j;
}

}  // namespace jtwpa
