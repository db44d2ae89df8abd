#pragma once

// Gain extraction: transient gain points and sweeps, harmonic-balance sweeps
// and the two-mode coupled-mode-equation reference gain.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "jtwpa/device.hpp"
#include "jtwpa/errors.hpp"
#include "jtwpa/hbal.hpp"
#include "jtwpa/netlist.hpp"
#include "jtwpa/spectral.hpp"
#include "jtwpa/transient.hpp"
#include "jtwpa/units.hpp"

namespace jtwpa {

inline double idler_frequency(double pump_frequency, double signal_frequency) {
  return 2.0 * pump_frequency - signal_frequency;
}

// ---------------------------------------------------------------------------
// Coupled-mode equations

struct CmeParams {
  double c2 = 0.0, c3 = 0.0, c4 = 0.0;
  double critical_current = 0.0;      // large junction, A
  double cell_inductance = 0.0;       // H
  double ground_capacitance = 0.0;    // F
  double series_capacitance = 0.0;    // F, SNAIL self-capacitance
  int n_cells = 0;
  double port_impedance = 50.0;
  double pump_frequency = 0.0;  // Hz
  double pump_power_dbm = -200.0;
  double flux = 0.0;

  void validate() const {
    if (!(c2 > 0.0)) throw DomainError("CME parameters need c2 > 0");
    if (!(critical_current > 0.0 && cell_inductance > 0.0 && ground_capacitance > 0.0))
      throw DomainError("CME parameters need positive Ic, L and C_g");
    if (!(series_capacitance >= 0.0)) throw DomainError("series capacitance must be >= 0");
    if (n_cells < 1) throw DomainError("n_cells must be >= 1");
    if (!(pump_frequency > 0.0)) throw DomainError("pump frequency must be > 0");
    if (!(port_impedance > 0.0)) throw DomainError("port impedance must be > 0");
    if (!std::isfinite(c3) || !std::isfinite(c4) || !std::isfinite(flux))
      throw DomainError("CME parameters must be finite");
  }
};

inline CmeParams make_cme_params(const TwpaDeviceSpec& spec, double pump_frequency,
                                 double pump_power_dbm) {
  spec.validate();
  const double flux = spec.flux_bias.scheme == FluxScheme::none ? 0.0 : spec.flux_bias.target_flux;
  const auto c = snail_taylor_coefficients(spec.cell, flux, 4);
  CmeParams p;
  p.c2 = c[0];
  p.c3 = c[1];
  p.c4 = c[2];
  p.critical_current = spec.cell.large_junction.critical_current;
  p.cell_inductance = josephson_inductance(p.critical_current) / p.c2;
  p.ground_capacitance = spec.cell.ground_capacitance;
  p.series_capacitance =
      spec.cell.large_junction.capacitance * (1.0 / spec.cell.n_large + spec.cell.junction_ratio);
  p.n_cells = spec.n_cells;
  p.port_impedance = spec.port_impedance;
  p.pump_frequency = pump_frequency;
  p.pump_power_dbm = pump_power_dbm;
  p.flux = flux;
  return p;
}

namespace detail {

struct LadderWave {
  double y = 0.0;  // series admittance / (i omega), 1/L - w^2 C_s
  double k = 0.0;  // rad per cell
  bool propagating = false;
};

inline LadderWave ladder_wave(const CmeParams& p, double omega) {
  LadderWave w;
  w.y = 1.0 / p.cell_inductance - omega * omega * p.series_capacitance;
  if (!(w.y > 0.0)) return w;
  const double ck = 1.0 - omega * omega * p.ground_capacitance / (2.0 * w.y);
  if (ck < -1.0) return w;
  w.k = std::acos(ck);
  w.propagating = true;
  return w;
}

/// (sinh z / z)^2 with z^2 = g2 (sin for g2 < 0), accurate near zero.
inline double sinhc_squared(double z2) {
  if (std::abs(z2) < 1e-8) return 1.0 + z2 / 3.0;
  if (z2 > 0.0) {
    const double z = std::sqrt(z2);
    const double s = std::sinh(z) / z;
    return s * s;
  }
  const double z = std::sqrt(-z2);
  const double s = std::sin(z) / z;
  return s * s;
}

}  // namespace detail

/// Two-mode degenerate-pump four-wave-mixing gain (dB) of the lossless
/// discrete ladder. Element flux amplitudes B obey
///   dB_j/dn = i kappa_j (nonlinear current projected on mode j),
///   kappa_j = beta tan(k_j / 2) / Y_j,   beta = Ic c4' / (6 Phi_n^3),
/// with c4' = c4 - 3 c3^2 / c2 (second-order three-wave cascade). Self- and
/// cross-phase shifts enter the mismatch together with the discrete-ladder
/// dispersion 2 k_p - k_s - k_i. The pump amplitude is set from the power
/// delivered into the line through the port mismatch.
inline double cme_gain(const CmeParams& p, double signal_frequency) {
  p.validate();
  if (signal_frequency == p.pump_frequency) throw DomainError("cme_gain: f_s must differ from f_p");
  const double fi = idler_frequency(p.pump_frequency, signal_frequency);
  if (!(signal_frequency > 0.0) || !(fi > 0.0)) return 0.0;
  const double ws = kTwoPi * signal_frequency, wi = kTwoPi * fi, wp = kTwoPi * p.pump_frequency;
  const auto s = detail::ladder_wave(p, ws);
  const auto i = detail::ladder_wave(p, wi);
  const auto q = detail::ladder_wave(p, wp);
  if (!s.propagating || !i.propagating || !q.propagating) return 0.0;

  const double c4eff = p.c4 - 3.0 * p.c3 * p.c3 / p.c2;
  const double pn = kReducedFluxQuantum;
  const double beta = p.critical_current * c4eff / (6.0 * pn * pn * pn);
  auto kappa = [&](const detail::LadderWave& w) { return beta * std::tan(0.5 * w.k) / w.y; };
  const double ks = kappa(s), ki = kappa(i), kp = kappa(q);

  // Pump element-flux amplitude squared.
  const double sp = std::sin(0.5 * q.k);
  const double zb = wp / (q.y * 2.0 * sp);
  const double gamma = (zb - p.port_impedance) / (zb + p.port_impedance);
  const double p_line = dbm_to_watts(p.pump_power_dbm) * (1.0 - gamma * gamma);
  const double a2 = 2.0 * p_line * zb / (wp * wp);
  const double pb = 4.0 * a2 * sp * sp;

  const double shift_s = -1.5 * ks * pb;
  const double shift_i = -1.5 * ki * pb;
  const double shift_p = -0.75 * kp * pb;
  const double dk_lin = 2.0 * q.k - s.k - i.k;
  const double mismatch = shift_s + shift_i - 2.0 * shift_p - dk_lin;
  const double coupling = (9.0 / 16.0) * ks * ki * pb * pb;
  const double g2 = coupling - 0.25 * mismatch * mismatch;
  const double n = p.n_cells;
  const double gain = 1.0 + coupling * n * n * detail::sinhc_squared(g2 * n * n);
  return 10.0 * std::log10(gain);
}

// ---------------------------------------------------------------------------
// Gain curves

enum class GainMethod { cme, transient, harmonic_balance };

inline std::string_view to_string(GainMethod m) {
  switch (m) {
    case GainMethod::cme: return "cme";
    case GainMethod::transient: return "transient";
    case GainMethod::harmonic_balance: return "harmonic-balance";
  }
  return "cme";
}

inline GainMethod gain_method_from_string(std::string_view s) {
  if (s == "cme") return GainMethod::cme;
  if (s == "transient") return GainMethod::transient;
  if (s == "harmonic-balance") return GainMethod::harmonic_balance;
  throw DomainError("unknown gain method '" + std::string(s) + "'");
}

struct OperatingPoint {
  double pump_frequency = 4.415e9;
  double pump_power_dbm = -79.0;
  double signal_power_dbm = -110.0;
  double flux = 0.0;

  void validate() const {
    if (!(pump_frequency > 0.0)) throw DomainError("pump_frequency must be > 0");
    if (!std::isfinite(pump_power_dbm) || !std::isfinite(signal_power_dbm) || !std::isfinite(flux))
      throw DomainError("operating point fields must be finite");
  }
};

struct GainPoint {
  double frequency = 0.0;
  double gain_db = 0.0;
};

struct GainCurve {
  GainMethod method = GainMethod::cme;
  OperatingPoint op;
  std::vector<GainPoint> points;
  /// Free-form settings echoed into the CSV header.
  std::vector<std::pair<std::string, std::string>> notes;
  std::vector<std::string> diagnostics;

  double at(double f) const {
    for (const auto& p : points)
      if (std::abs(p.frequency - f) <= 1e-9 * std::max(1.0, std::abs(f))) return p.gain_db;
    throw LookupError("gain curve has no point at " + std::to_string(f) + " Hz");
  }
};

inline void write_csv(std::ostream& os, const GainCurve& c) {
  char buf[128];
  os << "# method: " << to_string(c.method) << '\n';
  std::snprintf(buf, sizeof buf, "# pump_frequency_Hz: %.17g\n", c.op.pump_frequency);
  os << buf;
  std::snprintf(buf, sizeof buf, "# pump_power_dBm: %.17g\n", c.op.pump_power_dbm);
  os << buf;
  std::snprintf(buf, sizeof buf, "# signal_power_dBm: %.17g\n", c.op.signal_power_dbm);
  os << buf;
  std::snprintf(buf, sizeof buf, "# flux_Phi0: %.17g\n", c.op.flux);
  os << buf;
  for (const auto& [k, v] : c.notes) os << "# " << k << ": " << v << '\n';
  os << "f_s_Hz,gain_dB\n";
  for (const auto& p : c.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.frequency, p.gain_db);
    os << buf;
  }
}

inline GainCurve read_gain_curve_csv(std::istream& is) {
  GainCurve c;
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = line.substr(2, colon - 2);
      const std::string val = line.substr(colon + 2);
      if (key == "method") c.method = gain_method_from_string(val);
      else if (key == "pump_frequency_Hz") c.op.pump_frequency = std::stod(val);
      else if (key == "pump_power_dBm") c.op.pump_power_dbm = std::stod(val);
      else if (key == "signal_power_dBm") c.op.signal_power_dbm = std::stod(val);
      else if (key == "flux_Phi0") c.op.flux = std::stod(val);
      else c.notes.emplace_back(key, val);
      continue;
    }
    if (!header) {
      if (line != "f_s_Hz,gain_dB") throw DomainError("gain curve CSV: unexpected header");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DomainError("gain curve CSV: bad row");
    c.points.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
  }
  if (!header) throw DomainError("gain curve CSV: missing header");
  return c;
}

/// Peak gain and the contiguous -3 dB band around it.
struct BandSummary {
  double peak_frequency = 0.0;
  double peak_gain_db = 0.0;
  double lower = 0.0, upper = 0.0;  // Hz, linear interpolation of the crossings
  double bandwidth() const { return upper - lower; }
};

inline BandSummary band_summary(const GainCurve& c, double drop_db = 3.0) {
  if (c.points.empty()) throw DomainError("band_summary: empty curve");
  std::size_t ip = 0;
  for (std::size_t i = 1; i < c.points.size(); ++i)
    if (c.points[i].gain_db > c.points[ip].gain_db) ip = i;
  BandSummary b;
  b.peak_frequency = c.points[ip].frequency;
  b.peak_gain_db = c.points[ip].gain_db;
  const double level = b.peak_gain_db - drop_db;
  auto cross = [&](std::size_t inside, std::size_t outside) {
    const auto& a = c.points[inside];
    const auto& o = c.points[outside];
    const double t = (a.gain_db - level) / (a.gain_db - o.gain_db);
    return a.frequency + t * (o.frequency - a.frequency);
  };
  std::size_t lo = ip;
  while (lo > 0 && c.points[lo - 1].gain_db >= level) --lo;
  b.lower = lo > 0 ? cross(lo, lo - 1) : c.points[lo].frequency;
  std::size_t hi = ip;
  while (hi + 1 < c.points.size() && c.points[hi + 1].gain_db >= level) ++hi;
  b.upper = hi + 1 < c.points.size() ? cross(hi, hi + 1) : c.points[hi].frequency;
  return b;
}

// ---------------------------------------------------------------------------
// Transient gain

/// Gain from a reference record (available input power) and an output
/// record, both carrying the output-port current `i_out`.
inline double gain_point(const TimeSeries& input, const TimeSeries& output, double signal_frequency,
                         double window_start, double load) {
  return tone_power(output, "i_out", signal_frequency, window_start, load) -
         tone_power(input, "i_out", signal_frequency, window_start, load);
}

/// Difference of two records sampled on the same grid (channel by channel).
inline TimeSeries subtract(const TimeSeries& a, const TimeSeries& b) {
  if (a.time != b.time || a.names != b.names) throw DomainError("subtract: records differ in layout");
  TimeSeries d = a;
  for (std::size_t c = 0; c < d.channels.size(); ++c)
    for (std::size_t i = 0; i < d.time.size(); ++i) d.channels[c][i] -= b.channels[c][i];
  return d;
}

enum class WindowStart { computed, measured };

inline std::string_view to_string(WindowStart w) {
  return w == WindowStart::computed ? "computed" : "measured";
}

inline WindowStart window_start_from_string(std::string_view s) {
  if (s == "computed") return WindowStart::computed;
  if (s == "measured") return WindowStart::measured;
  throw DomainError("unknown window start '" + std::string(s) + "'");
}

enum class InputReference { calibration, live };

inline std::string_view to_string(InputReference r) {
  return r == InputReference::calibration ? "calibration" : "live";
}

inline InputReference input_reference_from_string(std::string_view s) {
  if (s == "calibration") return InputReference::calibration;
  if (s == "live") return InputReference::live;
  throw DomainError("unknown input reference '" + std::string(s) + "'");
}

struct SweepOptions {
  SolverSettings transient;
  double total_time = 20e-9;
  bool lossless = false;  // drop junction shunt resistors in transient runs
  WindowStart window = WindowStart::computed;
  double arrival_threshold = 0.05;  // for measured window start
  InputReference reference = InputReference::calibration;
  HbSettings hb;
  unsigned jobs = 0;  // 0: hardware concurrency
  /// Called after each finished point (from worker threads, serialized).
  std::function<void(const std::string&)> log;
};

namespace detail {

inline unsigned resolve_jobs(unsigned jobs, std::size_t work) {
  unsigned j = jobs ? jobs : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(j, std::max<std::size_t>(1, work)));
}

/// Runs fn(i) for i in [0, n) on `jobs` threads.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  jobs = resolve_jobs(jobs, n);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
  };
  if (jobs <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

inline bool same_frequency(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

/// Device with the operating-point flux applied to its bias scheme.
inline TwpaDeviceSpec with_flux(TwpaDeviceSpec spec, double flux) {
  spec.flux_bias.target_flux = flux;
  return spec;
}

struct TransientGainSetup {
  Netlist net;
  Netlist through;
  TimeSeries pump_only;
  double window_start = 0.0;
};

/// Builds the netlists, runs the shared pump-only record and fixes the
/// analysis window start.
inline TransientGainSetup prepare_transient_gain(const TwpaDeviceSpec& device,
                                                 const OperatingPoint& op,
                                                 const SweepOptions& opt) {
  op.validate();
  TransientGainSetup s;
  const TwpaDeviceSpec dev = with_flux(device, op.flux);
  s.net = build_snail_twpa(dev, {opt.lossless});
  s.through = build_through(dev.port_impedance);
  DriveSpec pump;
  pump.tones = {{op.pump_frequency, op.pump_power_dbm, 0.0}};
  pump.total_time = opt.total_time;
  s.pump_only = simulate(s.net, pump, opt.transient);
  if (opt.window == WindowStart::computed) {
    const double flux = dev.flux_bias.scheme == FluxScheme::none ? 0.0 : op.flux;
    s.window_start = propagation_time_estimate(dev, flux);
  } else {
    s.window_start = propagation_time(s.pump_only, opt.arrival_threshold);
  }
  return s;
}

/// One transient gain point: pump+signal run minus the pump-only run at the
/// output, referenced to a matched through (or the live input). `record`
/// (optional) names extra channels and receives the pump+signal record.
inline double transient_gain_point(const TransientGainSetup& s, const OperatingPoint& op,
                                   double signal_frequency, const SweepOptions& opt,
                                   TimeSeries* record = nullptr,
                                   const std::vector<std::string>& extra_channels = {}) {
  DriveSpec drive;
  drive.tones = {{op.pump_frequency, op.pump_power_dbm, 0.0},
                 {signal_frequency, op.signal_power_dbm, 0.0}};
  drive.total_time = opt.total_time;
  drive.record = extra_channels;
  TimeSeries both = simulate(s.net, drive, opt.transient);
  if (!extra_channels.empty()) {
    // The pump-only record lacks the extra channels; compare on the shared ones.
    TimeSeries trimmed;
    trimmed.time = both.time;
    for (const auto& name : s.pump_only.names) trimmed.add_channel(name, both[name]);
    if (record) *record = std::move(both);
    both = std::move(trimmed);
  } else if (record) {
    *record = both;
  }
  const TimeSeries out = subtract(both, s.pump_only);
  const double load = s.net.output().value;
  if (opt.reference == InputReference::live) {
    // Incident wave at the input port, (v_in / Z + i_in) / 2, in current units.
    const double zin = s.net.input().value;
    TimeSeries inc;
    inc.time = both.time;
    std::vector<double> a(both.time.size());
    const auto& v = both["v_in"];
    const auto& i = both["i_in"];
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = 0.5 * (v[k] / zin + i[k]);
    inc.add_channel("i_inc", std::move(a));
    return tone_power(out, "i_out", signal_frequency, s.window_start, load) -
           tone_power(inc, "i_inc", signal_frequency, s.window_start, zin);
  }
  DriveSpec cal;
  cal.tones = {{signal_frequency, op.signal_power_dbm, 0.0}};
  cal.total_time = opt.total_time;
  const TimeSeries ref = simulate(s.through, cal, opt.transient);
  return gain_point(ref, out, signal_frequency, s.window_start, load);
}

/// Gain curve over `grid` with the chosen method. Points at f_s = f_p are
/// skipped; failing points are recorded in diagnostics and the sweep goes on.
/// For the harmonic-balance method `sparams` (optional) receives the full
/// small-signal solution.
inline GainCurve sweep_gain(const TwpaDeviceSpec& device, const OperatingPoint& op,
                            const std::vector<double>& grid, GainMethod method,
                            const SweepOptions& opt = {}, SmallSignalSolution* sparams = nullptr) {
  if (grid.empty()) throw DomainError("sweep grid is empty");
  op.validate();
  GainCurve curve;
  curve.method = method;
  curve.op = op;
  std::vector<std::optional<double>> gains(grid.size());
  std::vector<std::string> notes(grid.size());
  std::vector<double> todo;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (detail::same_frequency(grid[i], op.pump_frequency))
      notes[i] = "skipped f_s = f_p = " + std::to_string(grid[i]) + " Hz";

  switch (method) {
    case GainMethod::cme: {
      const CmeParams p = make_cme_params(with_flux(device, op.flux), op.pump_frequency, op.pump_power_dbm);
      for (std::size_t i = 0; i < grid.size(); ++i)
        if (notes[i].empty()) gains[i] = cme_gain(p, grid[i]);
      curve.notes.emplace_back("model", "two-mode degenerate-pump, lossless");
      break;
    }
    case GainMethod::harmonic_balance: {
      TwpaDeviceSpec dev = with_flux(device, op.flux);
      if (dev.flux_bias.scheme == FluxScheme::mutual_loop) {
        // Coupled inductors are transient-only; the same flux enters as phase offsets.
        dev.flux_bias.scheme = FluxScheme::phase_source;
        curve.diagnostics.push_back("harmonic balance: mutual-loop bias replaced by phase-source offsets");
      }
      const Netlist net = build_snail_twpa(dev, {true});
      HbSettings hs = opt.hb;
      hs.jobs = opt.jobs;
      hs.frequencies.clear();
      for (std::size_t i = 0; i < grid.size(); ++i)
        if (notes[i].empty()) hs.frequencies.push_back(grid[i]);
      const PumpSteadyState st = solve_pump(net, op.pump_frequency, op.pump_power_dbm, hs);
      const SmallSignalSolution sol = small_signal_sparams(st, net, hs);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!notes[i].empty()) continue;
        try {
          gains[i] = gain_from_sparams(sol, grid[i]);
        } catch (const LookupError&) {
          notes[i] = "no S-parameters at f_s = " + std::to_string(grid[i]) + " Hz";
        }
      }
      for (const auto& d : sol.diagnostics) curve.diagnostics.push_back(d);
      if (sparams) *sparams = sol;
      curve.notes.emplace_back("n_pump_harmonics", std::to_string(hs.n_pump_harmonics));
      curve.notes.emplace_back("n_modes", std::to_string(sol.mode_indices.size()));
      curve.notes.emplace_back("pump_newton_iterations", std::to_string(st.iterations));
      break;
    }
    case GainMethod::transient: {
      const TransientGainSetup setup = prepare_transient_gain(device, op, opt);
      std::mutex log_mutex;
      detail::parallel_for(grid.size(), opt.jobs, [&](std::size_t i) {
        if (!notes[i].empty()) return;
        try {
          gains[i] = transient_gain_point(setup, op, grid[i], opt);
          if (opt.log) {
            std::lock_guard<std::mutex> lock(log_mutex);
            char buf[96];
            std::snprintf(buf, sizeof buf, "f_s = %.6g Hz: gain %.3f dB", grid[i], *gains[i]);
            opt.log(buf);
          }
        } catch (const std::exception& e) {
          notes[i] = "f_s = " + std::to_string(grid[i]) + " Hz failed: " + e.what();
        }
      });
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", opt.transient.time_step);
      curve.notes.emplace_back("time_step_s", buf);
      std::snprintf(buf, sizeof buf, "%.17g", opt.total_time);
      curve.notes.emplace_back("total_time_s", buf);
      std::snprintf(buf, sizeof buf, "%.17g", setup.window_start);
      curve.notes.emplace_back("window_start_s", buf);
      curve.notes.emplace_back("window_mode", std::string(to_string(opt.window)));
      curve.notes.emplace_back("junctions", opt.lossless ? "lossless" : "rsj");
      curve.notes.emplace_back("input_reference", std::string(to_string(opt.reference)));
      break;
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (gains[i]) curve.points.push_back({grid[i], *gains[i]});
    else if (!notes[i].empty()) curve.diagnostics.push_back(notes[i]);
  }
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const GainPoint& a, const GainPoint& b) { return a.frequency < b.frequency; });
  return curve;
}

}  // namespace jtwpa
