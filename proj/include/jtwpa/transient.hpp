#pragma once

// Time-domain nodal phase solver. Unknowns are node phases; a node voltage is
// Phi0/(2 pi) times the phase rate. Junctions follow the RSJ model
//   I = Ic sin(dphi) + (Phi0 / 2 pi Rn) dphi/dt + (Phi0 C / 2 pi) d2phi/dt2.
// Phase rate and phase acceleration are carried as auxiliary states and
// advanced with the trapezoidal rule (backward Euler on the first step), with
// a Newton solve per step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "jtwpa/banded.hpp"
#include "jtwpa/circuit.hpp"
#include "jtwpa/errors.hpp"
#include "jtwpa/netlist.hpp"
#include "jtwpa/units.hpp"

namespace jtwpa {

struct Tone {
  double frequency = 0.0;  // Hz
  double power_dbm = -200.0;
  double phase = 0.0;  // rad
};

struct DriveSpec {
  std::vector<Tone> tones;
  double total_time = 20e-9;
  /// Extra channels to record besides "i_out", "v_in" and "v_out":
  /// "v:<node>", "phi:<node>" or "jphase:<element index>".
  std::vector<std::string> record;

  void validate() const {
    for (const Tone& t : tones)
      if (!(t.frequency >= 0.0) || !std::isfinite(t.power_dbm))
        throw DomainError("drive tones need frequency >= 0 and finite power");
    if (!(total_time > 0.0)) throw DomainError("total_time must be > 0");
  }
};

struct SolverSettings {
  double time_step = 3.29e-12;
  bool adaptive = false;
  double newton_tolerance = 1e-9;  // relative to the largest critical current
  int max_newton_iters = 50;
  double min_step = 0.0;  // 0: time_step / 64
  double max_step = 0.0;  // 0: time_step
  /// Raised-cosine start-up envelope on time-varying sources.
  double ramp_time = 0.5e-9;

  void validate() const {
    if (!(time_step > 0.0)) throw DomainError("time_step must be > 0");
    if (!(newton_tolerance > 0.0)) throw DomainError("newton_tolerance must be > 0");
    if (max_newton_iters < 1) throw DomainError("max_newton_iters must be >= 1");
    if (ramp_time < 0.0) throw DomainError("ramp_time must be >= 0");
  }
};

class TimeSeries {
 public:
  std::vector<double> time;
  std::vector<std::string> names;
  std::vector<std::vector<double>> channels;

  bool has(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
  }

  const std::vector<double>& operator[](const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw LookupError("time series has no channel '" + name + "'");
    return channels[static_cast<std::size_t>(it - names.begin())];
  }

  void add_channel(std::string name, std::vector<double> data) {
    names.push_back(std::move(name));
    channels.push_back(std::move(data));
  }

  bool operator==(const TimeSeries& o) const {
    return time == o.time && names == o.names && channels == o.channels;
  }
};

inline void write_csv(std::ostream& os, const TimeSeries& ts) {
  os << "t_s";
  for (const auto& n : ts.names) os << ',' << n;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ts.time.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", ts.time[i]);
    os << buf;
    for (const auto& c : ts.channels) {
      std::snprintf(buf, sizeof buf, "%.17g", c[i]);
      os << ',' << buf;
    }
    os << '\n';
  }
}

inline TimeSeries read_time_series_csv(std::istream& is) {
  TimeSeries ts;
  std::string line;
  if (!std::getline(is, line)) throw DomainError("time series CSV: empty input");
  std::stringstream header(line);
  std::string cell;
  std::getline(header, cell, ',');
  if (cell != "t_s") throw DomainError("time series CSV: first column must be t_s");
  while (std::getline(header, cell, ',')) ts.names.push_back(cell);
  ts.channels.assign(ts.names.size(), {});
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::getline(row, cell, ',');
    ts.time.push_back(std::stod(cell));
    for (auto& c : ts.channels) {
      if (!std::getline(row, cell, ',')) throw DomainError("time series CSV: short row");
      c.push_back(std::stod(cell));
    }
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Sources

/// Norton amplitude of a tone with available power `power_dbm` into a
/// matched `impedance`: |I|^2 Z / 8 = P.
inline double norton_amplitude(double power_dbm, double impedance) {
  if (!(impedance > 0.0)) throw DomainError("port impedance must be > 0");
  return std::sqrt(8.0 * dbm_to_watts(power_dbm) / impedance);
}

/// Power a Norton source of peak current `amplitude` delivers to a matched load.
inline double available_power(double amplitude, double impedance) {
  return amplitude * amplitude * impedance / 8.0;
}

inline double ramp_envelope(double t, double ramp_time) {
  if (ramp_time <= 0.0 || t >= ramp_time) return 1.0;
  if (t <= 0.0) return 0.0;
  return 0.5 * (1.0 - std::cos(std::numbers::pi * t / ramp_time));
}

/// Norton source current at time t (without start-up envelope).
inline double source_waveform(const std::vector<Tone>& tones, double port_impedance, double t) {
  double s = 0.0;
  for (const Tone& tone : tones)
    s += norton_amplitude(tone.power_dbm, port_impedance) *
         std::cos(kTwoPi * tone.frequency * t + tone.phase);
  return s;
}

// ---------------------------------------------------------------------------
// Solver

struct SimulationStats {
  std::size_t steps = 0;
  std::size_t newton_iterations = 0;
  std::size_t rejected_steps = 0;
};

class TransientSolver {
 public:
  TransientSolver(const Netlist& net, DriveSpec drive, SolverSettings settings)
      : net_(net), model_(net), drive_(std::move(drive)), settings_(settings) {
    drive_.validate();
    settings_.validate();
    if (net.input_port < 0 || net.output_port < 0)
      throw ConfigurationError("transient simulation needs input and output ports");
    in_ = model_.port_node(net.input_port);
    out_ = model_.port_node(net.output_port);
    const double zin = net.input().value;
    for (const Tone& t : drive_.tones)
      drive_amp_.push_back({norton_amplitude(t.power_dbm, zin), kTwoPi * t.frequency, t.phase});
    setup_channels();
  }

  const CircuitModel& model() const { return model_; }
  const SimulationStats& stats() const { return stats_; }

  TimeSeries run() {
    const std::size_t n = model_.size();
    const std::size_t bw = model_.half_bandwidth();
    jac_ = linalg::BandMatrix<double>(n, bw, bw);
    lin_ = linalg::BandMatrix<double>(n, bw, bw);
    f_.assign(n, 0.0);
    rhs_.assign(n, 0.0);

    x_ = solve_dc(model_).x;
    w_.assign(n, 0.0);
    a_.assign(n, 0.0);
    wn_.assign(n, 0.0);
    an_.assign(n, 0.0);

    TimeSeries ts;
    ts.names = channel_names_;
    ts.channels.assign(channel_names_.size(), {});
    record(ts, 0.0);

    const double h0 = settings_.time_step;
    const double hmin = settings_.min_step > 0.0 ? settings_.min_step : h0 / 64.0;
    const double hmax = settings_.max_step > 0.0 ? settings_.max_step : h0;
    const double tend = drive_.total_time;
    double t = 0.0;
    double h = std::min(h0, hmax);
    int easy = 0;
    bool first = true;
    std::size_t k = 0;
    const auto nsteps = static_cast<std::size_t>(std::llround(tend / h0));

    std::vector<double> xold;
    while (true) {
      double tnext;
      if (settings_.adaptive) {
        if (t >= tend * (1.0 - 1e-12)) break;
        tnext = std::min(t + h, tend);
      } else {
        if (k >= nsteps) break;
        tnext = static_cast<double>(k + 1) * h0;
      }
      const double hs = tnext - t;
      xold = x_;
      const int iters = step(hs, tnext, first);
      if (iters < 0) {
        x_ = xold;
        ++stats_.rejected_steps;
        if (settings_.adaptive && h * 0.5 >= hmin) {
          h *= 0.5;
          easy = 0;
          continue;
        }
        throw ConvergenceError("transient: Newton failed to converge at t = " +
                                   std::to_string(tnext) + " s",
                               tnext, last_residual_);
      }
      stats_.newton_iterations += static_cast<std::size_t>(iters);
      ++stats_.steps;
      first = false;
      std::swap(w_, wn_);
      std::swap(a_, an_);
      t = tnext;
      ++k;
      record(ts, t);
      if (settings_.adaptive) {
        easy = iters <= 2 ? easy + 1 : 0;
        if (easy >= 5 && h < hmax) {
          h = std::min(2.0 * h, hmax);
          easy = 0;
        }
      }
    }
    return ts;
  }

 private:
  struct DriveTone {
    double amplitude, omega, phase;
  };

  enum class ChannelKind { node_voltage, node_phase, output_current, input_current, junction_phase };
  struct Channel {
    ChannelKind kind;
    NodeRef node;
    Branch branch;
  };

  void setup_channels() {
    auto add = [&](std::string name, Channel c) {
      channel_names_.push_back(std::move(name));
      channels_.push_back(c);
    };
    add("i_out", {ChannelKind::output_current, out_, {}});
    add("i_in", {ChannelKind::input_current, in_, {}});
    add("v_in", {ChannelKind::node_voltage, in_, {}});
    add("v_out", {ChannelKind::node_voltage, out_, {}});
    for (const std::string& r : drive_.record) {
      const auto colon = r.find(':');
      if (colon == std::string::npos) throw DomainError("bad record selector '" + r + "'");
      const std::string kind = r.substr(0, colon);
      const int id = std::stoi(r.substr(colon + 1));
      if (kind == "v" || kind == "phi") {
        if (id < 0 || id >= net_.node_count) throw DomainError("record: node out of range");
        add(r, {kind == "v" ? ChannelKind::node_voltage : ChannelKind::node_phase, model_.node(id), {}});
      } else if (kind == "jphase") {
        if (id < 0 || id >= static_cast<int>(net_.elements.size()) ||
            net_.elements[static_cast<std::size_t>(id)].kind != ElementKind::josephson)
          throw DomainError("record: element is not a junction");
        const Element& e = net_.elements[static_cast<std::size_t>(id)];
        add(r, {ChannelKind::junction_phase, {}, {model_.node(e.a), model_.node(e.b)}});
      } else {
        throw DomainError("bad record selector '" + r + "'");
      }
    }
  }

  double drive_current(double t) const {
    double s = 0.0;
    for (const auto& d : drive_amp_) s += d.amplitude * std::cos(d.omega * t + d.phase);
    return s * ramp_envelope(t, settings_.ramp_time);
  }

  double node_value(const std::vector<double>& v, const NodeRef& r) const {
    return r.unknown >= 0 ? v[static_cast<std::size_t>(r.unknown)] : 0.0;
  }

  void record(TimeSeries& ts, double t) {
    ts.time.push_back(t);
    const double zout = net_.output().value;
    const double zin = net_.input().value;
    for (std::size_t c = 0; c < channels_.size(); ++c) {
      const Channel& ch = channels_[c];
      double v = 0.0;
      switch (ch.kind) {
        case ChannelKind::node_voltage: v = kReducedFluxQuantum * node_value(w_, ch.node); break;
        case ChannelKind::node_phase: v = node_value(x_, ch.node) + ch.node.offset; break;
        case ChannelKind::output_current:
          v = kReducedFluxQuantum * node_value(w_, ch.node) / zout;
          break;
        case ChannelKind::input_current:
          v = drive_current(t) - kReducedFluxQuantum * node_value(w_, ch.node) / zin;
          break;
        case ChannelKind::junction_phase: v = ch.branch.drop(x_); break;
      }
      ts.channels[c].push_back(v);
    }
  }

  // Integration coefficients: w' = beta (x - xold) - cw wold,
  //                            a' = alpha (x - xold) - ca wold - da aold.
  struct Coeffs {
    double alpha, beta, cw, ca, da;
  };

  static Coeffs coeffs(double h, bool backward_euler) {
    if (backward_euler) return {1.0 / (h * h), 1.0 / h, 0.0, 1.0 / h, 0.0};
    return {4.0 / (h * h), 2.0 / h, 1.0, 4.0 / h, 1.0};
  }

  void build_linear(const Coeffs& c) {
    lin_.set_zero();
    auto stamp = [&](const Branch& b, double g) {
      const int ua = b.a.unknown, ub = b.b.unknown;
      if (ua >= 0) lin_.add(model_.row(ua), model_.row(ua), g);
      if (ub >= 0) lin_.add(model_.row(ub), model_.row(ub), g);
      if (ua >= 0 && ub >= 0) {
        lin_.add(model_.row(ua), model_.row(ub), -g);
        lin_.add(model_.row(ub), model_.row(ua), -g);
      }
    };
    const double pn = kReducedFluxQuantum;
    for (const auto& l : model_.inductors()) stamp(l.br, pn / l.value);
    for (const auto& cap : model_.capacitors()) stamp(cap.br, pn * cap.value * c.alpha);
    for (const auto& g : model_.conductances()) stamp(g.br, pn * g.value * c.beta);
    for (const auto& j : model_.junctions())
      stamp(j.br, pn * (j.cap * c.alpha + j.conductance * c.beta));
    for (const auto& ci : model_.coupled()) {
      const int ua = ci.br.a.unknown, ub = ci.br.b.unknown;
      const std::size_t raux = model_.row(static_cast<std::size_t>(ci.aux));
      if (ua >= 0) {
        lin_.add(model_.row(ua), raux, 1.0);
        lin_.add(raux, model_.row(ua), pn / ci.inductance);
      }
      if (ub >= 0) {
        lin_.add(model_.row(ub), raux, -1.0);
        lin_.add(raux, model_.row(ub), -pn / ci.inductance);
      }
      lin_.add(raux, raux, -1.0);
      for (auto [other, m] : ci.partners)
        lin_.add(raux, model_.row(static_cast<std::size_t>(other)), -m / ci.inductance);
    }
    lin_coeffs_ = c;
    lin_valid_ = true;
  }

  /// Residual (currents leaving each node) at the trial state x_.
  double residual(const Coeffs& c, double t, bool with_jacobian) {
    const std::size_t nn = model_.node_unknowns();
    for (std::size_t u = 0; u < nn; ++u) {
      const double dx = x_[u] - xold_[u];
      wn_[u] = c.beta * dx - c.cw * w_[u];
      an_[u] = c.alpha * dx - c.ca * w_[u] - c.da * a_[u];
    }
    std::fill(f_.begin(), f_.end(), 0.0);
    if (with_jacobian) jac_ = lin_;
    const double pn = kReducedFluxQuantum;
    auto inject = [&](const Branch& b, double current) {
      if (b.a.unknown >= 0) f_[model_.row(b.a.unknown)] += current;
      if (b.b.unknown >= 0) f_[model_.row(b.b.unknown)] -= current;
    };
    for (const auto& l : model_.inductors()) inject(l.br, pn / l.value * l.br.drop(x_));
    for (const auto& cap : model_.capacitors()) inject(cap.br, pn * cap.value * cap.br.rate(an_));
    for (const auto& g : model_.conductances()) inject(g.br, pn * g.value * g.br.rate(wn_));
    for (const auto& j : model_.junctions()) {
      const double d = j.br.drop(x_);
      const double s = std::sin(d);
      double cur = j.ic * s + pn * j.cap * j.br.rate(an_);
      if (j.conductance != 0.0) cur += pn * j.conductance * j.br.rate(wn_);
      inject(j.br, cur);
      if (with_jacobian) {
        const double g = j.ic * std::cos(d);
        const int ua = j.br.a.unknown, ub = j.br.b.unknown;
        if (ua >= 0) jac_.add(model_.row(ua), model_.row(ua), g);
        if (ub >= 0) jac_.add(model_.row(ub), model_.row(ub), g);
        if (ua >= 0 && ub >= 0) {
          jac_.add(model_.row(ua), model_.row(ub), -g);
          jac_.add(model_.row(ub), model_.row(ua), -g);
        }
      }
    }
    for (const auto& ci : model_.coupled()) {
      const double i = x_[static_cast<std::size_t>(ci.aux)];
      inject(ci.br, i);
      double r = pn / ci.inductance * ci.br.drop(x_) - i;
      for (auto [other, m] : ci.partners) r -= m / ci.inductance * x_[static_cast<std::size_t>(other)];
      f_[model_.row(static_cast<std::size_t>(ci.aux))] += r;
    }
    const double env = ramp_envelope(t, settings_.ramp_time);
    for (const auto& s : model_.sources()) {
      const double v = s.sinusoidal
                           ? s.value * std::cos(kTwoPi * s.frequency * t + s.phase) * env
                           : s.value;
      inject(s.br, -v);
    }
    if (in_.unknown >= 0) f_[model_.row(in_.unknown)] -= drive_current(t);
    double m = 0.0;
    for (double v : f_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Returns Newton iterations used, or -1 on failure.
  int step(double h, double t, bool first) {
    const Coeffs c = coeffs(h, first);
    if (!lin_valid_ || c.alpha != lin_coeffs_.alpha || c.beta != lin_coeffs_.beta) build_linear(c);
    xold_ = x_;
    const std::size_t nn = model_.node_unknowns();
    for (std::size_t u = 0; u < nn; ++u) x_[u] = xold_[u] + h * w_[u] + 0.5 * h * h * a_[u];
    const double tol = settings_.newton_tolerance * model_.current_scale();
    for (int it = 0; it < settings_.max_newton_iters; ++it) {
      const double r = residual(c, t, true);
      last_residual_ = r;
      if (!std::isfinite(r)) return -1;
      if (r <= tol && it > 0) return it;
      if (!lu_.factorize(jac_)) return -1;
      for (std::size_t i = 0; i < f_.size(); ++i) rhs_[i] = -f_[i];
      lu_.solve(rhs_);
      for (std::size_t u = 0; u < x_.size(); ++u) x_[u] += rhs_[model_.row(u)];
    }
    const double r = residual(c, t, false);
    last_residual_ = r;
    return r <= tol ? settings_.max_newton_iters : -1;
  }

  const Netlist& net_;
  CircuitModel model_;
  DriveSpec drive_;
  SolverSettings settings_;
  NodeRef in_, out_;
  std::vector<DriveTone> drive_amp_;
  std::vector<std::string> channel_names_;
  std::vector<Channel> channels_;

  linalg::BandMatrix<double> jac_, lin_;
  linalg::BandedLU<double> lu_;
  Coeffs lin_coeffs_{};
  bool lin_valid_ = false;
  std::vector<double> f_, rhs_;
  std::vector<double> x_, xold_, w_, a_, wn_, an_;
  double last_residual_ = 0.0;
  SimulationStats stats_;
};

inline TimeSeries simulate(const Netlist& net, const DriveSpec& drive,
                           const SolverSettings& settings) {
  TransientSolver solver(net, drive, settings);
  return solver.run();
}

// ---------------------------------------------------------------------------
// Propagation time

/// First time |signal| exceeds `threshold_fraction` of its late-time peak
/// amplitude (maximum over the final quarter of the record).
inline double propagation_time(const TimeSeries& ts, double threshold_fraction = 0.05,
                               const std::string& signal = "i_out") {
  if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0))
    throw DomainError("threshold_fraction must lie in (0, 1)");
  const auto& y = ts[signal];
  if (y.size() < 4) throw DomainError("propagation_time: record too short");
  const double tend = ts.time.back();
  const double tlate = ts.time.front() + 0.75 * (tend - ts.time.front());
  double steady = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (ts.time[i] >= tlate) steady = std::max(steady, std::abs(y[i]));
  if (steady == 0.0) throw DomainError("propagation_time: no arrival (signal identically zero)");
  const double thr = threshold_fraction * steady;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (std::abs(y[i]) > thr) {
      if (i == 0) return ts.time[0];
      // Linear interpolation of the crossing.
      const double y0 = std::abs(y[i - 1]), y1 = std::abs(y[i]);
      const double f = (thr - y0) / (y1 - y0);
      return ts.time[i - 1] + f * (ts.time[i] - ts.time[i - 1]);
    }
  throw DomainError("propagation_time: signal never exceeds threshold");
}

}  // namespace jtwpa
