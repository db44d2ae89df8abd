// Acceptance criteria A1-A10. One PASS/FAIL line per criterion; the exit
// status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "jtwpa/analysis.hpp"
#include "jtwpa/device.hpp"
#include "jtwpa/hbal.hpp"
#include "jtwpa/spectral.hpp"
#include "jtwpa/transient.hpp"

using namespace jtwpa;

namespace {

constexpr double kPump = 4.415e9;
constexpr double kSignal = 4.215e9;

int failures = 0;

void verdict(const char* id, bool pass, const std::string& detail) {
  std::printf("%s %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs a criterion body; an exception is a failure with its message.
void criterion(const char* id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    verdict(id, false, std::string("exception: ") + e.what());
  }
}

TwpaDeviceSpec benchmark(FluxScheme scheme = FluxScheme::none, double flux = 0.0) {
  TwpaDeviceSpec d = snail250_device();
  d.flux_bias.scheme = scheme;
  d.flux_bias.target_flux = flux;
  return d;
}

SweepOptions lossless_options() {
  SweepOptions o;
  o.lossless = true;
  o.jobs = 1;
  return o;
}

// Gain interpolated linearly on a curve.
double interpolate(const GainCurve& c, double f) {
  const auto& p = c.points;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i].frequency >= f) {
      const double t = (f - p[i - 1].frequency) / (p[i].frequency - p[i - 1].frequency);
      return p[i - 1].gain_db + t * (p[i].gain_db - p[i - 1].gain_db);
    }
  throw LookupError("frequency outside curve");
}

// Contiguous band around the peak where gain exceeds `level` dB.
std::pair<double, double> band_above(const GainCurve& c, double level) {
  const BandSummary b = band_summary(c, 0.0);
  std::size_t ip = 0;
  while (c.points[ip].frequency != b.peak_frequency) ++ip;
  std::size_t lo = ip, hi = ip;
  while (lo > 0 && c.points[lo - 1].gain_db > level) --lo;
  while (hi + 1 < c.points.size() && c.points[hi + 1].gain_db > level) ++hi;
  return {c.points[lo].frequency, c.points[hi].frequency};
}

// LC tank step response error for the convergence-order check.
double tank_error(double steps_per_period) {
  const double l = 1e-9, cap = 1e-12, z = 2e6;
  Netlist net;
  const int a = net.add_node();
  net.add_port(a, z, 1);
  net.add_port(a, z, 2);
  net.add_inductor(a, net.ground, l);
  net.add_capacitor(a, net.ground, cap);
  const double period = kTwoPi * std::sqrt(l * cap);
  DriveSpec d;
  d.tones = {{0.0, -40.0, 0.0}};
  d.total_time = 10.0 * period;
  SolverSettings s;
  s.time_step = period / steps_per_period;
  s.ramp_time = 0.0;
  const auto ts = simulate(net, d, s);
  const double i = norton_amplitude(-40.0, z);
  const double alpha = 1.0 / (z * cap);  // 1 / (2 R C) with R = z / 2
  const double w0 = 1.0 / std::sqrt(l * cap);
  const double wd = std::sqrt(w0 * w0 - alpha * alpha);
  double err = 0.0;
  for (std::size_t k = 0; k < ts.time.size(); ++k) {
    const double t = ts.time[k];
    err = std::max(err, std::abs(ts["v_in"][k] - i / (cap * wd) * std::exp(-alpha * t) * std::sin(wd * t)));
  }
  return err;
}

}  // namespace

int main() {
  const auto t_start = std::chrono::steady_clock::now();
  const OperatingPoint op;  // 4.415 GHz, -79 dBm, -110 dBm signal, flux 0
  const std::vector<double> grid = linear_grid(0.0, 10e9, 51);

  // A1: pump-only arrival time on the RSJ benchmark.
  criterion("A1", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    DriveSpec d;
    d.tones = {{kPump, -79.0, 0.0}};
    d.total_time = 20e-9;
    const double t = propagation_time(simulate(build_snail_twpa(benchmark()), d, {}));
    const double wall = seconds_since(t0);
    verdict("A1", t >= 4.3e-9 && t <= 4.6e-9 && wall <= 300.0,
            fmt("arrival %.3f ns (window [4.3, 4.6] ns), %.1f s", t * 1e9, wall));
  });

  // A2 and the Parseval part of A8 share the benchmark pump+signal record.
  TimeSeries record;
  double window = propagation_time_estimate(benchmark(), 0.0);
  criterion("A2", [&] {
    DriveSpec d;
    d.tones = {{kPump, -79.0, 0.0}, {kSignal, -110.0, 0.0}};
    d.total_time = 20e-9;
    record = simulate(build_snail_twpa(benchmark()), d, {});
    const Spectrum s = spectrum(record, "i_out", window);
    std::vector<double> mags;
    for (const auto& a : s.amplitude) mags.push_back(std::abs(a));
    std::vector<double> sorted = mags;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double fi = idler_frequency(kPump, kSignal);
    const auto k = static_cast<std::size_t>(std::llround(fi / s.df()));
    double peak = 0.0;
    for (std::size_t j = k - 1; j <= k + 1; ++j) peak = std::max(peak, mags[j]);
    const double above = 20.0 * std::log10(peak / median);
    verdict("A2", above >= 20.0,
            fmt("idler %.3f GHz is %.1f dB above the median floor (need >= 20 dB)", fi * 1e-9, above));
  });

  criterion("A3", [&] {
    const NormalizationScheme n;
    const double flux = normalize(kFluxQuantum, "flux", n);
    const double ten_units = denormalize(10.0, "time", n);
    const double rn = ambegaokar_baratoff_rn(1.47e-6, 0.33e-3);
    const double leff = snail_effective_inductance(snail250_device().cell, 0.0);
    const bool pass = flux == kTwoPi && std::abs(ten_units - 3.29e-12) <= 0.01e-12 &&
                      std::abs(rn / 224.5 - 1.0) <= 0.01 && std::abs(leff / 584e-12 - 1.0) <= 0.01;
    verdict("A3", pass,
            fmt("Phi0 -> %.15g, 10 units = %.4f ps, R_N = %.2f ohm, L_eff = %.1f pH", flux, ten_units * 1e12, rn,
                leff * 1e12));
  });

  // Lossless benchmark HB pump state, shared by A4 and the sweep timing.
  criterion("A4", [&] {
    const SweepOptions o = lossless_options();
    const GainCurve hb = sweep_gain(benchmark(), op, {kSignal}, GainMethod::harmonic_balance, o);
    const TransientGainSetup setup = prepare_transient_gain(benchmark(), op, o);
    const double tr = transient_gain_point(setup, op, kSignal, o);
    const double diff = std::abs(tr - hb.at(kSignal));
    verdict("A4", diff <= 1.0,
            fmt("f_s = 4.215 GHz: transient %.2f dB, harmonic balance %.2f dB, |diff| %.2f dB (need <= 1)", tr,
                hb.at(kSignal), diff));
  });

  // A10 timings; the curves also feed A5.
  GainCurve hb_curve, tr_curve;
  double hb_time = 0.0, tr_time = 0.0;
  criterion("A10", [&] {
    const SweepOptions o = lossless_options();
    auto t0 = std::chrono::steady_clock::now();
    hb_curve = sweep_gain(benchmark(), op, grid, GainMethod::harmonic_balance, o);
    hb_time = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    tr_curve = sweep_gain(benchmark(), op, grid, GainMethod::transient, o);
    tr_time = seconds_since(t0);
    verdict("A10", hb_time < tr_time,
            fmt("51-point sweeps, one thread: harmonic balance %.1f s (%zu points), transient %.1f s (%zu points)",
                hb_time, hb_curve.points.size(), tr_time, tr_curve.points.size()));
  });

  criterion("A5", [&] {
    if (hb_curve.points.empty() || tr_curve.points.empty()) throw DomainError("numerical sweeps unavailable");
    const CmeParams p = make_cme_params(benchmark(), kPump, -79.0);
    GainCurve cme;
    for (const auto& pt : hb_curve.points) cme.points.push_back({pt.frequency, cme_gain(p, pt.frequency)});
    const BandSummary cb = band_summary(cme);
    bool pass = true;
    std::string detail = fmt("CME -3 dB band %.2f GHz;", cb.bandwidth() * 1e-9);
    for (const GainCurve* c : {&hb_curve, &tr_curve}) {
      const auto [lo, hi] = band_above(*c, 1.0);
      const double centre = 0.5 * (lo + hi);
      const double g_num = interpolate(*c, centre);
      const double g_cme = cme_gain(p, centre);
      const BandSummary nb = band_summary(*c);
      const bool ok = g_cme >= g_num && nb.bandwidth() < cb.bandwidth();
      pass = pass && ok;
      detail += fmt(" %s: centre %.2f GHz CME %.2f dB vs %.2f dB, -3 dB band %.2f GHz%s;",
                    std::string(to_string(c->method)).c_str(), centre * 1e-9, g_cme, g_num,
                    nb.bandwidth() * 1e-9, ok ? "" : " (fails)");
    }
    verdict("A5", pass, detail);
  });

  criterion("A6", [&] {
    DriveSpec d;
    d.tones = {{kPump, -79.0, 0.0}};
    d.total_time = 20e-9;
    const TwpaDeviceSpec alt = benchmark(FluxScheme::phase_source, 0.25);
    TwpaDeviceSpec uni = alt;
    uni.alternating_polarity = false;
    const double ws = propagation_time_estimate(alt, 0.25);
    const double p_alt = tone_power(simulate(build_snail_twpa(alt), d, {}), "i_out", 2.0 * kPump, ws, 50.0);
    const double p_uni = tone_power(simulate(build_snail_twpa(uni), d, {}), "i_out", 2.0 * kPump, ws, 50.0);
    verdict("A6", p_uni - p_alt >= 20.0,
            fmt("2 f_p output at 0.25 flux: uniform %.1f dBm, alternating %.1f dBm, difference %.1f dB", p_uni,
                p_alt, p_uni - p_alt));
  });

  criterion("A7", [&] {
    const Netlist net = build_snail_twpa(benchmark(), {true});
    HbSettings s;
    s.jobs = 1;
    const PumpSteadyState st = solve_pump(net, kPump, -200.0, s);
    s.frequencies = default_hb_grid();
    const SmallSignalSolution sol = small_signal_sparams(st, net, s);
    double worst = 0.0;
    for (const auto& p : sol.points) worst = std::max(worst, std::abs(std::norm(p.s11) + std::norm(p.s21) - 1.0));

    DriveSpec d;
    d.tones = {{kSignal, -130.0, 0.0}};
    d.total_time = 10e-9;
    const auto lo = simulate(build_snail_twpa(benchmark()), d, {});
    d.tones[0].power_dbm = -110.0;
    const auto hi = simulate(build_snail_twpa(benchmark()), d, {});
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < lo.time.size(); ++k) {
      const double e = hi["i_out"][k] - 10.0 * lo["i_out"][k];
      num += e * e;
      den += hi["i_out"][k] * hi["i_out"][k];
    }
    const double sup = std::sqrt(num / den);
    verdict("A7", worst <= 1e-6 && sup <= 1e-3,
            fmt("max ||S11|^2+|S21|^2-1| = %.2e over %zu points (%zu skipped); superposition error %.2e", worst,
                sol.points.size(), sol.diagnostics.size(), sup));
  });

  criterion("A8", [&] {
    TwpaDeviceSpec small = benchmark(FluxScheme::phase_source, 0.3);
    small.n_cells = 3;
    const Netlist net = build_snail_twpa(small, {true});
    HbSettings s;
    s.n_pump_harmonics = 3;
    std::vector<double> x(hb_unknown_count(net, s));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.3 * std::sin(1.7 * static_cast<double>(i) + 0.4);
    const auto probe = probe_hb_jacobian(net, kPump, -79.0, x, s);
    double scale = 0.0, err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x.size(); ++j) {
        scale = std::max(scale, std::abs(probe.analytic[i][j]));
        err = std::max(err, std::abs(probe.analytic[i][j] - probe.finite_difference[i][j]));
      }
    const double jac = err / scale;

    const double e1 = tank_error(100.0), e2 = tank_error(200.0);
    const double order = std::log2(e1 / e2);

    double parseval = 1.0;
    if (!record.time.empty()) {
      const Spectrum sp = spectrum(record, "i_out", window);
      double dt = 0.0, t0 = 0.0;
      const auto samples = window_samples(record, "i_out", window, dt, t0);
      double energy = 0.0, spec = 0.0;
      for (double v : samples) energy += v * v * dt;
      for (const auto& a : sp.amplitude) spec += std::norm(a);
      parseval = std::abs(spec / sp.df() / energy - 1.0);
    }
    verdict("A8", jac <= 1e-6 && std::abs(order - 2.0) <= 0.15 && parseval <= 1e-9,
            fmt("Jacobian rel. error %.2e; LC convergence order %.3f; Parseval rel. error %.2e", jac, order,
                parseval));
  });

  criterion("A9", [&] {
    OperatingPoint half = op;
    half.flux = 0.5;
    half.pump_power_dbm = -78.0;
    const SweepOptions o = lossless_options();
    TwpaDeviceSpec ps = benchmark(FluxScheme::phase_source, 0.5);
    TwpaDeviceSpec ml = benchmark(FluxScheme::mutual_loop, 0.5);
    bool pass = true;
    std::string detail;
    double at_signal[2] = {0.0, 0.0};
    int idx = 0;
    for (const TwpaDeviceSpec* dev : {&ps, &ml}) {
      const GainCurve c = sweep_gain(*dev, half, grid, GainMethod::transient, o);
      const BandSummary b = band_summary(c);
      const bool near = std::abs(b.peak_frequency - kPump) <= 1.0e9;
      const bool ok = b.peak_gain_db > 0.0 && near;
      pass = pass && ok;
      const TransientGainSetup setup = prepare_transient_gain(*dev, half, o);
      at_signal[idx] = transient_gain_point(setup, half, kSignal, o);
      detail += fmt("%s: peak %.2f dB at %.2f GHz%s, %.2f dB at 4.215 GHz; ",
                    idx == 0 ? "phase-source" : "mutual-loop", b.peak_gain_db, b.peak_frequency * 1e-9,
                    ok ? "" : " (fails)", at_signal[idx]);
      ++idx;
    }
    const double diff = std::abs(at_signal[0] - at_signal[1]);
    pass = pass && diff <= 1.0;
    detail += fmt("scheme difference %.3f dB", diff);
    verdict("A9", pass, detail);
  });

  std::printf("acceptance: %d of 10 criteria failed, %.0f s total\n", failures, seconds_since(t_start));
  return failures == 0 ? 0 : 1;
}
