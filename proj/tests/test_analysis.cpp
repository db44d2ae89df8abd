#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "jtwpa/analysis.hpp"

using namespace jtwpa;
using Catch::Approx;

namespace {

constexpr double kPump = 4.415e9;

TwpaDeviceSpec unbiased() {
  TwpaDeviceSpec d = snail250_device();
  d.flux_bias.scheme = FluxScheme::none;
  return d;
}

CmeParams benchmark_cme(double dbm = -79.0) { return make_cme_params(unbiased(), kPump, dbm); }

SweepOptions lossless_options() {
  SweepOptions o;
  o.lossless = true;
  o.jobs = 1;
  return o;
}

}  // namespace

TEST_CASE("Idler frequency") {
  CHECK(idler_frequency(4.415e9, 4.215e9) == Approx(4.615e9).epsilon(1e-15));
  CHECK(idler_frequency(3e9, 3e9) == 3e9);
  for (double fs : {0.5e9, 4.215e9, 8.3e9})
    CHECK(idler_frequency(kPump, idler_frequency(kPump, fs)) == Approx(fs).epsilon(1e-15));
}

TEST_CASE("CME gain limits and symmetry") {
  const CmeParams quiet = benchmark_cme(-200.0);
  for (double fs : {1e9, 4.0e9, 4.3e9, 7e9}) CHECK(cme_gain(quiet, fs) == Approx(0.0).margin(1e-9));

  const CmeParams p = benchmark_cme();
  for (double fs : {1e9, 3.1e9, 3.9e9, 4.215e9, 4.4e9}) {
    INFO("f_s " << fs);
    CHECK(cme_gain(p, fs) == Approx(cme_gain(p, idler_frequency(kPump, fs))).margin(1e-9));
  }
  CHECK_THROWS_AS(cme_gain(p, kPump), DomainError);
  CHECK(cme_gain(p, 2.0 * kPump + 1e9) == 0.0);  // idler below zero frequency

  SECTION("maximum near the pump") {
    double best = -1.0, fbest = 0.0;
    for (int i = 1; i < 1000; ++i) {
      const double fs = 0.01e9 * i;
      if (detail::same_frequency(fs, kPump)) continue;
      const double g = cme_gain(p, fs);
      if (g > best) best = g, fbest = fs;
    }
    CHECK(std::abs(fbest - kPump) < 0.5e9);
    CHECK(best > 6.0);
  }
}

TEST_CASE("CME gain is continuous across the g^2 sign change") {
  using detail::sinhc_squared;
  for (double e : {1e-12, 1e-9, 1e-8, 2e-8, 1e-6}) {
    CHECK(sinhc_squared(e) == Approx(1.0 + e / 3.0).epsilon(1e-12));
    CHECK(sinhc_squared(-e) == Approx(1.0 - e / 3.0).epsilon(1e-12));
  }
  CHECK(sinhc_squared(1.0) == Approx(std::pow(std::sinh(1.0), 2)).epsilon(1e-15));
  CHECK(sinhc_squared(-1.0) == Approx(std::pow(std::sin(1.0), 2)).epsilon(1e-15));

  // Fine scan from the band interior to well outside it: the exponential and
  // oscillatory branches meet without a jump.
  const CmeParams p = benchmark_cme();
  double prev = cme_gain(p, 2.0e9);
  double worst = 0.0;
  for (double fs = 2.0e9 + 1e4; fs < 4.4e9; fs += 1e4) {
    const double g = cme_gain(p, fs);
    worst = std::max(worst, std::abs(g - prev));
    prev = g;
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("Band summary of a synthetic curve") {
  GainCurve c;
  for (int i = 0; i <= 10; ++i) c.points.push_back({1e9 * i, 10.0 - std::abs(i - 4.0)});
  const BandSummary b = band_summary(c);
  CHECK(b.peak_frequency == 4e9);
  CHECK(b.peak_gain_db == 10.0);
  CHECK(b.lower == Approx(1e9));
  CHECK(b.upper == Approx(7e9));
  CHECK(b.bandwidth() == Approx(6e9));
  CHECK(c.at(3e9) == 9.0);
  CHECK_THROWS_AS(c.at(3.5e9), LookupError);
  CHECK_THROWS_AS(band_summary(GainCurve{}), DomainError);
}

TEST_CASE("Gain curve CSV round trip") {
  GainCurve c;
  c.method = GainMethod::harmonic_balance;
  c.op.flux = 0.25;
  c.op.pump_power_dbm = -78.5;
  c.notes = {{"n_modes", "10"}};
  c.points = {{1e9, 0.125}, {2e9, 3.0 / 7.0}};
  std::stringstream ss;
  write_csv(ss, c);
  const GainCurve r = read_gain_curve_csv(ss);
  CHECK(r.method == c.method);
  CHECK(r.op.flux == c.op.flux);
  CHECK(r.op.pump_power_dbm == c.op.pump_power_dbm);
  CHECK(r.op.pump_frequency == c.op.pump_frequency);
  CHECK(r.notes == c.notes);
  REQUIRE(r.points.size() == 2);
  CHECK(r.points[1].gain_db == c.points[1].gain_db);
  std::istringstream bad("f_Hz,gain\n1,2\n");
  CHECK_THROWS_AS(read_gain_curve_csv(bad), DomainError);
  CHECK(gain_method_from_string("harmonic-balance") == GainMethod::harmonic_balance);
  CHECK(to_string(GainMethod::cme) == "cme");
  CHECK_THROWS_AS(gain_method_from_string("fdtd"), DomainError);
}

TEST_CASE("CME sweep skips the pump and is deterministic") {
  OperatingPoint op;
  const auto grid = linear_grid(0.0, 10e9, 51);
  const GainCurve a = sweep_gain(unbiased(), op, grid, GainMethod::cme);
  const GainCurve b = sweep_gain(unbiased(), op, grid, GainMethod::cme);
  CHECK(a.points.size() == 51);  // 4.415 GHz is not on this grid
  for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i].gain_db == b.points[i].gain_db);
  const GainCurve c = sweep_gain(unbiased(), op, {4.0e9, kPump, 5.0e9}, GainMethod::cme);
  CHECK(c.points.size() == 2);
  REQUIRE(c.diagnostics.size() == 1);
  CHECK(c.diagnostics[0].find("skipped") != std::string::npos);
  CHECK_THROWS_AS(sweep_gain(unbiased(), op, {}, GainMethod::cme), DomainError);
}

TEST_CASE("Pump-off benchmark shows no gain") {
  OperatingPoint op;
  op.pump_power_dbm = -200.0;
  const std::vector<double> grid{1.0e9, 2.5e9, 4.215e9, 6.0e9, 8.0e9};
  const SweepOptions opt = lossless_options();
  const GainCurve tr = sweep_gain(unbiased(), op, grid, GainMethod::transient, opt);
  REQUIRE(tr.points.size() == grid.size());
  for (const auto& p : tr.points) {
    INFO("f_s " << p.frequency);
    CHECK(p.gain_db <= 0.5);
    CHECK(p.gain_db > -1.5);  // mismatch ripple of 32.6 ohm against 50 ohm
  }
  const GainCurve again = sweep_gain(unbiased(), op, {4.215e9}, GainMethod::transient, opt);
  CHECK(again.at(4.215e9) == tr.at(4.215e9));
}

TEST_CASE("Settled pump-off transient gain matches the linear scattering oracle") {
  // A 50-cell line settles within a 20 ns record; a quarter step keeps the
  // trapezoidal phase error of the ripple pattern small at 8 GHz.
  TwpaDeviceSpec dev = unbiased();
  dev.n_cells = 50;
  OperatingPoint op;
  op.pump_power_dbm = -200.0;
  const std::vector<double> grid{1.0e9, 2.5e9, 4.215e9, 6.0e9, 8.0e9};
  SweepOptions opt = lossless_options();
  opt.transient.time_step /= 4.0;
  const GainCurve hb = sweep_gain(dev, op, grid, GainMethod::harmonic_balance, opt);
  TransientGainSetup setup = prepare_transient_gain(dev, op, opt);
  setup.window_start = 10e-9;
  for (double f : grid) {
    INFO("f_s " << f);
    CHECK(transient_gain_point(setup, op, f, opt) == Approx(hb.at(f)).margin(0.1));
  }
}

TEST_CASE("Matched lossless line transmits without gain") {
  // 20-cell LC ladder with sqrt(L / C) = 50 ohm and a cutoff far above 10 GHz.
  Netlist net;
  int prev = net.add_node();
  net.add_port(prev, 50.0, 1, "P1");
  net.add_capacitor(prev, net.ground, 25e-15);
  for (int i = 0; i < 20; ++i) {
    const int n = net.add_node();
    net.add_inductor(prev, n, 125e-12);
    net.add_capacitor(n, net.ground, i == 19 ? 25e-15 : 50e-15);
    prev = n;
  }
  net.add_port(prev, 50.0, 2, "P2");
  const Netlist through = build_through(50.0);
  for (double fs : {1e9, 4.215e9}) {
    DriveSpec d;
    d.tones = {{fs, -110.0, 0.0}};
    d.total_time = 10e-9;
    SolverSettings s;
    s.time_step = 0.5e-12;
    const double g = gain_point(simulate(through, d, s), simulate(net, d, s), fs, 2e-9, 50.0);
    INFO("f_s " << fs);
    CHECK(g == Approx(0.0).margin(0.1));
  }
}

TEST_CASE("Benchmark record carries pump, signal and idler") {
  OperatingPoint op;
  SweepOptions opt = lossless_options();
  const TransientGainSetup setup = prepare_transient_gain(unbiased(), op, opt);
  CHECK(setup.window_start == Approx(propagation_time_estimate(unbiased(), 0.0)));
  TimeSeries both;
  const double g = transient_gain_point(setup, op, 4.215e9, opt, &both, {"v:10"});
  CHECK(both.has("v:10"));
  CHECK(g > 3.0);
  const double ws = setup.window_start;
  const double pump_out = tone_power(both, "i_out", kPump, ws, 50.0);
  INFO("pump at output " << pump_out << " dBm");
  CHECK(std::abs(pump_out - op.pump_power_dbm) < 3.0);
  CHECK(tone_power(both, "i_out", 4.215e9, ws, 50.0) > -110.0);
  CHECK(tone_power(both, "i_out", 4.615e9, ws, 50.0) > -125.0);
  CHECK(tone_power(both, "i_out", 5.2e9, ws, 50.0) < tone_power(both, "i_out", 4.615e9, ws, 50.0) - 20.0);

  SECTION("live input reference") {
    SweepOptions live = opt;
    live.reference = InputReference::live;
    const double gl = transient_gain_point(setup, op, 4.215e9, live);
    INFO("calibration " << g << " live " << gl);
    CHECK(std::abs(gl - g) < 1.5);
  }
}

TEST_CASE("Record helpers") {
  TimeSeries a;
  a.time = {0.0, 1.0};
  a.add_channel("i_out", {1.0, 2.0});
  TimeSeries b = a;
  b.channels[0] = {0.5, 0.5};
  const TimeSeries d = subtract(a, b);
  CHECK(d["i_out"][1] == 1.5);
  b.time = {0.0, 2.0};
  CHECK_THROWS_AS(subtract(a, b), DomainError);
  CHECK(window_start_from_string("measured") == WindowStart::measured);
  CHECK(input_reference_from_string("live") == InputReference::live);
  CHECK_THROWS_AS(window_start_from_string("later"), DomainError);
}
