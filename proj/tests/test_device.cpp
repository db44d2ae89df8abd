#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "jtwpa/device.hpp"

using namespace jtwpa;
using Catch::Approx;

namespace {

SnailParams benchmark_cell() { return snail250_device().cell; }

// Independent potential for the oracles, folded the same way.
double u_ref(double phi, double flux, const SnailParams& p) {
  double f = flux - std::round(flux);
  const double ext = 2.0 * std::numbers::pi * f;
  return -p.junction_ratio * std::cos(phi) - p.n_large * std::cos((ext - phi) / p.n_large);
}

// Dense scan then bisection on a central-difference derivative.
double oracle_minimum(const SnailParams& p, double flux) {
  const int n = 20001;
  const double lo = -std::numbers::pi, hi = std::numbers::pi;
  int best = 0;
  double ub = u_ref(lo, flux, p);
  for (int i = 1; i < n; ++i) {
    const double u = u_ref(lo + (hi - lo) * i / (n - 1), flux, p);
    if (u < ub) {
      ub = u;
      best = i;
    }
  }
  auto d = [&](double x) {
    const double h = 1e-6;
    return (u_ref(x + h, flux, p) - u_ref(x - h, flux, p)) / (2 * h);
  };
  double a = lo + (hi - lo) * std::max(0, best - 1) / (n - 1);
  double b = lo + (hi - lo) * std::min(n - 1, best + 1) / (n - 1);
  if (d(a) > 0.0 || d(b) < 0.0) return lo + (hi - lo) * best / (n - 1);
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    (d(m) > 0.0 ? b : a) = m;
  }
  return 0.5 * (a + b);
}

// Phase difference wrapped into (-pi, pi].
double wrapped(double a, double b) { return std::remainder(a - b, 2.0 * std::numbers::pi); }

}  // namespace

TEST_CASE("Ambegaokar-Baratoff normal resistance") {
  CHECK(ambegaokar_baratoff_rn(1.47e-6, 0.33e-3) == Approx(224.5).epsilon(0.001));
  CHECK(ambegaokar_baratoff_rn(1.0e-6, 0.33e-3) == Approx(330.0).epsilon(1e-12));
  CHECK(ambegaokar_baratoff_rn(2.94e-6, 0.33e-3) ==
        Approx(0.5 * ambegaokar_baratoff_rn(1.47e-6, 0.33e-3)).epsilon(1e-12));
  for (double ic : {0.1e-6, 1.47e-6, 7e-6})
    CHECK(ambegaokar_baratoff_rn(ic, 0.33e-3) * ic == Approx(0.33e-3).epsilon(1e-14));
  CHECK_THROWS_AS(ambegaokar_baratoff_rn(0.0, 0.33e-3), DomainError);
  CHECK_THROWS_AS(ambegaokar_baratoff_rn(1e-6, -1.0), DomainError);
}

TEST_CASE("SNAIL potential symmetries") {
  const SnailParams p = benchmark_cell();
  for (double phi : {-2.0, -0.3, 0.0, 0.7, 2.5}) {
    for (double ext : {-2.0, 0.0, 1.1, 3.0}) {
      CHECK(snail_potential(phi, ext, p) == Approx(snail_potential(-phi, -ext, p)).margin(1e-12));
      CHECK(snail_potential(phi, ext + 2 * std::numbers::pi, p) ==
            Approx(snail_potential(phi, ext, p)).margin(1e-12));
    }
  }
  CHECK(snail_minimum(p, 0.0) == Approx(0.0).margin(1e-12));
}

TEST_CASE("SNAIL minimizer against scan-and-bisection oracle") {
  const SnailParams p = benchmark_cell();
  const double phi = snail_minimum(p, 0.5);
  CHECK(std::abs(wrapped(phi, oracle_minimum(p, 0.5))) < 1e-7);
  CHECK(std::abs(snail_potential_derivative(1, phi, std::numbers::pi, p)) < 1e-10);

  for (int i = 0; i <= 100; ++i) {
    const double flux = -0.5 + 0.01 * i;
    const double x = snail_minimum(p, flux);
    INFO("flux " << flux);
    CHECK(std::abs(snail_potential_derivative(1, x, 2 * std::numbers::pi * flux, p)) < 1e-10);
    CHECK(std::abs(wrapped(x, oracle_minimum(p, flux))) < 1e-6);
  }
}

TEST_CASE("Effective inductance") {
  const SnailParams p = benchmark_cell();
  const double lj = kReducedFluxQuantum / 1.47e-6;
  CHECK(lj == Approx(223.9e-12).epsilon(1e-3));
  // Zero flux: (3 L_J) parallel (L_J / r).
  const double parallel = 1.0 / (1.0 / (3.0 * lj) + 1.0 / (lj / 0.05));
  CHECK(snail_effective_inductance(p, 0.0) == Approx(parallel).epsilon(1e-12));
  CHECK(snail_effective_inductance(p, 0.0) == Approx(584e-12).epsilon(0.01));

  SECTION("half flux quantum from finite-difference curvature") {
    const double x = oracle_minimum(p, 0.5);
    const double h = 1e-4;
    const double curv = (u_ref(x + h, 0.5, p) - 2 * u_ref(x, 0.5, p) + u_ref(x - h, 0.5, p)) / (h * h);
    CHECK(snail_effective_inductance(p, 0.5) == Approx(lj / curv).epsilon(1e-5));
  }
  SECTION("even and periodic in flux") {
    for (int i = 0; i <= 100; ++i) {
      const double f = -0.5 + 0.01 * i;
      const double l = snail_effective_inductance(p, f);
      CHECK(l > 0.0);
      CHECK(l == Approx(snail_effective_inductance(p, -f)).epsilon(1e-9));
      CHECK(l == Approx(snail_effective_inductance(p, f + 1.0)).epsilon(1e-9));
    }
  }
}

TEST_CASE("Taylor coefficients") {
  const SnailParams p = benchmark_cell();
  const auto c0 = snail_taylor_coefficients(p, 0.0, 4);
  REQUIRE(c0.size() == 3);
  CHECK(c0[1] == Approx(0.0).margin(1e-14));

  SECTION("c4 at zero flux against central finite differences") {
    // 5-point fourth difference, O(h^2), with one Richardson step.
    auto u = [&](double x) { return u_ref(x, 0.0, p); };
    auto fd4 = [&](double h) {
      return (u(2 * h) - 4 * u(h) + 6 * u(0) - 4 * u(-h) + u(-2 * h)) / (h * h * h * h);
    };
    const double d4 = (4.0 * fd4(5e-3) - fd4(1e-2)) / 3.0;
    CHECK(c0[2] == Approx(d4).epsilon(1e-5));
    // Closed form: u''''(0) = -(r + 1/n^3).
    CHECK(c0[2] == Approx(-(0.05 + 1.0 / 27.0)).epsilon(1e-12));
  }
  SECTION("parity over the flux grid") {
    for (int i = 0; i <= 100; ++i) {
      const double f = -0.5 + 0.01 * i;
      if (std::abs(std::abs(f) - 0.5) < 1e-12) continue;
      const auto a = snail_taylor_coefficients(p, f, 4);
      const auto b = snail_taylor_coefficients(p, -f, 4);
      INFO("flux " << f);
      CHECK(a[0] > 0.0);
      CHECK(a[0] == Approx(b[0]).margin(1e-10));
      CHECK(a[1] == Approx(-b[1]).margin(1e-10));
      CHECK(a[2] == Approx(b[2]).margin(1e-10));
    }
  }
  SECTION("coefficients are derivatives of the potential at the minimum") {
    const double x = oracle_minimum(p, 0.3);
    const double h = 1e-3;
    auto u = [&](double d) { return u_ref(x + d, 0.3, p); };
    const auto c = snail_taylor_coefficients(p, 0.3, 3);
    const double d3 = (u(2 * h) - 2 * u(h) + 2 * u(-h) - u(-2 * h)) / (2 * h * h * h);
    CHECK(c[1] == Approx(d3).epsilon(1e-4));
  }
  CHECK_THROWS_AS(snail_taylor_coefficients(p, 0.0, 1), DomainError);
}

TEST_CASE("Unstable configuration is reported") {
  // r = 1/n at half flux: the minimum at phi = pi is quartic, c2 = 0.
  SnailParams p = benchmark_cell();
  p.junction_ratio = 1.0 / 3.0;
  CHECK_THROWS_AS(snail_effective_inductance(p, 0.5), UnstableConfigurationError);
}

TEST_CASE("Normalization scheme") {
  const NormalizationScheme s;
  CHECK(normalize(kFluxQuantum, "flux", s) == kTwoPi);
  CHECK(normalize(3.29e-12, "time", s) == Approx(10.0).margin(0.01 / 0.329));
  CHECK(denormalize(10.0, "time", s) == Approx(3.29e-12).margin(0.01e-12));
  CHECK(s.inductance_norm() == Approx(329.1e-12).epsilon(1e-3));
  CHECK(normalize(584e-12, "inductance", s) == Approx(584.0 / 329.1).epsilon(1e-3));
  CHECK(s.capacitance_norm() * s.resistance_norm * s.resistance_norm ==
        Approx(s.inductance_norm()).epsilon(1e-14));
  CHECK(s.angular_frequency_norm() * s.time_norm() == Approx(1.0).epsilon(1e-14));
  for (const char* k : {"flux", "current", "voltage", "resistance", "inductance", "capacitance",
                        "angular-frequency", "time"}) {
    const double x = 1.2345e-7;
    CHECK(denormalize(normalize(x, k, s), k, s) == Approx(x).epsilon(1e-12));
  }
  CHECK_THROWS_AS(normalize(1.0, "mass", s), DomainError);
}

TEST_CASE("Benchmark device summary values") {
  const TwpaDeviceSpec d = snail250_device();
  CHECK(*d.cell.large_junction.normal_resistance == Approx(224.5).epsilon(0.01));
  CHECK(propagation_time_estimate(d, 0.0) == Approx(4.48e-9).epsilon(0.005));
  CHECK(characteristic_impedance(d, 0.0) == Approx(32.6).epsilon(0.005));
  CHECK(fold_flux(0.75) == Approx(-0.25));
  CHECK(fold_flux(0.5) == Approx(0.5));
  CHECK(fold_flux(-0.5) == Approx(-0.5));
}

TEST_CASE("Device validation") {
  TwpaDeviceSpec d = snail250_device();
  d.cell.ground_capacitance = -1e-15;
  CHECK_THROWS_AS(d.validate(), DomainError);
  d = snail250_device();
  d.cell.junction_ratio = 1.5;
  CHECK_THROWS_AS(d.validate(), DomainError);
  d = snail250_device();
  d.n_cells = 0;
  CHECK_THROWS_AS(d.validate(), DomainError);
}
