#pragma once

// SNAIL element physics: potential, curvature at the minimum, Taylor
// coefficients, junction normal resistance and the dimensionless unit system
// used by phase-based circuit simulators.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jtwpa/errors.hpp"
#include "jtwpa/units.hpp"

namespace jtwpa {

struct JunctionParams {
  double critical_current = 0.0;  // A
  double capacitance = 0.0;       // F
  std::optional<double> normal_resistance;  // Ohm; absent means lossless

  void validate() const {
    if (!(critical_current > 0.0) || !std::isfinite(critical_current))
      throw DomainError("junction critical_current must be > 0");
    if (!(capacitance >= 0.0) || !std::isfinite(capacitance))
      throw DomainError("junction capacitance must be >= 0");
    if (normal_resistance && !(*normal_resistance > 0.0))
      throw DomainError("junction normal_resistance must be > 0 when present");
  }
};

struct SnailParams {
  JunctionParams large_junction;
  double junction_ratio = 0.05;  // r, small / large
  int n_large = 3;
  double ground_capacitance = 0.0;  // F per cell

  void validate() const {
    large_junction.validate();
    if (!(junction_ratio > 0.0 && junction_ratio < 1.0))
      throw DomainError("junction_ratio must lie in (0, 1)");
    if (n_large < 1) throw DomainError("n_large must be >= 1");
    if (!(ground_capacitance >= 0.0) || !std::isfinite(ground_capacitance))
      throw DomainError("ground_capacitance must be >= 0");
  }
};

enum class FluxScheme { none, phase_source, mutual_loop };

inline std::string_view to_string(FluxScheme s) {
  switch (s) {
    case FluxScheme::none: return "none";
    case FluxScheme::phase_source: return "phase-source";
    case FluxScheme::mutual_loop: return "mutual-loop";
  }
  return "none";
}

inline FluxScheme flux_scheme_from_string(std::string_view s) {
  if (s == "none") return FluxScheme::none;
  if (s == "phase-source") return FluxScheme::phase_source;
  if (s == "mutual-loop") return FluxScheme::mutual_loop;
  throw DomainError("unknown flux-bias scheme '" + std::string(s) + "'");
}

/// External flux bias. For the mutual-loop scheme the coupling M is derived
/// from `dc_current_per_half_quantum`; if that needs k > 1 the coupling is
/// clamped to k = 1 and the bias current recomputed, unless `strict_current`
/// is set, in which case the build fails.
struct FluxBias {
  FluxScheme scheme = FluxScheme::phase_source;
  double target_flux = 0.0;  // units of Phi0
  double l_add = 0.1e-12;    // H
  double l_ext = 1.6e-6;     // H
  double dc_current_per_half_quantum = 2.5e-6;  // A, magnitude
  bool strict_current = false;

  void validate() const {
    if (!std::isfinite(target_flux)) throw DomainError("target_flux must be finite");
    if (scheme == FluxScheme::mutual_loop) {
      if (!(l_add > 0.0) || !(l_ext > 0.0))
        throw DomainError("mutual-loop bias needs l_add > 0 and l_ext > 0");
      if (!(dc_current_per_half_quantum > 0.0))
        throw DomainError("dc_current_per_half_quantum must be > 0");
    }
  }
};

struct TwpaDeviceSpec {
  SnailParams cell;
  int n_cells = 250;
  double port_impedance = 50.0;
  FluxBias flux_bias;
  bool alternating_polarity = true;

  void validate() const {
    cell.validate();
    if (n_cells < 1) throw DomainError("n_cells must be >= 1");
    if (!(port_impedance > 0.0)) throw DomainError("port_impedance must be > 0");
    flux_bias.validate();
  }
};

/// Folds a flux in units of Phi0 into [-0.5, 0.5].
inline double fold_flux(double flux) {
  double f = flux - std::round(flux);
  if (f == -0.5 && flux > 0.0) f = 0.5;
  if (f == 0.5 && flux < 0.0) f = -0.5;
  return f;
}

/// Normal resistance from the Ambegaokar-Baratoff product Ic*Rn (in V).
inline double ambegaokar_baratoff_rn(double critical_current, double gap_voltage_product) {
  if (!(critical_current > 0.0) || !(gap_voltage_product > 0.0))
    throw DomainError("ambegaokar_baratoff_rn: arguments must be positive");
  return gap_voltage_product / critical_current;
}

/// Folds an external phase into [-pi, pi].
inline double fold_phase(double external_phase) {
  return kTwoPi * fold_flux(external_phase / kTwoPi);
}

// SNAIL potential in units of the large-junction Josephson energy, as a
// function of the small-junction phase:
//   u(phi) = -r cos(phi) - n cos((phi_ext - phi) / n)
// phi_ext is folded into [-pi, pi] first, which makes u periodic in phi_ext.

inline double snail_potential(double phase, double external_phase, const SnailParams& p) {
  const double n = p.n_large;
  const double ext = fold_phase(external_phase);
  return -p.junction_ratio * std::cos(phase) - n * std::cos((ext - phase) / n);
}

/// m-th derivative of the SNAIL potential with respect to the phase.
inline double snail_potential_derivative(int order, double phase, double external_phase,
                                         const SnailParams& p) {
  const double n = p.n_large;
  const double shift = order * std::numbers::pi / 2.0;
  const double arm = (fold_phase(external_phase) - phase) / n;
  return -p.junction_ratio * std::cos(phase + shift) -
         n * std::pow(-1.0 / n, order) * std::cos(arm + shift);
}

/// Location of the potential minimum (small-junction phase) for a flux in
/// units of Phi0. Grid scan over [-pi, pi] then safeguarded Newton on u'.
inline double snail_minimum(const SnailParams& p, double external_flux) {
  const double ext = kTwoPi * fold_flux(external_flux);
  constexpr int kGrid = 721;
  const double lo = -std::numbers::pi, hi = std::numbers::pi;
  const double step = (hi - lo) / (kGrid - 1);
  int best = 0;
  double ubest = snail_potential(lo, ext, p);
  for (int i = 1; i < kGrid; ++i) {
    const double u = snail_potential(lo + i * step, ext, p);
    if (u < ubest) {
      ubest = u;
      best = i;
    }
  }
  double a = lo + std::max(0, best - 1) * step;
  double b = lo + std::min(kGrid - 1, best + 1) * step;
  auto du = [&](double x) { return snail_potential_derivative(1, x, ext, p); };
  double x = lo + best * step;
  if (du(x) == 0.0) return x;
  // Keep a sign-changing bracket for u' when one exists on the grid cell.
  const bool bracketed = du(a) < 0.0 && du(b) > 0.0;
  for (int it = 0; it < 100; ++it) {
    const double g = du(x);
    if (std::abs(g) < 1e-15) break;
    if (bracketed) {
      if (g > 0.0) b = x; else a = x;
    }
    const double h = snail_potential_derivative(2, x, ext, p);
    double xn = (h > 0.0) ? x - g / h : 0.5 * (a + b);
    if (bracketed && (xn <= a || xn >= b)) xn = 0.5 * (a + b);
    if (std::abs(xn - x) < 1e-16) {
      x = xn;
      break;
    }
    x = xn;
  }
  return x;
}

/// Taylor coefficients c2..c_max of u about its minimum, c_m = u^(m)(phi*),
/// so that u(phi* + d) = u* + sum_m c_m d^m / m!.
inline std::vector<double> snail_taylor_coefficients(const SnailParams& p, double external_flux,
                                                     int max_order) {
  if (max_order < 2) throw DomainError("max_order must be >= 2");
  const double ext = kTwoPi * fold_flux(external_flux);
  const double phi = snail_minimum(p, external_flux);
  std::vector<double> c;
  for (int m = 2; m <= max_order; ++m) c.push_back(snail_potential_derivative(m, phi, ext, p));
  if (!(c[0] > 0.0))
    throw UnstableConfigurationError("SNAIL potential curvature is not positive at the minimum");
  return c;
}

/// Small-signal inductance of one SNAIL at its potential minimum.
inline double snail_effective_inductance(const SnailParams& p, double external_flux) {
  const double c2 = snail_taylor_coefficients(p, external_flux, 2)[0];
  return josephson_inductance(p.large_junction.critical_current) / c2;
}

/// Lumped-ladder propagation time N sqrt(L C_g) at the given flux.
inline double propagation_time_estimate(const TwpaDeviceSpec& spec, double external_flux) {
  spec.validate();
  return spec.n_cells *
         std::sqrt(snail_effective_inductance(spec.cell, external_flux) * spec.cell.ground_capacitance);
}

/// Long-wavelength characteristic impedance sqrt(L / C_g).
inline double characteristic_impedance(const TwpaDeviceSpec& spec, double external_flux) {
  spec.validate();
  if (!(spec.cell.ground_capacitance > 0.0)) throw DomainError("ground_capacitance must be > 0");
  return std::sqrt(snail_effective_inductance(spec.cell, external_flux) / spec.cell.ground_capacitance);
}

// ---------------------------------------------------------------------------
// Dimensionless units

enum class QuantityKind {
  flux,
  current,
  voltage,
  resistance,
  inductance,
  capacitance,
  angular_frequency,
  time
};

inline QuantityKind quantity_kind_from_string(std::string_view s) {
  static constexpr std::array<std::pair<std::string_view, QuantityKind>, 8> table{{
      {"flux", QuantityKind::flux},
      {"current", QuantityKind::current},
      {"voltage", QuantityKind::voltage},
      {"resistance", QuantityKind::resistance},
      {"inductance", QuantityKind::inductance},
      {"capacitance", QuantityKind::capacitance},
      {"angular-frequency", QuantityKind::angular_frequency},
      {"time", QuantityKind::time},
  }};
  for (const auto& [name, kind] : table)
    if (name == s) return kind;
  throw DomainError("unknown quantity kind '" + std::string(s) + "'");
}

struct NormalizationScheme {
  double current_norm = 1e-6;      // I_n
  double voltage_norm = 1e-3;      // V_n
  double resistance_norm = 1e3;    // R_n
  double flux_norm = kReducedFluxQuantum;  // Phi_n

  double inductance_norm() const { return flux_norm / current_norm; }
  double capacitance_norm() const {
    return inductance_norm() / (resistance_norm * resistance_norm);
  }
  double time_norm() const { return std::sqrt(inductance_norm() * capacitance_norm()); }
  double angular_frequency_norm() const { return 1.0 / time_norm(); }

  double factor(QuantityKind kind) const {
    switch (kind) {
      case QuantityKind::flux: return flux_norm;
      case QuantityKind::current: return current_norm;
      case QuantityKind::voltage: return voltage_norm;
      case QuantityKind::resistance: return resistance_norm;
      case QuantityKind::inductance: return inductance_norm();
      case QuantityKind::capacitance: return capacitance_norm();
      case QuantityKind::angular_frequency: return angular_frequency_norm();
      case QuantityKind::time: return time_norm();
    }
    throw DomainError("unknown quantity kind");
  }

  void validate() const {
    if (!(current_norm > 0.0 && voltage_norm > 0.0 && resistance_norm > 0.0 && flux_norm > 0.0))
      throw DomainError("normalization factors must be positive");
  }
};

inline double normalize(double value, QuantityKind kind, const NormalizationScheme& s) {
  s.validate();
  // Dividing by Phi_0 first keeps normalize(Phi_0) == 2 pi in floating point.
  if (kind == QuantityKind::flux && s.flux_norm == kReducedFluxQuantum) return value / kFluxQuantum * kTwoPi;
  return value / s.factor(kind);
}

inline double denormalize(double value, QuantityKind kind, const NormalizationScheme& s) {
  s.validate();
  return value * s.factor(kind);
}

inline double normalize(double value, std::string_view kind, const NormalizationScheme& s) {
  return normalize(value, quantity_kind_from_string(kind), s);
}

inline double denormalize(double value, std::string_view kind, const NormalizationScheme& s) {
  return denormalize(value, quantity_kind_from_string(kind), s);
}

// ---------------------------------------------------------------------------
// Benchmark values

/// Ic*Rn product of aluminium junctions, V.
inline constexpr double kAluminiumIcRn = 0.33e-3;

/// 250-cell SNAIL amplifier with the usual experimental parameters.
inline TwpaDeviceSpec snail250_device() {
  TwpaDeviceSpec d;
  d.cell.large_junction.critical_current = 1.47e-6;
  d.cell.large_junction.capacitance = 31e-15;
  d.cell.large_junction.normal_resistance = ambegaokar_baratoff_rn(1.47e-6, kAluminiumIcRn);
  d.cell.junction_ratio = 0.05;
  d.cell.n_large = 3;
  d.cell.ground_capacitance = 550e-15;
  d.n_cells = 250;
  d.port_impedance = 50.0;
  d.flux_bias.scheme = FluxScheme::phase_source;
  d.flux_bias.target_flux = 0.0;
  d.alternating_polarity = true;
  return d;
}

}  // namespace jtwpa
