#pragma once

#include <cmath>
#include <numbers>

namespace jtwpa {

// SI values (2019 redefinition, exact).
inline constexpr double kPlanck = 6.62607015e-34;
inline constexpr double kElementaryCharge = 1.602176634e-19;

/// Magnetic flux quantum h/2e in Wb.
inline constexpr double kFluxQuantum = kPlanck / (2.0 * kElementaryCharge);

/// Reduced flux quantum h/(4 pi e); converts a phase in rad to flux in Wb.
inline constexpr double kReducedFluxQuantum = kFluxQuantum / (2.0 * std::numbers::pi);

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts / 1e-3); }

/// Josephson inductance Phi0/(2 pi Ic) of a junction with critical current `ic`.
inline double josephson_inductance(double ic) { return kReducedFluxQuantum / ic; }

}  // namespace jtwpa
