#pragma once

// Spectral post-processing of transient records: one-sided DFT spectra and
// exact-frequency tone projections.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "jtwpa/errors.hpp"
#include "jtwpa/transient.hpp"
#include "jtwpa/units.hpp"

namespace jtwpa {

/// One-sided spectrum with RMS-equivalent amplitudes: a sinusoid of peak A in
/// an interior bin shows magnitude A / sqrt(2), and
///   sum(x^2) dt = sum(|amplitude|^2) / df.
struct Spectrum {
  std::vector<double> frequency;  // Hz
  std::vector<std::complex<double>> amplitude;
  double window_start = 0.0;  // s
  double duration = 0.0;      // s; bin spacing is 1 / duration

  double df() const { return 1.0 / duration; }
};

/// Samples of `name` on a uniform grid from the first sample at or after
/// `window_start` to the end of the record. Non-uniform records (adaptive
/// steps) are linearly resampled onto the same number of points.
inline std::vector<double> window_samples(const TimeSeries& ts, const std::string& name,
                                          double window_start, double& dt, double& t0) {
  const auto& y = ts[name];
  const auto& t = ts.time;
  const auto first = std::lower_bound(t.begin(), t.end(), window_start - 1e-18);
  if (t.empty() || first == t.end() || t.end() - first < 2)
    throw DomainError("spectral window is empty");
  const auto i0 = static_cast<std::size_t>(first - t.begin());
  const std::size_t n = t.size() - i0;
  t0 = t[i0];
  const double span = t.back() - t0;
  const double nominal = span / static_cast<double>(n - 1);
  bool uniform = true;
  for (std::size_t i = i0 + 1; i < t.size() && uniform; ++i)
    uniform = std::abs((t[i] - t[i - 1]) - nominal) <= 1e-6 * nominal;
  dt = nominal;
  // The last sample closes the period, so it is dropped from a periodic window.
  std::vector<double> out(n - 1);
  if (uniform) {
    std::copy(y.begin() + static_cast<std::ptrdiff_t>(i0), y.end() - 1, out.begin());
    return out;
  }
  std::size_t j = i0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double tk = t0 + static_cast<double>(k) * nominal;
    while (j + 1 < t.size() && t[j + 1] < tk) ++j;
    const double f = (tk - t[j]) / (t[j + 1] - t[j]);
    out[k] = y[j] + f * (y[j + 1] - y[j]);
  }
  return out;
}

/// Rectangular-window DFT of `name` over [window_start, end of record].
inline Spectrum spectrum(const TimeSeries& ts, const std::string& name, double window_start) {
  double dt = 0.0, t0 = 0.0;
  const std::vector<double> x = window_samples(ts, name, window_start, dt, t0);
  const std::size_t n = x.size();
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> X;
  fft.fwd(X, x);
  Spectrum s;
  s.window_start = t0;
  s.duration = static_cast<double>(n) * dt;
  const std::size_t nb = n / 2 + 1;
  s.frequency.resize(nb);
  s.amplitude.resize(nb);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < nb; ++k) {
    s.frequency[k] = static_cast<double>(k) / s.duration;
    const bool edge = (k == 0) || (n % 2 == 0 && k == n / 2);
    s.amplitude[k] = X[k] * scale * (edge ? 1.0 : std::numbers::sqrt2);
  }
  return s;
}

inline void write_csv(std::ostream& os, const Spectrum& s) {
  os << "f_Hz,amp_re,amp_im\n";
  char buf[96];
  for (std::size_t k = 0; k < s.frequency.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", s.frequency[k], s.amplitude[k].real(),
                  s.amplitude[k].imag());
    os << buf;
  }
}

/// Complex peak amplitude of the component at exactly `frequency`, from a
/// Hann-windowed projection normalized by the window's coherent gain.
inline std::complex<double> tone_amplitude(const TimeSeries& ts, const std::string& name,
                                           double frequency, double window_start) {
  if (!(frequency >= 0.0)) throw DomainError("tone frequency must be >= 0");
  const auto& y = ts[name];
  const auto& t = ts.time;
  const auto first = std::lower_bound(t.begin(), t.end(), window_start - 1e-18);
  if (first == t.end() || t.end() - first < 3) throw DomainError("spectral window is empty");
  const auto i0 = static_cast<std::size_t>(first - t.begin());
  const double ta = t[i0], tb = t.back();
  const double span = tb - ta;
  const double omega = kTwoPi * frequency;
  std::complex<double> acc{0.0, 0.0};
  double wsum = 0.0;
  for (std::size_t i = i0; i < t.size(); ++i) {
    // Trapezoid weights make the sum a quadrature of the continuous integral.
    const double left = i > i0 ? t[i] - t[i - 1] : 0.0;
    const double right = i + 1 < t.size() ? t[i + 1] - t[i] : 0.0;
    const double hann = 0.5 * (1.0 - std::cos(kTwoPi * (t[i] - ta) / span));
    const double w = hann * 0.5 * (left + right);
    acc += w * y[i] * std::polar(1.0, -omega * t[i]);
    wsum += w;
  }
  return (frequency == 0.0 ? 1.0 : 2.0) * acc / wsum;
}

/// Power in dBm that the tone at `frequency` of current record `name`
/// delivers into `load` ohms.
inline double tone_power(const TimeSeries& ts, const std::string& name, double frequency,
                         double window_start, double load) {
  if (!(load > 0.0)) throw DomainError("load must be > 0");
  const double a = std::abs(tone_amplitude(ts, name, frequency, window_start));
  const double p = frequency == 0.0 ? a * a * load : 0.5 * a * a * load;
  return watts_to_dbm(std::max(p, 1e-300));
}

}  // namespace jtwpa
