#pragma once

// Harmonic balance for the pumped steady state and a multi-mode conversion
// matrix for small-signal scattering parameters.
//
// Harmonic convention: phi(t) = X_0 + sum_k 2 Re(X_k e^{i k w t}), k = 1..K.
// Junction currents come from sampling sin(phi) on a uniform time grid; the
// Jacobian is built from the Fourier coefficients C_q of Ic cos(phi):
//   dJ_k / dRe X_m = C_{k-m} + C_{k+m},   dJ_k / dIm X_m = i (C_{k-m} - C_{k+m}),
//   dJ_k / dX_0 = C_k.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "jtwpa/banded.hpp"
#include "jtwpa/circuit.hpp"
#include "jtwpa/errors.hpp"
#include "jtwpa/netlist.hpp"
#include "jtwpa/transient.hpp"
#include "jtwpa/units.hpp"

namespace jtwpa {

using cplx = std::complex<double>;

struct HbSettings {
  int n_pump_harmonics = 8;
  /// Sideband modes f_s + k f_p with even k; odd-k modes are added
  /// automatically when the pump waveform has odd cos-harmonics (flux bias).
  int n_modes = 10;
  std::vector<double> frequencies;  // signal grid, Hz
  double newton_tolerance = 1e-9;   // relative to the largest critical current
  int max_iters = 50;
  int n_time_samples = 0;  // 0: smallest power of two >= 8 (K + 1)
  unsigned jobs = 0;       // 0: hardware concurrency

  int time_samples() const {
    if (n_time_samples > 0) return n_time_samples;
    int n = 8;
    while (n < 8 * (n_pump_harmonics + 1)) n *= 2;
    return n;
  }

  void validate() const {
    if (n_pump_harmonics < 1) throw DomainError("n_pump_harmonics must be >= 1");
    if (n_modes < 2) throw DomainError("n_modes must be >= 2");
    if (!(newton_tolerance > 0.0)) throw DomainError("newton_tolerance must be > 0");
    if (max_iters < 1) throw DomainError("max_iters must be >= 1");
    if (n_time_samples != 0 && n_time_samples < 2 * n_pump_harmonics + 1)
      throw DomainError("n_time_samples must exceed 2 n_pump_harmonics");
    for (double f : frequencies)
      if (!(f >= 0.0) || !std::isfinite(f)) throw DomainError("signal frequencies must be >= 0");
  }
};

/// Uniform grid of `count` points on [lo, hi].
inline std::vector<double> linear_grid(double lo, double hi, int count) {
  if (count < 1) throw DomainError("grid needs at least one point");
  std::vector<double> g(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    g[static_cast<std::size_t>(i)] =
        count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (count - 1);
  return g;
}

/// Signal grid used when none is given: 106 points over 0-10 GHz.
inline std::vector<double> default_hb_grid() { return linear_grid(0.0, 10e9, 106); }

struct PumpSteadyState {
  double pump_frequency = 0.0;
  double pump_power_dbm = 0.0;
  int n_harmonics = 0;
  int n_time_samples = 0;
  /// Node-unknown harmonics, X[u * (K + 1) + k].
  std::vector<cplx> node_harmonics;
  /// Junction branch-phase harmonics (k = 0..K), one vector per junction,
  /// ordered as CircuitModel::junctions(). The k = 0 term includes offsets.
  std::vector<std::vector<cplx>> junction_harmonics;
  std::vector<int> junction_elements;
  double residual = 0.0;
  int iterations = 0;
  int continuation_steps = 0;

  /// phi(t) of junction j reconstructed from its harmonics.
  double junction_phase(std::size_t j, double t) const {
    const auto& h = junction_harmonics.at(j);
    double v = h[0].real();
    const double w = kTwoPi * pump_frequency;
    for (std::size_t k = 1; k < h.size(); ++k)
      v += 2.0 * (h[k] * std::polar(1.0, w * static_cast<double>(k) * t)).real();
    return v;
  }
};

namespace detail {

/// Real-valued harmonic-balance system for one pump frequency.
class HbSystem {
 public:
  HbSystem(const Netlist& net, double fp, int k, int nt)
      : model_(net), fp_(fp), w_(kTwoPi * fp), k_(k), nt_(nt), nb_(2 * k + 1) {
    if (!model_.coupled().empty())
      throw ConfigurationError("harmonic balance does not support coupled inductors");
    for (const auto& s : model_.sources()) {
      if (!s.sinusoidal) continue;
      const double ratio = s.frequency / fp;
      if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) > k)
        throw ConfigurationError("sinusoidal source is not a retained pump harmonic");
    }
    cos_.resize(static_cast<std::size_t>(nt * (2 * k + 1)));
    sin_.resize(cos_.size());
    for (int q = 0; q <= 2 * k; ++q)
      for (int j = 0; j < nt; ++j) {
        const double th = kTwoPi * static_cast<double>((q * j) % nt) / nt;
        cos_[idx(q, j)] = std::cos(th);
        sin_[idx(q, j)] = std::sin(th);
      }
  }

  CircuitModel& model() { return model_; }
  std::size_t size() const { return model_.node_unknowns() * static_cast<std::size_t>(nb_); }
  std::size_t half_band() const {
    return (model_.half_bandwidth() + 1) * static_cast<std::size_t>(nb_) - 1;
  }
  int nb() const { return nb_; }

  /// Row/column of component c (0 = DC, 2k-1 = Re X_k, 2k = Im X_k) of unknown u.
  std::size_t pos(std::size_t u, int c) const {
    return model_.row(u) * static_cast<std::size_t>(nb_) + static_cast<std::size_t>(c);
  }

  cplx harmonic(const std::vector<double>& x, int u, int kk) const {
    if (u < 0) return {};
    const auto uu = static_cast<std::size_t>(u);
    if (kk == 0) return {x[pos(uu, 0)], 0.0};
    return {x[pos(uu, 2 * kk - 1)], x[pos(uu, 2 * kk)]};
  }

  /// Branch-drop harmonic k, offsets included in k = 0.
  cplx drop(const std::vector<double>& x, const Branch& b, int kk) const {
    cplx d = harmonic(x, b.a.unknown, kk) - harmonic(x, b.b.unknown, kk);
    if (kk == 0) d += b.a.offset - b.b.offset;
    return d;
  }

  /// Residual F(x) (currents leaving nodes minus injections) and optionally
  /// the Jacobian. `drive` is the Norton current phasor at the input node.
  double assemble(const std::vector<double>& x, double drive_amplitude,
                  std::vector<double>& f, linalg::BandMatrix<double>* jac) {
    const std::size_t n = size();
    f.assign(n, 0.0);
    if (jac) jac->set_zero();
    const double pn = kReducedFluxQuantum;

    // Linear branch: I_k = y_k (X_a,k - X_b,k).
    auto stamp_linear = [&](const Branch& b, auto admittance) {
      for (int kk = 0; kk <= k_; ++kk) {
        const cplx y = admittance(kk);
        if (y == cplx{}) continue;
        const cplx i = y * drop(x, b, kk);
        add_current(f, b, kk, i);
        if (!jac) continue;
        // Column derivatives: d/dRe -> y, d/dIm -> i y.
        for (int sa = 0; sa < 2; ++sa) {
          const int ua = sa == 0 ? b.a.unknown : b.b.unknown;
          if (ua < 0) continue;
          const double sgn_row = sa == 0 ? 1.0 : -1.0;
          for (int sb = 0; sb < 2; ++sb) {
            const int ub = sb == 0 ? b.a.unknown : b.b.unknown;
            if (ub < 0) continue;
            const double s = sgn_row * (sb == 0 ? 1.0 : -1.0);
            stamp_block(*jac, static_cast<std::size_t>(ua), kk, static_cast<std::size_t>(ub), kk,
                        s * y, s * y * cplx(0.0, 1.0));
          }
        }
      }
    };

    for (const auto& l : model_.inductors())
      stamp_linear(l.br, [&](int) { return cplx(pn / l.value, 0.0); });
    for (const auto& c : model_.capacitors())
      stamp_linear(c.br, [&](int kk) {
        const double wk = w_ * kk;
        return cplx(-pn * c.value * wk * wk, 0.0);
      });
    for (const auto& g : model_.conductances())
      stamp_linear(g.br, [&](int kk) { return cplx(0.0, pn * g.value * w_ * kk); });
    for (const auto& j : model_.junctions()) {
      stamp_linear(j.br, [&](int kk) {
        const double wk = w_ * kk;
        return cplx(-pn * j.cap * wk * wk, pn * j.conductance * wk);
      });
      stamp_junction(x, j, f, jac);
    }

    // Sources.
    for (const auto& s : model_.sources()) {
      if (!s.sinusoidal) {
        add_current(f, s.br, 0, cplx(-s.value, 0.0));
        continue;
      }
      const int kk = static_cast<int>(std::lround(s.frequency / fp_));
      add_current(f, s.br, kk, -0.5 * std::polar(s.value, s.phase));
    }
    const NodeRef in = model_.port_node(model_.netlist().input_port);
    if (in.unknown >= 0) {
      const auto u = static_cast<std::size_t>(in.unknown);
      f[pos(u, 1)] -= 0.5 * drive_amplitude;
    }

    // Gauge on DC components.
    const double gauge = kGaugeStiffness * model_.current_scale();
    for (std::size_t u = 0; u < model_.node_unknowns(); ++u) {
      f[pos(u, 0)] += gauge * x[pos(u, 0)];
      if (jac) jac->add(pos(u, 0), pos(u, 0), gauge);
    }
    double m = 0.0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
  }

  /// Fourier coefficients C_q = (1/N) sum Ic cos(phi_j) e^{-i q theta_j},
  /// q = 0..2K, and S_k for sin, of one junction.
  void junction_coefficients(const std::vector<double>& x, const CompiledJunction& j,
                             std::vector<cplx>& c, std::vector<cplx>& s) const {
    std::vector<cplx> d(static_cast<std::size_t>(k_ + 1));
    for (int kk = 0; kk <= k_; ++kk) d[static_cast<std::size_t>(kk)] = drop(x, j.br, kk);
    phases_.assign(static_cast<std::size_t>(nt_), 0.0);
    for (int t = 0; t < nt_; ++t) {
      double v = d[0].real();
      for (int kk = 1; kk <= k_; ++kk) {
        const cplx& dk = d[static_cast<std::size_t>(kk)];
        v += 2.0 * (dk.real() * cos_[idx(kk, t)] - dk.imag() * sin_[idx(kk, t)]);
      }
      phases_[static_cast<std::size_t>(t)] = v;
    }
    c.assign(static_cast<std::size_t>(2 * k_ + 1), cplx{});
    s.assign(static_cast<std::size_t>(k_ + 1), cplx{});
    const double inv = 1.0 / nt_;
    for (int t = 0; t < nt_; ++t) {
      const double ph = phases_[static_cast<std::size_t>(t)];
      const double cv = j.ic * std::cos(ph) * inv;
      const double sv = j.ic * std::sin(ph) * inv;
      for (int q = 0; q <= 2 * k_; ++q)
        c[static_cast<std::size_t>(q)] += cplx(cv * cos_[idx(q, t)], -cv * sin_[idx(q, t)]);
      for (int kk = 0; kk <= k_; ++kk)
        s[static_cast<std::size_t>(kk)] += cplx(sv * cos_[idx(kk, t)], -sv * sin_[idx(kk, t)]);
    }
  }

 private:
  std::size_t idx(int q, int t) const {
    return static_cast<std::size_t>(q) * static_cast<std::size_t>(nt_) + static_cast<std::size_t>(t);
  }

  void add_current(std::vector<double>& f, const Branch& b, int kk, cplx i) const {
    auto put = [&](int u, double sign) {
      if (u < 0) return;
      const auto uu = static_cast<std::size_t>(u);
      if (kk == 0) {
        f[pos(uu, 0)] += sign * i.real();
      } else {
        f[pos(uu, 2 * kk - 1)] += sign * i.real();
        f[pos(uu, 2 * kk)] += sign * i.imag();
      }
    };
    put(b.a.unknown, 1.0);
    put(b.b.unknown, -1.0);
  }

  /// dF(row unknown, harmonic kr) / d(col unknown, harmonic kc): complex
  /// derivative `a` for Re X_kc and `b` for Im X_kc.
  void stamp_block(linalg::BandMatrix<double>& jac, std::size_t ur, int kr, std::size_t uc,
                   int kc, cplx a, cplx b) const {
    if (kr == 0) {
      if (kc == 0) {
        jac.add(pos(ur, 0), pos(uc, 0), a.real());
      } else {
        jac.add(pos(ur, 0), pos(uc, 2 * kc - 1), a.real());
        jac.add(pos(ur, 0), pos(uc, 2 * kc), b.real());
      }
      return;
    }
    const std::size_t rr = pos(ur, 2 * kr - 1), ri = pos(ur, 2 * kr);
    if (kc == 0) {
      jac.add(rr, pos(uc, 0), a.real());
      jac.add(ri, pos(uc, 0), a.imag());
      return;
    }
    const std::size_t cr = pos(uc, 2 * kc - 1), ci = pos(uc, 2 * kc);
    jac.add(rr, cr, a.real());
    jac.add(ri, cr, a.imag());
    jac.add(rr, ci, b.real());
    jac.add(ri, ci, b.imag());
  }

  void stamp_junction(const std::vector<double>& x, const CompiledJunction& j,
                      std::vector<double>& f, linalg::BandMatrix<double>* jac) {
    junction_coefficients(x, j, cbuf_, sbuf_);
    for (int kk = 0; kk <= k_; ++kk) add_current(f, j.br, kk, sbuf_[static_cast<std::size_t>(kk)]);
    if (!jac) return;
    auto cq = [&](int q) {
      return q >= 0 ? cbuf_[static_cast<std::size_t>(q)] : std::conj(cbuf_[static_cast<std::size_t>(-q)]);
    };
    const int ends[2] = {j.br.a.unknown, j.br.b.unknown};
    for (int kr = 0; kr <= k_; ++kr)
      for (int kc = 0; kc <= k_; ++kc) {
        cplx a, b;
        if (kc == 0) {
          a = cq(kr);
        } else {
          a = cq(kr - kc) + cq(kr + kc);
          b = cplx(0.0, 1.0) * (cq(kr - kc) - cq(kr + kc));
        }
        for (int ra = 0; ra < 2; ++ra) {
          if (ends[ra] < 0) continue;
          for (int ca = 0; ca < 2; ++ca) {
            if (ends[ca] < 0) continue;
            const double s = (ra == ca) ? 1.0 : -1.0;
            stamp_block(*jac, static_cast<std::size_t>(ends[ra]), kr,
                        static_cast<std::size_t>(ends[ca]), kc, s * a, s * b);
          }
        }
      }
  }

  CircuitModel model_;
  double fp_, w_;
  int k_, nt_, nb_;
  std::vector<double> cos_, sin_;
  mutable std::vector<double> phases_;
  std::vector<cplx> cbuf_, sbuf_;
};

}  // namespace detail

/// Analytic Jacobian of the harmonic-balance residual (dense, for testing).
/// Unknown ordering follows the internal band layout.
struct HbJacobianProbe {
  std::vector<double> x;
  std::vector<std::vector<double>> analytic;
  std::vector<std::vector<double>> finite_difference;
};

inline HbJacobianProbe probe_hb_jacobian(const Netlist& net, double fp, double pump_dbm,
                                         const std::vector<double>& x, const HbSettings& settings,
                                         double step = 1e-6) {
  detail::HbSystem sys(net, fp, settings.n_pump_harmonics, settings.time_samples());
  const double amp = norton_amplitude(pump_dbm, net.input().value);
  const std::size_t n = sys.size();
  if (x.size() != n) throw DomainError("probe vector has the wrong length");
  linalg::BandMatrix<double> jac(n, sys.half_band(), sys.half_band());
  std::vector<double> f, fp_, fm_;
  sys.assemble(x, amp, f, &jac);
  HbJacobianProbe p;
  p.x = x;
  p.analytic.assign(n, std::vector<double>(n, 0.0));
  p.finite_difference = p.analytic;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p.analytic[i][j] = jac.get(i, j);
  std::vector<double> xp = x;
  for (std::size_t j = 0; j < n; ++j) {
    xp[j] = x[j] + step;
    sys.assemble(xp, amp, fp_, nullptr);
    xp[j] = x[j] - step;
    sys.assemble(xp, amp, fm_, nullptr);
    xp[j] = x[j];
    for (std::size_t i = 0; i < n; ++i) p.finite_difference[i][j] = (fp_[i] - fm_[i]) / (2.0 * step);
  }
  return p;
}

inline std::size_t hb_unknown_count(const Netlist& net, const HbSettings& settings) {
  detail::HbSystem sys(net, 1.0, settings.n_pump_harmonics, settings.time_samples());
  return sys.size();
}

namespace detail {

inline bool hb_newton(HbSystem& sys, double amp, std::vector<double>& x, const HbSettings& s,
                      int& iterations, double& residual, int max_iters) {
  const std::size_t n = sys.size();
  linalg::BandMatrix<double> jac(n, sys.half_band(), sys.half_band());
  linalg::BandedLU<double> lu;
  std::vector<double> f, dx(n), xt(n);
  const double tol = s.newton_tolerance * sys.model().current_scale();
  residual = sys.assemble(x, amp, f, &jac);
  for (int it = 0; it < max_iters; ++it) {
    if (!std::isfinite(residual)) return false;
    if (residual <= tol) return true;
    if (!lu.factorize(jac)) return false;
    for (std::size_t i = 0; i < n; ++i) dx[i] = -f[i];
    lu.solve(dx);
    ++iterations;
    // Full step first (with Jacobian, reused on acceptance), then backtracking.
    for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + dx[i];
    double r = sys.assemble(xt, amp, f, &jac);
    if (!(std::isfinite(r) && r < residual)) {
      double t = 0.5;
      for (int ls = 0; ls < 12; ++ls, t *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + t * dx[i];
        r = sys.assemble(xt, amp, f, nullptr);
        if (std::isfinite(r) && r < residual) break;
      }
      if (!(std::isfinite(r) && r < residual)) return false;
      r = sys.assemble(xt, amp, f, &jac);
    }
    x.swap(xt);
    residual = r;
  }
  return residual <= tol;
}

inline std::vector<double> hb_initial_guess(HbSystem& sys) {
  std::vector<double> x(sys.size(), 0.0);
  const DcSolution dc = solve_dc(sys.model());
  for (std::size_t u = 0; u < sys.model().node_unknowns(); ++u) x[sys.pos(u, 0)] = dc.x[u];
  return x;
}

}  // namespace detail

/// Pumped steady state. Newton starts from the static operating point with
/// zero harmonics (its first step is the linear response); if that fails the
/// pump power is raised towards the target in steps of at most 1 dB.
inline PumpSteadyState solve_pump(const Netlist& net, double pump_frequency, double pump_power_dbm,
                                  const HbSettings& settings) {
  settings.validate();
  if (!(pump_frequency > 0.0)) throw DomainError("pump frequency must be > 0");
  if (net.input_port < 0 || net.output_port < 0)
    throw ConfigurationError("harmonic balance needs input and output ports");
  const int kmax = settings.n_pump_harmonics;
  detail::HbSystem sys(net, pump_frequency, kmax, settings.time_samples());
  const double zin = net.input().value;

  PumpSteadyState st;
  st.pump_frequency = pump_frequency;
  st.pump_power_dbm = pump_power_dbm;
  st.n_harmonics = kmax;
  st.n_time_samples = settings.time_samples();

  // Newton budget per continuation step; slow progress means the step is too long.
  const int kContinuationIters = std::min(settings.max_iters, 15);
  std::vector<double> x0 = detail::hb_initial_guess(sys);
  std::vector<double> x = x0;
  int iters = 0;
  double res = 0.0;
  bool ok = detail::hb_newton(sys, norton_amplitude(pump_power_dbm, zin), x, settings, iters, res,
                              std::min(settings.max_iters, 25));
  if (!ok) {
    // Continuation in pump power: start from the highest of P - 10, P - 20,
    // P - 30 dBm that converges directly, then steps of at most 1 dB, halved
    // on failure.
    double p = pump_power_dbm;
    for (double back = 10.0; back <= 30.0 && !ok; back += 10.0) {
      p = pump_power_dbm - back;
      x = x0;
      ++st.continuation_steps;
      ok = detail::hb_newton(sys, norton_amplitude(p, zin), x, settings, iters, res, kContinuationIters);
    }
    if (!ok)
      throw ConvergenceError("harmonic balance: no converged starting point for continuation", 0.0,
                             res);
    double step = 1.0;
    std::vector<double> trial;
    while (p < pump_power_dbm) {
      const double pn = std::min(pump_power_dbm, p + step);
      trial = x;
      ++st.continuation_steps;
      if (detail::hb_newton(sys, norton_amplitude(pn, zin), trial, settings, iters, res,
                            kContinuationIters)) {
        x.swap(trial);
        p = pn;
        step = std::min(1.0, 2.0 * step);
      } else {
        step *= 0.5;
        if (step < 1.0 / 1024.0)
          throw ConvergenceError("harmonic balance: pump continuation stalled at " +
                                     std::to_string(p) + " dBm",
                                 0.0, res);
      }
    }
  }
  st.iterations = iters;
  st.residual = res;

  const CircuitModel& m = sys.model();
  st.node_harmonics.assign(m.node_unknowns() * static_cast<std::size_t>(kmax + 1), cplx{});
  for (std::size_t u = 0; u < m.node_unknowns(); ++u)
    for (int k = 0; k <= kmax; ++k)
      st.node_harmonics[u * static_cast<std::size_t>(kmax + 1) + static_cast<std::size_t>(k)] =
          sys.harmonic(x, static_cast<int>(u), k);
  for (const auto& j : m.junctions()) {
    std::vector<cplx> h(static_cast<std::size_t>(kmax + 1));
    for (int k = 0; k <= kmax; ++k) h[static_cast<std::size_t>(k)] = sys.drop(x, j.br, k);
    st.junction_harmonics.push_back(std::move(h));
    st.junction_elements.push_back(j.element);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Small-signal scattering parameters

struct SParamPoint {
  double frequency = 0.0;
  cplx s11, s21, s12, s22;
  cplx s21_idler;  // signal in at port 1 -> idler (f_s - 2 f_p) out at port 2
  double manley_rowe = 0.0;  // photon-weighted output sum for port-1 input
};

struct SmallSignalSolution {
  double pump_frequency = 0.0;
  std::vector<int> mode_indices;  // k of f_s + k f_p
  std::vector<SParamPoint> points;
  std::vector<std::string> diagnostics;  // skipped points
};

/// Harmonic indices k of the sideband modes f_s + k f_p. Even k span the
/// range symmetric about k = -1 (signal k = 0, idler k = -2); odd k in the
/// same span are included when `odd` is set.
inline std::vector<int> sideband_modes(int n_modes, bool odd) {
  const int half = (n_modes + 1) / 2;
  std::vector<int> k;
  for (int j = -half; j <= half - 1; ++j) k.push_back(2 * j);
  if (odd)
    for (int q = -2 * half + 1; q <= 2 * half - 3; q += 2) k.push_back(q);
  std::sort(k.begin(), k.end());
  return k;
}

namespace detail {

/// Fourier coefficients of Ic cos(phi_pump) of each junction, q = 0..2K.
inline std::vector<std::vector<cplx>> pump_cos_coefficients(const PumpSteadyState& st,
                                                            const CircuitModel& m) {
  const int kmax = st.n_harmonics;
  const int nt = st.n_time_samples;
  std::vector<std::vector<cplx>> out;
  const auto& js = m.junctions();
  if (js.size() != st.junction_harmonics.size())
    throw ConfigurationError("pump state does not belong to this netlist");
  for (std::size_t j = 0; j < js.size(); ++j) {
    const auto& h = st.junction_harmonics[j];
    std::vector<cplx> c(static_cast<std::size_t>(2 * kmax + 1));
    for (int t = 0; t < nt; ++t) {
      const double th = kTwoPi * t / nt;
      double v = h[0].real();
      for (int k = 1; k <= kmax; ++k)
        v += 2.0 * (h[static_cast<std::size_t>(k)] * std::polar(1.0, th * k)).real();
      const double cv = js[j].ic * std::cos(v) / nt;
      for (int q = 0; q <= 2 * kmax; ++q) c[static_cast<std::size_t>(q)] += cv * std::polar(1.0, -th * q);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

/// Multi-mode S-parameters of the pumped netlist at each signal frequency of
/// `settings.frequencies`. Points where a mode lands on zero frequency or two
/// modes share |f| are skipped with a diagnostic.
inline SmallSignalSolution small_signal_sparams(const PumpSteadyState& st, const Netlist& net,
                                                const HbSettings& settings) {
  settings.validate();
  const CircuitModel model(net);
  if (!model.coupled().empty())
    throw ConfigurationError("harmonic balance does not support coupled inductors");
  const auto ccos = detail::pump_cos_coefficients(st, model);
  const int kmax = st.n_harmonics;

  bool odd = false;
  for (const auto& c : ccos) {
    const double scale = std::abs(c[0]) + 1e-300;
    for (int q = 1; q <= 2 * kmax; q += 2)
      if (std::abs(c[static_cast<std::size_t>(q)]) > 1e-12 * scale) odd = true;
  }
  SmallSignalSolution sol;
  sol.pump_frequency = st.pump_frequency;
  sol.mode_indices = sideband_modes(settings.n_modes, odd);
  const auto& modes = sol.mode_indices;
  const auto nm = modes.size();
  const auto sig = static_cast<std::size_t>(std::find(modes.begin(), modes.end(), 0) - modes.begin());
  const auto idl = static_cast<std::size_t>(std::find(modes.begin(), modes.end(), -2) - modes.begin());

  const std::size_t nu = model.node_unknowns();
  const std::size_t n = nu * nm;
  const std::size_t band = (model.half_bandwidth() + 1) * nm - 1;
  const NodeRef p1 = model.port_node(net.input_port);
  const NodeRef p2 = model.port_node(net.output_port);
  const double z1 = net.input().value, z2 = net.output().value;
  if (p1.unknown < 0 || p2.unknown < 0) throw ConfigurationError("ports must not sit on ground");
  const double pn = kReducedFluxQuantum;
  const double wp = kTwoPi * st.pump_frequency;

  auto pos = [&](int u, std::size_t m) { return model.row(static_cast<std::size_t>(u)) * nm + m; };

  const auto& grid = settings.frequencies;
  std::vector<std::optional<SParamPoint>> results(grid.size());
  std::vector<std::string> notes(grid.size());

  auto solve_point = [&](std::size_t gi, linalg::BandMatrix<cplx>& a, linalg::BandedLU<cplx>& lu) {
    const double fs = grid[gi];
    const double ws = kTwoPi * fs;
    std::vector<double> wm(nm);
    for (std::size_t m = 0; m < nm; ++m) wm[m] = ws + modes[m] * wp;
    const double tiny = 1e-9 * wp;
    for (std::size_t m = 0; m < nm; ++m) {
      if (std::abs(wm[m]) < tiny) {
        notes[gi] = "skipped f_s = " + std::to_string(fs) + " Hz: mode at zero frequency";
        return;
      }
      for (std::size_t q = m + 1; q < nm; ++q)
        if (std::abs(std::abs(wm[m]) - std::abs(wm[q])) < tiny) {
          notes[gi] = "skipped f_s = " + std::to_string(fs) + " Hz: mode collision";
          return;
        }
    }
    a.set_zero();
    auto stamp = [&](const Branch& b, std::size_t mr, std::size_t mc, cplx y) {
      const int ua = b.a.unknown, ub = b.b.unknown;
      if (ua >= 0) a.add(pos(ua, mr), pos(ua, mc), y);
      if (ub >= 0) a.add(pos(ub, mr), pos(ub, mc), y);
      if (ua >= 0 && ub >= 0) {
        a.add(pos(ua, mr), pos(ub, mc), -y);
        a.add(pos(ub, mr), pos(ua, mc), -y);
      }
    };
    for (std::size_t m = 0; m < nm; ++m) {
      const double w = wm[m];
      for (const auto& l : model.inductors()) stamp(l.br, m, m, pn / l.value);
      for (const auto& c : model.capacitors()) stamp(c.br, m, m, -pn * c.value * w * w);
      for (const auto& g : model.conductances()) stamp(g.br, m, m, cplx(0.0, pn * g.value * w));
      for (const auto& j : model.junctions())
        stamp(j.br, m, m, cplx(-pn * j.cap * w * w, pn * j.conductance * w));
    }
    for (std::size_t j = 0; j < model.junctions().size(); ++j) {
      const auto& c = ccos[j];
      for (std::size_t mr = 0; mr < nm; ++mr)
        for (std::size_t mc = 0; mc < nm; ++mc) {
          const int q = modes[mr] - modes[mc];
          if (std::abs(q) > 2 * kmax) continue;
          const cplx v = q >= 0 ? c[static_cast<std::size_t>(q)] : std::conj(c[static_cast<std::size_t>(-q)]);
          stamp(model.junctions()[j].br, mr, mc, v);
        }
    }
    if (!lu.factorize(a)) {
      notes[gi] = "skipped f_s = " + std::to_string(fs) + " Hz: singular conversion matrix";
      return;
    }
    // Unit Norton current at each port in turn, signal mode.
    auto volts = [&](const std::vector<cplx>& x, const NodeRef& r, std::size_t m) {
      return cplx(0.0, wm[m] * pn) * x[pos(r.unknown, m)];
    };
    SParamPoint pt;
    pt.frequency = fs;
    std::vector<cplx> x(n);
    {
      std::fill(x.begin(), x.end(), cplx{});
      x[pos(p1.unknown, sig)] = 1.0;
      lu.solve(x);
      const double av = 0.5 * z1;  // incident voltage wave
      pt.s11 = (volts(x, p1, sig) - av) / av;
      pt.s21 = 2.0 * volts(x, p2, sig) / std::sqrt(z1 * z2);
      pt.s21_idler = 2.0 * volts(x, p2, idl) / std::sqrt(z1 * z2);
      double mr = 0.0;
      for (std::size_t m = 0; m < nm; ++m) {
        const cplx b1 = (m == sig ? volts(x, p1, m) - av : volts(x, p1, m)) / (av);
        const cplx b2 = 2.0 * volts(x, p2, m) / std::sqrt(z1 * z2);
        const double pw = std::norm(b1) + std::norm(b2);
        const double weight = std::abs(ws) / std::abs(wm[m]);
        mr += (wm[m] > 0.0 ? 1.0 : -1.0) * (ws > 0.0 ? 1.0 : -1.0) * weight * pw;
      }
      pt.manley_rowe = mr;
    }
    {
      std::fill(x.begin(), x.end(), cplx{});
      x[pos(p2.unknown, sig)] = 1.0;
      lu.solve(x);
      const double av = 0.5 * z2;
      pt.s22 = (volts(x, p2, sig) - av) / av;
      pt.s12 = 2.0 * volts(x, p1, sig) / std::sqrt(z1 * z2);
    }
    results[gi] = pt;
  };

  unsigned jobs = settings.jobs ? settings.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(1, grid.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    linalg::BandMatrix<cplx> a(n, band, band);
    linalg::BandedLU<cplx> lu;
    for (std::size_t gi; (gi = next.fetch_add(1)) < grid.size();) solve_point(gi, a, lu);
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    if (results[gi]) sol.points.push_back(*results[gi]);
    else sol.diagnostics.push_back(notes[gi]);
  }
  return sol;
}

inline double gain_from_sparams(const SmallSignalSolution& sol, double fs) {
  for (const auto& p : sol.points)
    if (std::abs(p.frequency - fs) <= 1e-9 * std::max(1.0, std::abs(fs)))
      return 20.0 * std::log10(std::abs(p.s21));
  throw LookupError("no S-parameters at f_s = " + std::to_string(fs) + " Hz");
}

inline void write_csv(std::ostream& os, const SmallSignalSolution& sol) {
  os << "f_Hz,S11_re,S11_im,S21_re,S21_im,S12_re,S12_im,S22_re,S22_im,gain_dB\n";
  char buf[512];
  for (const auto& p : sol.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  p.frequency, p.s11.real(), p.s11.imag(), p.s21.real(), p.s21.imag(),
                  p.s12.real(), p.s12.imag(), p.s22.real(), p.s22.imag(),
                  20.0 * std::log10(std::abs(p.s21)));
    os << buf;
  }
}

/// Linear (pump-off) node phasors for a Norton current phasor `source` at the
/// input port, junctions linearized at the static operating point. Indexed by
/// node unknown.
inline std::vector<cplx> linear_response(const Netlist& net, double frequency, cplx source) {
  CircuitModel model(net);
  if (!model.coupled().empty())
    throw ConfigurationError("linear response does not support coupled inductors");
  const DcSolution dc = solve_dc(model);
  const std::size_t n = model.node_unknowns();
  const std::size_t bw = model.half_bandwidth();
  linalg::BandMatrix<cplx> a(n, bw, bw);
  const double pn = kReducedFluxQuantum;
  const double w = kTwoPi * frequency;
  auto stamp = [&](const Branch& b, cplx y) {
    const int ua = b.a.unknown, ub = b.b.unknown;
    if (ua >= 0) a.add(model.row(ua), model.row(ua), y);
    if (ub >= 0) a.add(model.row(ub), model.row(ub), y);
    if (ua >= 0 && ub >= 0) {
      a.add(model.row(ua), model.row(ub), -y);
      a.add(model.row(ub), model.row(ua), -y);
    }
  };
  for (const auto& l : model.inductors()) stamp(l.br, pn / l.value);
  for (const auto& c : model.capacitors()) stamp(c.br, -pn * c.value * w * w);
  for (const auto& g : model.conductances()) stamp(g.br, cplx(0.0, pn * g.value * w));
  for (const auto& j : model.junctions())
    stamp(j.br, cplx(j.ic * std::cos(j.br.drop(dc.x)) - pn * j.cap * w * w, pn * j.conductance * w));
  const double gauge = kGaugeStiffness * model.current_scale();
  for (std::size_t u = 0; u < n; ++u) a.add(model.row(u), model.row(u), gauge);
  std::vector<cplx> rhs(n);
  const NodeRef in = model.port_node(net.input_port);
  if (in.unknown >= 0) rhs[model.row(static_cast<std::size_t>(in.unknown))] = source;
  linalg::BandedLU<cplx> lu;
  if (!lu.factorize(a)) throw ConvergenceError("linear response: singular matrix", 0.0, 0.0);
  lu.solve(rhs);
  std::vector<cplx> out(n);
  for (std::size_t u = 0; u < n; ++u) out[u] = rhs[model.row(u)];
  return out;
}

}  // namespace jtwpa
