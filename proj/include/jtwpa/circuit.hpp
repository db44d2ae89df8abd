#pragma once

// Reduced unknown set shared by the solvers. Nodes tied together by phase
// sources collapse onto one unknown plus a fixed offset; inductors that take
// part in a mutual coupling get an explicit branch-current unknown so that
// unity coupling stays solvable.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <string>
#include <vector>

#include "jtwpa/banded.hpp"
#include "jtwpa/errors.hpp"
#include "jtwpa/netlist.hpp"
#include "jtwpa/units.hpp"

namespace jtwpa {

/// Node phase = unknown value (or 0 when tied to ground) + offset.
struct NodeRef {
  int unknown = -1;
  double offset = 0.0;
};

/// Two-terminal branch resolved to unknowns.
struct Branch {
  NodeRef a, b;
  template <typename V>
  double drop(const V& x) const {
    const double pa = (a.unknown >= 0 ? x[static_cast<std::size_t>(a.unknown)] : 0.0) + a.offset;
    const double pb = (b.unknown >= 0 ? x[static_cast<std::size_t>(b.unknown)] : 0.0) + b.offset;
    return pa - pb;
  }
  /// Time derivatives carry no offset.
  template <typename V>
  double rate(const V& w) const {
    const double pa = a.unknown >= 0 ? w[static_cast<std::size_t>(a.unknown)] : 0.0;
    const double pb = b.unknown >= 0 ? w[static_cast<std::size_t>(b.unknown)] : 0.0;
    return pa - pb;
  }
};

struct CompiledJunction {
  Branch br;
  int element = -1;
  double ic = 0.0, cap = 0.0, conductance = 0.0;  // conductance = 1/Rn or 0
};

struct CompiledLinear {
  Branch br;
  int element = -1;
  double value = 0.0;  // L, C, or 1/R
};

struct CompiledCoupledInductor {
  Branch br;
  int element = -1;
  int aux = -1;  // unknown index of the branch current
  double inductance = 0.0;
  std::vector<std::pair<int, double>> partners;  // (aux unknown, M)
};

struct CompiledSource {
  Branch br;  // injects into a, draws from b
  int element = -1;
  double value = 0.0;
  double frequency = 0.0;
  double phase = 0.0;
  bool sinusoidal = false;
};

class CircuitModel {
 public:
  explicit CircuitModel(const Netlist& net, bool allow_phase_offsets = true) : net_(&net) {
    const auto diags = validate(net);
    if (!diags.empty()) throw ConfigurationError("invalid netlist: " + diags.front().message);
    resolve_nodes(allow_phase_offsets);
    compile_elements();
    order_unknowns();
  }

  const Netlist& netlist() const { return *net_; }
  std::size_t node_unknowns() const { return n_nodes_; }
  std::size_t size() const { return n_nodes_ + n_aux_; }
  const NodeRef& node(int id) const { return node_ref_[static_cast<std::size_t>(id)]; }
  std::size_t row(std::size_t unknown) const { return perm_[unknown]; }
  std::size_t half_bandwidth() const { return bandwidth_; }
  const std::vector<std::vector<std::size_t>>& adjacency() const { return adj_; }
  const std::vector<std::size_t>& permutation() const { return perm_; }

  const std::vector<CompiledJunction>& junctions() const { return junctions_; }
  const std::vector<CompiledLinear>& inductors() const { return inductors_; }
  const std::vector<CompiledLinear>& capacitors() const { return capacitors_; }
  const std::vector<CompiledLinear>& conductances() const { return conductances_; }
  const std::vector<CompiledCoupledInductor>& coupled() const { return coupled_; }
  const std::vector<CompiledSource>& sources() const { return sources_; }

  /// Scale for current residuals: largest critical current, else 1 uA.
  double current_scale() const { return current_scale_; }

  /// Phase sources scaled by `lambda` (used for continuation); offsets of
  /// every node are rebuilt.
  void scale_phase_sources(double lambda) {
    phase_scale_ = lambda;
    resolve_offsets();
    compile_elements();
  }

  NodeRef port_node(int element_index) const {
    return node(net_->elements.at(static_cast<std::size_t>(element_index)).a);
  }

 private:
  void resolve_nodes(bool allow_phase_offsets) {
    const Netlist& net = *net_;
    const auto n = static_cast<std::size_t>(net.node_count);
    std::vector<std::vector<std::pair<int, double>>> links(n);  // (other, phi_other - phi_self)
    for (const Element& e : net.elements) {
      if (e.kind != ElementKind::phase_source) continue;
      if (!allow_phase_offsets)
        throw ConfigurationError("phase sources are not supported by this solver");
      links[static_cast<std::size_t>(e.a)].push_back({e.b, -e.value});
      links[static_cast<std::size_t>(e.b)].push_back({e.a, e.value});
    }
    links_ = std::move(links);
    root_.assign(n, -1);
    raw_offset_.assign(n, 0.0);
    // Ground's component first so that ground is its root.
    auto flood = [&](int start) {
      std::queue<int> q;
      q.push(start);
      root_[static_cast<std::size_t>(start)] = start;
      raw_offset_[static_cast<std::size_t>(start)] = 0.0;
      while (!q.empty()) {
        const int v = q.front();
        q.pop();
        for (auto [w, d] : links_[static_cast<std::size_t>(v)]) {
          if (root_[static_cast<std::size_t>(w)] >= 0) continue;
          root_[static_cast<std::size_t>(w)] = start;
          raw_offset_[static_cast<std::size_t>(w)] = raw_offset_[static_cast<std::size_t>(v)] + d;
          q.push(w);
        }
      }
    };
    flood(net.ground);
    unknown_of_root_.assign(n, -1);
    n_nodes_ = 0;
    for (int v = 0; v < net.node_count; ++v) {
      if (root_[static_cast<std::size_t>(v)] < 0) flood(v);
      const int r = root_[static_cast<std::size_t>(v)];
      if (r != net.ground && unknown_of_root_[static_cast<std::size_t>(r)] < 0)
        unknown_of_root_[static_cast<std::size_t>(r)] = static_cast<int>(n_nodes_++);
    }
    // Branch currents for coupled inductors.
    aux_of_element_.assign(net.elements.size(), -1);
    n_aux_ = 0;
    for (const Element& e : net.elements) {
      if (e.kind != ElementKind::mutual) continue;
      for (int br : {e.branch_a, e.branch_b})
        if (aux_of_element_[static_cast<std::size_t>(br)] < 0)
          aux_of_element_[static_cast<std::size_t>(br)] = static_cast<int>(n_nodes_ + n_aux_++);
    }
    resolve_offsets();
  }

  void resolve_offsets() {
    const auto n = static_cast<std::size_t>(net_->node_count);
    node_ref_.assign(n, {});
    for (std::size_t v = 0; v < n; ++v) {
      const int r = root_[v];
      node_ref_[v].unknown = unknown_of_root_[static_cast<std::size_t>(r)];
      node_ref_[v].offset = phase_scale_ * raw_offset_[v];
    }
  }

  Branch branch(const Element& e) const { return {node(e.a), node(e.b)}; }

  void compile_elements() {
    const Netlist& net = *net_;
    junctions_.clear();
    inductors_.clear();
    capacitors_.clear();
    conductances_.clear();
    coupled_.clear();
    sources_.clear();
    current_scale_ = 0.0;
    for (std::size_t i = 0; i < net.elements.size(); ++i) {
      const Element& e = net.elements[i];
      const int idx = static_cast<int>(i);
      switch (e.kind) {
        case ElementKind::inductor:
          if (aux_of_element_[i] >= 0) {
            coupled_.push_back({branch(e), idx, aux_of_element_[i], e.value, {}});
          } else {
            inductors_.push_back({branch(e), idx, e.value});
          }
          break;
        case ElementKind::capacitor: capacitors_.push_back({branch(e), idx, e.value}); break;
        case ElementKind::resistor:
        case ElementKind::port: conductances_.push_back({branch(e), idx, 1.0 / e.value}); break;
        case ElementKind::josephson: {
          const auto& j = e.junction;
          junctions_.push_back({branch(e), idx, j.critical_current, j.capacitance,
                                j.normal_resistance ? 1.0 / *j.normal_resistance : 0.0});
          current_scale_ = std::max(current_scale_, j.critical_current);
          break;
        }
        case ElementKind::dc_current:
          sources_.push_back({branch(e), idx, e.value, 0.0, 0.0, false});
          break;
        case ElementKind::sine_current:
          sources_.push_back({branch(e), idx, e.value, e.frequency, e.phase, true});
          break;
        case ElementKind::mutual:
        case ElementKind::phase_source: break;
      }
    }
    for (const Element& e : net.elements) {
      if (e.kind != ElementKind::mutual) continue;
      const double m = net.mutual_inductance(e);
      auto find = [&](int element) -> CompiledCoupledInductor& {
        for (auto& c : coupled_)
          if (c.element == element) return c;
        throw ConfigurationError("mutual references a missing inductor");
      };
      auto& ca = find(e.branch_a);
      auto& cb = find(e.branch_b);
      ca.partners.push_back({cb.aux, m});
      cb.partners.push_back({ca.aux, m});
    }
    if (current_scale_ == 0.0) current_scale_ = 1e-6;
  }

  void order_unknowns() {
    const std::size_t n = size();
    adj_.assign(n, {});
    auto link = [&](int u, int v) {
      if (u < 0 || v < 0 || u == v) return;
      adj_[static_cast<std::size_t>(u)].push_back(static_cast<std::size_t>(v));
      adj_[static_cast<std::size_t>(v)].push_back(static_cast<std::size_t>(u));
    };
    auto link_branch = [&](const Branch& b) { link(b.a.unknown, b.b.unknown); };
    for (const auto& j : junctions_) link_branch(j.br);
    for (const auto& l : inductors_) link_branch(l.br);
    for (const auto& c : capacitors_) link_branch(c.br);
    for (const auto& g : conductances_) link_branch(g.br);
    for (const auto& c : coupled_) {
      link_branch(c.br);
      link(c.aux, c.br.a.unknown);
      link(c.aux, c.br.b.unknown);
      for (auto [other, m] : c.partners) link(c.aux, other);
    }
    for (auto& a : adj_) {
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    perm_ = linalg::reverse_cuthill_mckee(adj_);
    bandwidth_ = linalg::bandwidth(adj_, perm_);
  }

  const Netlist* net_;
  std::vector<std::vector<std::pair<int, double>>> links_;
  std::vector<int> root_;
  std::vector<double> raw_offset_;
  std::vector<int> unknown_of_root_;
  std::vector<int> aux_of_element_;
  std::vector<NodeRef> node_ref_;
  std::size_t n_nodes_ = 0, n_aux_ = 0;
  double phase_scale_ = 1.0;
  double current_scale_ = 1e-6;

  std::vector<CompiledJunction> junctions_;
  std::vector<CompiledLinear> inductors_, capacitors_, conductances_;
  std::vector<CompiledCoupledInductor> coupled_;
  std::vector<CompiledSource> sources_;

  std::vector<std::vector<std::size_t>> adj_;
  std::vector<std::size_t> perm_;
  std::size_t bandwidth_ = 0;
};

// ---------------------------------------------------------------------------
// Static operating point

/// Relative gauge stiffness that pins floating superconducting islands.
inline constexpr double kGaugeStiffness = 1e-12;

struct DcSolution {
  std::vector<double> x;  // unknowns (node phases, then branch currents)
  int iterations = 0;
  double residual = 0.0;
};

/// Static equilibrium with dc sources and phase sources at full value and all
/// time-varying sources off. Capacitors and resistors carry no static current.
/// Reached by continuation of the static sources from zero.
inline DcSolution solve_dc(CircuitModel& model, double tolerance = 1e-12, int max_iters = 100,
                           int continuation_steps = 16) {
  const std::size_t n = model.size();
  const std::size_t nn = model.node_unknowns();
  const double iscale = model.current_scale();
  const double gauge = kGaugeStiffness * iscale;
  DcSolution sol;
  sol.x.assign(n, 0.0);

  bool any_static = false;
  for (const auto& s : model.sources())
    if (!s.sinusoidal && s.value != 0.0) any_static = true;
  for (const Element& e : model.netlist().elements)
    if (e.kind == ElementKind::phase_source && e.value != 0.0) any_static = true;
  if (!any_static) return sol;

  const std::size_t bw = model.half_bandwidth();
  linalg::BandMatrix<double> jac(n, bw, bw);
  linalg::BandedLU<double> lu;
  std::vector<double> f(n);

  auto assemble = [&](double lambda, const std::vector<double>& x) {
    jac.set_zero();
    std::fill(f.begin(), f.end(), 0.0);
    auto stamp = [&](const Branch& b, double current, double g) {
      const int ua = b.a.unknown, ub = b.b.unknown;
      if (ua >= 0) f[model.row(static_cast<std::size_t>(ua))] += current;
      if (ub >= 0) f[model.row(static_cast<std::size_t>(ub))] -= current;
      if (ua >= 0) jac.add(model.row(ua), model.row(ua), g);
      if (ub >= 0) jac.add(model.row(ub), model.row(ub), g);
      if (ua >= 0 && ub >= 0) {
        jac.add(model.row(ua), model.row(ub), -g);
        jac.add(model.row(ub), model.row(ua), -g);
      }
    };
    for (const auto& l : model.inductors())
      stamp(l.br, kReducedFluxQuantum / l.value * l.br.drop(x), kReducedFluxQuantum / l.value);
    for (const auto& j : model.junctions()) {
      const double d = j.br.drop(x);
      stamp(j.br, j.ic * std::sin(d), j.ic * std::cos(d));
    }
    for (const auto& c : model.coupled()) {
      const auto ra = c.br.a.unknown, rb = c.br.b.unknown;
      const double i = x[static_cast<std::size_t>(c.aux)];
      const std::size_t raux = model.row(static_cast<std::size_t>(c.aux));
      if (ra >= 0) {
        f[model.row(ra)] += i;
        jac.add(model.row(ra), raux, 1.0);
      }
      if (rb >= 0) {
        f[model.row(rb)] -= i;
        jac.add(model.row(rb), raux, -1.0);
      }
      // (Phi_n / L) * drop - i - sum (M / L) i_partner = 0
      double r = kReducedFluxQuantum / c.inductance * c.br.drop(x) - i;
      jac.add(raux, raux, -1.0);
      if (ra >= 0) jac.add(raux, model.row(ra), kReducedFluxQuantum / c.inductance);
      if (rb >= 0) jac.add(raux, model.row(rb), -kReducedFluxQuantum / c.inductance);
      for (auto [other, m] : c.partners) {
        r -= m / c.inductance * x[static_cast<std::size_t>(other)];
        jac.add(raux, model.row(static_cast<std::size_t>(other)), -m / c.inductance);
      }
      f[raux] += r;
    }
    for (const auto& s : model.sources()) {
      if (s.sinusoidal) continue;
      const double v = lambda * s.value;
      if (s.br.a.unknown >= 0) f[model.row(s.br.a.unknown)] -= v;
      if (s.br.b.unknown >= 0) f[model.row(s.br.b.unknown)] += v;
    }
    for (std::size_t u = 0; u < nn; ++u) {
      f[model.row(u)] += gauge * x[u];
      jac.add(model.row(u), model.row(u), gauge);
    }
  };

  auto norm = [&]() {
    double m = 0.0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
  };

  for (int step = 1; step <= continuation_steps; ++step) {
    const double lambda = static_cast<double>(step) / continuation_steps;
    model.scale_phase_sources(lambda);
    bool converged = false;
    for (int it = 0; it < max_iters; ++it) {
      assemble(lambda, sol.x);
      const double r0 = norm();
      sol.residual = r0;
      if (r0 <= tolerance * iscale) {
        converged = true;
        break;
      }
      if (!lu.factorize(jac)) throw ConvergenceError("dc operating point: singular Jacobian", 0.0, r0);
      std::vector<double> rhs(n);
      for (std::size_t r = 0; r < n; ++r) rhs[r] = -f[r];
      lu.solve(rhs);
      double t = 1.0;
      const std::vector<double> x0 = sol.x;
      for (int ls = 0; ls < 30; ++ls) {
        for (std::size_t u = 0; u < n; ++u) sol.x[u] = x0[u] + t * rhs[model.row(u)];
        assemble(lambda, sol.x);
        if (norm() < r0 || ls == 29) break;
        t *= 0.5;
      }
      ++sol.iterations;
      // Stagnation at the roundoff floor counts as convergence.
      double step_max = 0.0;
      for (std::size_t u = 0; u < n; ++u) {
        const double scale = u < nn ? 1.0 : iscale;
        step_max = std::max(step_max, std::abs(sol.x[u] - x0[u]) / scale);
      }
      if (step_max <= 1e-13 && norm() <= 1e3 * tolerance * iscale) {
        sol.residual = norm();
        converged = true;
        break;
      }
    }
    if (!converged)
      throw ConvergenceError("dc operating point did not converge", 0.0, sol.residual);
  }
  model.scale_phase_sources(1.0);
  return sol;
}

}  // namespace jtwpa
