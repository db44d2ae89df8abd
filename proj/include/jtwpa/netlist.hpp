#pragma once

// Circuit graph: nodes, two-terminal elements, mutual couplings and ports,
// plus builders for the SNAIL amplifier under both flux-bias schemes.

#include <cmath>
#include <cstddef>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jtwpa/device.hpp"
#include "jtwpa/errors.hpp"
#include "jtwpa/units.hpp"

namespace jtwpa {

enum class ElementKind {
  inductor,
  capacitor,
  resistor,
  josephson,
  mutual,
  sine_current,
  dc_current,
  phase_source,
  port
};

inline std::string_view to_string(ElementKind k) {
  switch (k) {
    case ElementKind::inductor: return "inductor";
    case ElementKind::capacitor: return "capacitor";
    case ElementKind::resistor: return "resistor";
    case ElementKind::josephson: return "josephson";
    case ElementKind::mutual: return "mutual";
    case ElementKind::sine_current: return "sinusoidal-current-source";
    case ElementKind::dc_current: return "dc-current-source";
    case ElementKind::phase_source: return "phase-source";
    case ElementKind::port: return "port";
  }
  return "?";
}

inline ElementKind element_kind_from_string(std::string_view s) {
  for (auto k : {ElementKind::inductor, ElementKind::capacitor, ElementKind::resistor,
                 ElementKind::josephson, ElementKind::mutual, ElementKind::sine_current,
                 ElementKind::dc_current, ElementKind::phase_source, ElementKind::port})
    if (to_string(k) == s) return k;
  throw DomainError("unknown element kind '" + std::string(s) + "'");
}

/// One circuit element. Terminal convention: branch quantities (phase drop,
/// current) are measured from node `a` to node `b`. Current sources inject
/// their value into `a` and draw it from `b`. A phase source imposes
/// phi(a) - phi(b) = value.
struct Element {
  ElementKind kind = ElementKind::inductor;
  std::string name;
  int a = 0;
  int b = 0;
  /// L (H), C (F), R (Ohm), dc current (A), phase (rad), port impedance
  /// (Ohm), coupling k, or sine amplitude (A), depending on kind.
  double value = 0.0;
  JunctionParams junction = {};  // josephson
  int branch_a = -1;        // mutual: element indices of the coupled inductors
  int branch_b = -1;
  double frequency = 0.0;  // sine, Hz
  double phase = 0.0;      // sine, rad
  int port_number = 0;     // port

  bool operator==(const Element& o) const {
    return kind == o.kind && name == o.name && a == o.a && b == o.b && value == o.value &&
           junction.critical_current == o.junction.critical_current &&
           junction.capacitance == o.junction.capacitance &&
           junction.normal_resistance == o.junction.normal_resistance &&
           branch_a == o.branch_a && branch_b == o.branch_b && frequency == o.frequency &&
           phase == o.phase && port_number == o.port_number;
  }
};

struct Netlist {
  int node_count = 1;  // includes ground
  int ground = 0;
  std::vector<Element> elements;
  int input_port = -1;   // element index
  int output_port = -1;  // element index

  int add_node() { return node_count++; }

  int add(Element e) {
    elements.push_back(std::move(e));
    return static_cast<int>(elements.size()) - 1;
  }

  int add_inductor(int a, int b, double l, std::string name = {}) {
    return add({.kind = ElementKind::inductor, .name = std::move(name), .a = a, .b = b, .value = l});
  }
  int add_capacitor(int a, int b, double c, std::string name = {}) {
    return add({.kind = ElementKind::capacitor, .name = std::move(name), .a = a, .b = b, .value = c});
  }
  int add_resistor(int a, int b, double r, std::string name = {}) {
    return add({.kind = ElementKind::resistor, .name = std::move(name), .a = a, .b = b, .value = r});
  }
  int add_junction(int a, int b, JunctionParams j, std::string name = {}) {
    return add({.kind = ElementKind::josephson, .name = std::move(name), .a = a, .b = b,
                .junction = j});
  }
  int add_phase_source(int a, int b, double phase, std::string name = {}) {
    return add({.kind = ElementKind::phase_source, .name = std::move(name), .a = a, .b = b,
                .value = phase});
  }
  int add_dc_current(int a, int b, double current, std::string name = {}) {
    return add({.kind = ElementKind::dc_current, .name = std::move(name), .a = a, .b = b,
                .value = current});
  }
  int add_sine_current(int a, int b, double amplitude, double frequency, double phase,
                       std::string name = {}) {
    return add({.kind = ElementKind::sine_current, .name = std::move(name), .a = a, .b = b,
                .value = amplitude, .frequency = frequency, .phase = phase});
  }
  int add_mutual(int inductor_a, int inductor_b, double k, std::string name = {}) {
    return add({.kind = ElementKind::mutual, .name = std::move(name), .value = k,
                .branch_a = inductor_a, .branch_b = inductor_b});
  }
  int add_port(int node, double impedance, int number, std::string name = {}) {
    const int idx = add({.kind = ElementKind::port, .name = std::move(name), .a = node,
                         .b = ground, .value = impedance, .port_number = number});
    if (number == 1) input_port = idx;
    if (number == 2) output_port = idx;
    return idx;
  }

  const Element& input() const { return elements.at(static_cast<std::size_t>(input_port)); }
  const Element& output() const { return elements.at(static_cast<std::size_t>(output_port)); }

  double mutual_inductance(const Element& m) const {
    const double la = elements.at(static_cast<std::size_t>(m.branch_a)).value;
    const double lb = elements.at(static_cast<std::size_t>(m.branch_b)).value;
    return m.value * std::sqrt(la * lb);
  }

  bool operator==(const Netlist& o) const {
    return node_count == o.node_count && ground == o.ground && elements == o.elements &&
           input_port == o.input_port && output_port == o.output_port;
  }
};

// ---------------------------------------------------------------------------
// Validation

struct Diagnostic {
  int element = -1;
  int node = -1;
  std::string message;
};

inline bool is_superconducting(ElementKind k) {
  return k == ElementKind::inductor || k == ElementKind::josephson ||
         k == ElementKind::phase_source;
}

inline bool has_terminals(ElementKind k) { return k != ElementKind::mutual; }

namespace detail {

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(static_cast<std::size_t>(n)) {
    for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  bool unite(int x, int y) {
    x = find(x);
    y = find(y);
    if (x == y) return false;
    parent[static_cast<std::size_t>(x)] = y;
    return true;
  }
};

inline bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace detail

/// Empty iff every netlist invariant holds; one entry per violation.
inline std::vector<Diagnostic> validate(const Netlist& net) {
  std::vector<Diagnostic> out;
  const int n = net.node_count;
  if (n < 1 || net.ground < 0 || net.ground >= n) {
    out.push_back({-1, net.ground, "ground node id out of range"});
    return out;
  }
  auto node_ok = [&](int v) { return v >= 0 && v < n; };

  for (std::size_t i = 0; i < net.elements.size(); ++i) {
    const Element& e = net.elements[i];
    const int idx = static_cast<int>(i);
    if (has_terminals(e.kind)) {
      if (!node_ok(e.a) || !node_ok(e.b)) {
        out.push_back({idx, -1, "terminal node id out of range"});
        continue;
      }
      if (e.a == e.b) out.push_back({idx, e.a, "element terminals are shorted"});
    }
    switch (e.kind) {
      case ElementKind::inductor:
      case ElementKind::capacitor:
      case ElementKind::resistor:
      case ElementKind::port:
        if (!detail::finite_positive(e.value))
          out.push_back({idx, -1, std::string(to_string(e.kind)) + " value must be > 0"});
        break;
      case ElementKind::josephson:
        try {
          e.junction.validate();
        } catch (const DomainError& err) {
          out.push_back({idx, -1, err.what()});
        }
        break;
      case ElementKind::mutual: {
        auto is_inductor = [&](int k) {
          return k >= 0 && k < static_cast<int>(net.elements.size()) &&
                 net.elements[static_cast<std::size_t>(k)].kind == ElementKind::inductor;
        };
        if (!is_inductor(e.branch_a) || !is_inductor(e.branch_b) || e.branch_a == e.branch_b)
          out.push_back({idx, -1, "mutual must couple inductors"});
        if (!std::isfinite(e.value) || std::abs(e.value) > 1.0)
          out.push_back({idx, -1, "mutual coupling |k| must be <= 1"});
        break;
      }
      case ElementKind::sine_current:
        if (!std::isfinite(e.value) || !(e.frequency >= 0.0) || !std::isfinite(e.phase))
          out.push_back({idx, -1, "sinusoidal source needs finite amplitude and frequency >= 0"});
        break;
      case ElementKind::dc_current:
      case ElementKind::phase_source:
        if (!std::isfinite(e.value))
          out.push_back({idx, -1, std::string(to_string(e.kind)) + " value must be finite"});
        break;
    }
  }
  if (!out.empty()) return out;

  // Connectivity to ground through any terminal element.
  detail::DisjointSet all(n);
  for (const Element& e : net.elements)
    if (has_terminals(e.kind)) all.unite(e.a, e.b);
  for (int v = 0; v < n; ++v)
    if (all.find(v) != all.find(net.ground))
      out.push_back({-1, v, "disconnected node " + std::to_string(v)});

  // Phase sources must close a superconducting loop and must not form loops
  // among themselves.
  detail::DisjointSet sources(n);
  for (std::size_t i = 0; i < net.elements.size(); ++i) {
    const Element& e = net.elements[i];
    if (e.kind != ElementKind::phase_source) continue;
    if (!sources.unite(e.a, e.b))
      out.push_back({static_cast<int>(i), -1, "phase sources form a closed loop"});
    detail::DisjointSet sc(n);
    for (std::size_t j = 0; j < net.elements.size(); ++j)
      if (j != i && is_superconducting(net.elements[j].kind))
        sc.unite(net.elements[j].a, net.elements[j].b);
    if (sc.find(e.a) != sc.find(e.b))
      out.push_back({static_cast<int>(i), -1, "phase source outside a superconducting loop"});
  }

  auto check_port = [&](int idx, int number) {
    if (idx < 0) return;
    if (idx >= static_cast<int>(net.elements.size()) ||
        net.elements[static_cast<std::size_t>(idx)].kind != ElementKind::port ||
        net.elements[static_cast<std::size_t>(idx)].port_number != number)
      out.push_back({idx, -1, "port reference " + std::to_string(number) + " is not a port"});
  };
  check_port(net.input_port, 1);
  check_port(net.output_port, 2);
  return out;
}

// ---------------------------------------------------------------------------
// Flux bias through a mutual inductance

/// Bias current giving `target_flux` (Phi0 units) through mutual inductance M.
/// Positive flux needs a negative current.
inline double dc_current_for_flux(double target_flux, double mutual) {
  if (mutual == 0.0 || !std::isfinite(mutual))
    throw DomainError("dc_current_for_flux: mutual inductance must be non-zero");
  return -target_flux * kFluxQuantum / mutual;
}

inline double flux_from_current(double current, double mutual) {
  return -current * mutual / kFluxQuantum;
}

/// Mutual inductance and coupling chosen for a mutual-loop bias.
struct MutualDesign {
  double coupling = 0.0;
  double mutual = 0.0;
  bool clamped = false;
};

inline MutualDesign design_mutual(const FluxBias& fb) {
  const double m_required = 0.5 * kFluxQuantum / fb.dc_current_per_half_quantum;
  const double m_max = std::sqrt(fb.l_add * fb.l_ext);
  MutualDesign d;
  d.coupling = m_required / m_max;
  d.mutual = m_required;
  if (d.coupling > 1.0) {
    if (fb.strict_current)
      throw ConfigurationError(
          "mutual-loop bias: target flux unreachable with |k| <= 1 at the requested current");
    d.coupling = 1.0;
    d.mutual = m_max;
    d.clamped = true;
  }
  return d;
}

// ---------------------------------------------------------------------------
// SNAIL amplifier builder

struct BuildOptions {
  /// Omit junction shunt resistors (harmonic-balance and energy checks).
  bool lossless = false;
};

/// Builds the SNAIL ladder. Node numbering: ground 0, input chain node 1;
/// then per cell the internal large-arm nodes, the small-arm node, the bias
/// loop node (mutual scheme) and finally the next chain node, which carries
/// the ground capacitance.
inline Netlist build_snail_twpa(const TwpaDeviceSpec& spec, BuildOptions opts = {}) {
  spec.validate();
  const SnailParams& cell = spec.cell;
  const FluxBias& fb = spec.flux_bias;

  JunctionParams large = cell.large_junction;
  JunctionParams small{large.critical_current * cell.junction_ratio,
                       large.capacitance * cell.junction_ratio, std::nullopt};
  if (large.normal_resistance) small.normal_resistance = *large.normal_resistance / cell.junction_ratio;
  if (opts.lossless) {
    large.normal_resistance.reset();
    small.normal_resistance.reset();
  }

  MutualDesign md;
  if (fb.scheme == FluxScheme::mutual_loop) md = design_mutual(fb);

  Netlist net;
  int left = net.add_node();
  net.add_port(left, spec.port_impedance, 1, "P1");

  for (int k = 0; k < spec.n_cells; ++k) {
    const std::string tag = std::to_string(k);
    const double sign = (spec.alternating_polarity && (k % 2 == 1)) ? -1.0 : 1.0;
    const double flux = sign * fb.target_flux;

    std::vector<int> inner;
    for (int j = 0; j + 1 < cell.n_large; ++j) inner.push_back(net.add_node());
    const bool biased = fb.scheme != FluxScheme::none;
    const int mid = biased ? net.add_node() : -1;
    const int loop = fb.scheme == FluxScheme::mutual_loop ? net.add_node() : -1;
    const int right = net.add_node();

    int prev = left;
    for (int j = 0; j < cell.n_large; ++j) {
      const int next = (j + 1 < cell.n_large) ? inner[static_cast<std::size_t>(j)] : right;
      net.add_junction(prev, next, large, "JL" + tag + "." + std::to_string(j));
      prev = next;
    }
    switch (fb.scheme) {
      case FluxScheme::none:
        net.add_junction(left, right, small, "JS" + tag);
        break;
      case FluxScheme::phase_source:
        net.add_junction(left, mid, small, "JS" + tag);
        net.add_phase_source(right, mid, kTwoPi * flux, "PS" + tag);
        break;
      case FluxScheme::mutual_loop: {
        net.add_junction(left, mid, small, "JS" + tag);
        const int ladd = net.add_inductor(mid, right, fb.l_add, "LA" + tag);
        const int lext = net.add_inductor(loop, net.ground, fb.l_ext, "LX" + tag);
        net.add_mutual(ladd, lext, md.coupling, "K" + tag);
        net.add_dc_current(loop, net.ground, dc_current_for_flux(flux, md.mutual), "IDC" + tag);
        break;
      }
    }
    net.add_capacitor(right, net.ground, cell.ground_capacitance, "CG" + tag);
    left = right;
  }
  net.add_port(left, spec.port_impedance, 2, "P2");
  return net;
}

/// Input and output ports joined by a wire: the calibration reference.
inline Netlist build_through(double port_impedance) {
  Netlist net;
  const int n = net.add_node();
  net.add_port(n, port_impedance, 1, "P1");
  net.add_port(n, port_impedance, 2, "P2");
  return net;
}

// ---------------------------------------------------------------------------
// JSON interchange

inline nlohmann::json element_to_json(const Element& e) {
  nlohmann::json j;
  j["kind"] = std::string(to_string(e.kind));
  if (!e.name.empty()) j["name"] = e.name;
  switch (e.kind) {
    case ElementKind::inductor: j["nodes"] = {e.a, e.b}; j["inductance"] = e.value; break;
    case ElementKind::capacitor: j["nodes"] = {e.a, e.b}; j["capacitance"] = e.value; break;
    case ElementKind::resistor: j["nodes"] = {e.a, e.b}; j["resistance"] = e.value; break;
    case ElementKind::josephson:
      j["nodes"] = {e.a, e.b};
      j["critical_current"] = e.junction.critical_current;
      j["capacitance"] = e.junction.capacitance;
      if (e.junction.normal_resistance) j["normal_resistance"] = *e.junction.normal_resistance;
      break;
    case ElementKind::mutual:
      j["coupling"] = e.value;
      j["branches"] = {e.branch_a, e.branch_b};
      break;
    case ElementKind::sine_current:
      j["nodes"] = {e.a, e.b};
      j["amplitude"] = e.value;
      j["frequency"] = e.frequency;
      j["phase"] = e.phase;
      break;
    case ElementKind::dc_current: j["nodes"] = {e.a, e.b}; j["current"] = e.value; break;
    case ElementKind::phase_source: j["nodes"] = {e.a, e.b}; j["phase"] = e.value; break;
    case ElementKind::port:
      j["nodes"] = {e.a, e.b};
      j["impedance"] = e.value;
      j["port"] = e.port_number;
      break;
  }
  return j;
}

inline Element element_from_json(const nlohmann::json& j) {
  Element e;
  e.kind = element_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("name")) e.name = j.at("name").get<std::string>();
  if (e.kind != ElementKind::mutual) {
    const auto& nodes = j.at("nodes");
    if (!nodes.is_array() || nodes.size() != 2)
      throw DomainError("element 'nodes' must be a two-element array");
    e.a = nodes[0].get<int>();
    e.b = nodes[1].get<int>();
  }
  switch (e.kind) {
    case ElementKind::inductor: e.value = j.at("inductance").get<double>(); break;
    case ElementKind::capacitor: e.value = j.at("capacitance").get<double>(); break;
    case ElementKind::resistor: e.value = j.at("resistance").get<double>(); break;
    case ElementKind::josephson:
      e.junction.critical_current = j.at("critical_current").get<double>();
      e.junction.capacitance = j.at("capacitance").get<double>();
      if (j.contains("normal_resistance"))
        e.junction.normal_resistance = j.at("normal_resistance").get<double>();
      break;
    case ElementKind::mutual:
      e.value = j.at("coupling").get<double>();
      e.branch_a = j.at("branches").at(0).get<int>();
      e.branch_b = j.at("branches").at(1).get<int>();
      break;
    case ElementKind::sine_current:
      e.value = j.at("amplitude").get<double>();
      e.frequency = j.at("frequency").get<double>();
      e.phase = j.value("phase", 0.0);
      break;
    case ElementKind::dc_current: e.value = j.at("current").get<double>(); break;
    case ElementKind::phase_source: e.value = j.at("phase").get<double>(); break;
    case ElementKind::port:
      e.value = j.at("impedance").get<double>();
      e.port_number = j.at("port").get<int>();
      break;
  }
  return e;
}

inline nlohmann::json to_json(const Netlist& net) {
  nlohmann::json j;
  j["format"] = "jtwpa-netlist/1";
  j["node_count"] = net.node_count;
  j["ground"] = net.ground;
  j["ports"] = {{"input", net.input_port}, {"output", net.output_port}};
  nlohmann::json els = nlohmann::json::array();
  for (const Element& e : net.elements) els.push_back(element_to_json(e));
  j["elements"] = std::move(els);
  return j;
}

inline Netlist netlist_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "jtwpa-netlist/1")
    throw DomainError("netlist document: missing or unsupported 'format'");
  Netlist net;
  net.node_count = j.at("node_count").get<int>();
  net.ground = j.value("ground", 0);
  net.input_port = j.at("ports").at("input").get<int>();
  net.output_port = j.at("ports").at("output").get<int>();
  for (const auto& je : j.at("elements")) net.elements.push_back(element_from_json(je));
  return net;
}

}  // namespace jtwpa
