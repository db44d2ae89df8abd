#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <numbers>

#include "jtwpa/netlist.hpp"

using namespace jtwpa;
using Catch::Approx;

namespace {

std::map<ElementKind, int> count_kinds(const Netlist& net) {
  std::map<ElementKind, int> m;
  for (const auto& e : net.elements) ++m[e.kind];
  return m;
}

TwpaDeviceSpec small_device(int cells, FluxScheme scheme, double flux) {
  TwpaDeviceSpec d = snail250_device();
  d.n_cells = cells;
  d.flux_bias.scheme = scheme;
  d.flux_bias.target_flux = flux;
  return d;
}

}  // namespace

TEST_CASE("Phase-source builder element count") {
  for (int cells : {2, 250}) {
    const Netlist net = build_snail_twpa(small_device(cells, FluxScheme::phase_source, 0.5));
    const auto m = count_kinds(net);
    // Per cell: n_large + 1 junctions, one phase source, one ground capacitor.
    CHECK(m.at(ElementKind::josephson) == cells * 4);
    CHECK(m.at(ElementKind::phase_source) == cells);
    CHECK(m.at(ElementKind::capacitor) == cells);
    CHECK(m.at(ElementKind::port) == 2);
    CHECK(static_cast<int>(net.elements.size()) == cells * (3 + 1 + 1 + 1) + 2);
    CHECK(validate(net).empty());
  }
  // Two cells by hand: ports P1, P2 and elements in cell order.
  const Netlist two = build_snail_twpa(small_device(2, FluxScheme::phase_source, 0.25));
  CHECK(two.elements.front().name == "P1");
  CHECK(two.elements.back().name == "P2");
  CHECK(two.elements[1].name == "JL0.0");
  CHECK(two.elements[4].name == "JS0");
  CHECK(two.elements[5].name == "PS0");
  CHECK(two.elements[6].name == "CG0");
  // Nodes: ground, chain node, 2 inner, mid, right per cell.
  CHECK(two.node_count == 1 + 1 + 2 * 4);
}

TEST_CASE("Alternating polarity of phase sources") {
  const Netlist net = build_snail_twpa(small_device(4, FluxScheme::phase_source, 0.3));
  std::vector<double> ps;
  for (const auto& e : net.elements)
    if (e.kind == ElementKind::phase_source) ps.push_back(e.value);
  REQUIRE(ps.size() == 4);
  CHECK(ps[0] == Approx(2 * std::numbers::pi * 0.3));
  CHECK(ps[1] == Approx(-2 * std::numbers::pi * 0.3));
  for (std::size_t i = 0; i + 1 < ps.size(); ++i) CHECK(ps[i] + ps[i + 1] == Approx(0.0).margin(1e-15));

  TwpaDeviceSpec uniform = small_device(4, FluxScheme::phase_source, 0.3);
  uniform.alternating_polarity = false;
  for (const auto& e : build_snail_twpa(uniform).elements)
    if (e.kind == ElementKind::phase_source) CHECK(e.value == Approx(2 * std::numbers::pi * 0.3));
}

TEST_CASE("Small junction scaling and lossless switch") {
  const TwpaDeviceSpec d = small_device(1, FluxScheme::none, 0.0);
  const Netlist rsj = build_snail_twpa(d);
  const Netlist lossless = build_snail_twpa(d, {true});
  for (const auto& e : rsj.elements) {
    if (e.kind != ElementKind::josephson) continue;
    REQUIRE(e.junction.normal_resistance.has_value());
    if (e.name == "JS0") {
      CHECK(e.junction.critical_current == Approx(1.47e-6 * 0.05));
      CHECK(e.junction.capacitance == Approx(31e-15 * 0.05));
      CHECK(*e.junction.normal_resistance == Approx(*d.cell.large_junction.normal_resistance / 0.05));
    } else {
      CHECK(e.junction.critical_current == Approx(1.47e-6));
    }
  }
  for (const auto& e : lossless.elements)
    if (e.kind == ElementKind::josephson) CHECK_FALSE(e.junction.normal_resistance.has_value());
}

TEST_CASE("Mutual-loop bias") {
  SECTION("dc current for flux") {
    CHECK(dc_current_for_flux(0.0, 413.5e-12) == 0.0);
    CHECK(dc_current_for_flux(0.5, 413.5e-12) == Approx(-2.5e-6).epsilon(1e-3));
    for (double x : {-0.4, 0.1, 0.5})
      CHECK(flux_from_current(dc_current_for_flux(x, 3e-10), 3e-10) == Approx(x).epsilon(1e-14));
    CHECK_THROWS_AS(dc_current_for_flux(0.5, 0.0), DomainError);
  }
  SECTION("reachable coupling: M = 413.5 pH, I_dc = -2.5 uA") {
    TwpaDeviceSpec d = small_device(2, FluxScheme::mutual_loop, 0.5);
    d.flux_bias.l_ext = 1.8e-6;  // sqrt(L_add L_ext) = 424 pH > 413.5 pH
    const Netlist net = build_snail_twpa(d);
    CHECK(validate(net).empty());
    int cell = 0;
    for (const auto& e : net.elements) {
      if (e.kind != ElementKind::mutual) continue;
      const double m = net.mutual_inductance(e);
      CHECK(m == Approx(413.5e-12).epsilon(1e-3));
      const auto& idc = net.elements[static_cast<std::size_t>(&e - &net.elements[0] + 1)];
      REQUIRE(idc.kind == ElementKind::dc_current);
      CHECK(std::abs(idc.value) == Approx(2.5e-6).epsilon(1e-12));
      const double sign = cell % 2 == 0 ? 1.0 : -1.0;
      CHECK(flux_from_current(idc.value, m) == Approx(sign * 0.5).epsilon(1e-12));
      ++cell;
    }
    CHECK(cell == 2);
  }
  SECTION("default loop clamps k to one and keeps the flux exact") {
    const TwpaDeviceSpec d = small_device(2, FluxScheme::mutual_loop, 0.5);
    const MutualDesign md = design_mutual(d.flux_bias);
    CHECK(md.clamped);
    CHECK(md.coupling == 1.0);
    const Netlist net = build_snail_twpa(d);
    for (std::size_t i = 0; i < net.elements.size(); ++i) {
      const auto& e = net.elements[i];
      if (e.kind != ElementKind::mutual) continue;
      CHECK(std::abs(flux_from_current(net.elements[i + 1].value, net.mutual_inductance(e))) ==
            Approx(0.5).epsilon(1e-12));
    }
    TwpaDeviceSpec strict = d;
    strict.flux_bias.strict_current = true;
    CHECK_THROWS_AS(build_snail_twpa(strict), ConfigurationError);
  }
}

TEST_CASE("Validation diagnostics") {
  SECTION("dangling node") {
    Netlist net = build_snail_twpa(small_device(2, FluxScheme::none, 0.0));
    net.add_node();
    const auto d = validate(net);
    REQUIRE(d.size() == 1);
    CHECK(d[0].message.find("disconnected node") != std::string::npos);
  }
  SECTION("mutual on a capacitor") {
    Netlist net = build_snail_twpa(small_device(2, FluxScheme::mutual_loop, 0.1));
    int cap = -1, ind = -1;
    for (std::size_t i = 0; i < net.elements.size(); ++i) {
      if (net.elements[i].kind == ElementKind::capacitor && cap < 0) cap = static_cast<int>(i);
      if (net.elements[i].kind == ElementKind::inductor && ind < 0) ind = static_cast<int>(i);
    }
    net.add_mutual(cap, ind, 0.5, "Kbad");
    const auto d = validate(net);
    REQUIRE(d.size() == 1);
    CHECK(d[0].message == "mutual must couple inductors");
    CHECK(d[0].element == static_cast<int>(net.elements.size()) - 1);
  }
  SECTION("phase source without a loop") {
    Netlist net;
    const int n = net.add_node();
    net.add_port(n, 50.0, 1);
    net.add_port(n, 50.0, 2);
    const int m = net.add_node();
    net.add_capacitor(m, net.ground, 1e-15);
    net.add_phase_source(n, m, 1.0);
    const auto d = validate(net);
    REQUIRE(d.size() == 1);
    CHECK(d[0].message == "phase source outside a superconducting loop");
  }
  SECTION("every builder variant validates") {
    for (auto scheme : {FluxScheme::none, FluxScheme::phase_source, FluxScheme::mutual_loop})
      for (bool alt : {true, false})
        for (bool lossless : {true, false}) {
          TwpaDeviceSpec d = small_device(5, scheme, 0.37);
          d.alternating_polarity = alt;
          CHECK(validate(build_snail_twpa(d, {lossless})).empty());
        }
  }
}

TEST_CASE("Builder determinism and JSON round trip") {
  const TwpaDeviceSpec d = small_device(3, FluxScheme::mutual_loop, 0.5);
  const Netlist a = build_snail_twpa(d);
  const Netlist b = build_snail_twpa(d);
  CHECK(a == b);
  const auto j = to_json(a);
  CHECK(j.at("format") == "jtwpa-netlist/1");
  const Netlist c = netlist_from_json(nlohmann::json::parse(j.dump()));
  CHECK(c == a);
  CHECK(to_json(c).dump() == j.dump());
}
