// jtwpa: command-line front end for the SNAIL TWPA simulator.
//
//   jtwpa run|sweep|compare|device-info CONFIG [--jobs N] [--output-dir DIR] [--dry-run]
//   jtwpa netlist export CONFIG [-o FILE]
//
// Exit codes: 0 success, 1 configuration error, 2 solver failure,
// 3 partial sweep. JTWPA_OUTPUT_DIR overrides the configured output directory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "jtwpa/analysis.hpp"
#include "jtwpa/config.hpp"
#include "jtwpa/hbal.hpp"
#include "jtwpa/netlist.hpp"
#include "jtwpa/spectral.hpp"
#include "jtwpa/transient.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace jtwpa;

namespace {

enum Exit { kOk = 0, kConfigError = 1, kSolverError = 2, kPartial = 3 };

struct Report {
  json doc = json::object();
  std::vector<std::string> files;
  bool partial = false;
  bool total_failure = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Writer {
 public:
  Writer(fs::path dir, Report& report) : dir_(std::move(dir)), report_(report) {}

  template <class Fn>
  void write(const std::string& name, Fn&& fn) {
    fs::create_directories(dir_);
    const fs::path p = dir_ / name;
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
    fn(os);
    os.close();
    if (!os) throw std::runtime_error("failed writing '" + p.string() + "'");
    report_.files.push_back(p.string());
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  Report& report_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

std::string method_file(GainMethod m) {
  std::string s(to_string(m));
  for (char& c : s)
    if (c == '-') c = '_';
  return "gain_" + s + ".csv";
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

json curve_json(const GainCurve& c, double seconds) {
  json j;
  j["method"] = std::string(to_string(c.method));
  j["wall_clock_s"] = seconds;
  j["points"] = c.points.size();
  j["diagnostics"] = c.diagnostics;
  if (!c.points.empty()) {
    const BandSummary b = band_summary(c);
    j["peak_frequency_Hz"] = b.peak_frequency;
    j["peak_gain_dB"] = b.peak_gain_db;
    j["band_3dB_Hz"] = {b.lower, b.upper};
  }
  return j;
}

// Points that failed outright (skipped f_s = f_p is not a failure).
bool has_failures(const GainCurve& c) {
  for (const auto& d : c.diagnostics)
    if (d.find("failed") != std::string::npos || d.find("no S-parameters") != std::string::npos)
      return true;
  return false;
}

GainCurve run_sweep(const RunConfig& cfg, GainMethod m, unsigned jobs, Writer& w, Report& rep,
                    const std::vector<double>& grid) {
  SweepOptions opt = cfg.sweep_options(jobs);
  opt.log = log_line;
  const auto t0 = std::chrono::steady_clock::now();
  SmallSignalSolution sp;
  GainCurve c = sweep_gain(cfg.device, cfg.operating_point(), grid, m, opt,
                           m == GainMethod::harmonic_balance ? &sp : nullptr);
  const double secs = seconds_since(t0);
  if (m == GainMethod::harmonic_balance) w.write("sparams.csv", [&](std::ostream& os) { write_csv(os, sp); });
  w.write(method_file(m), [&](std::ostream& os) { write_csv(os, c); });
  rep.doc["runs"].push_back(curve_json(c, secs));
  if (has_failures(c)) rep.partial = true;
  log_line(std::string(to_string(m)) + " sweep: " + std::to_string(c.points.size()) + " points in " +
           std::to_string(secs) + " s");
  return c;
}

std::vector<GainMethod> methods_for(SolverSelector s) {
  switch (s) {
    case SolverSelector::transient: return {GainMethod::transient};
    case SolverSelector::harmonic_balance: return {GainMethod::harmonic_balance};
    case SolverSelector::cme: return {GainMethod::cme};
    case SolverSelector::compare:
      return {GainMethod::cme, GainMethod::transient, GainMethod::harmonic_balance};
  }
  return {};
}

void write_merged(Writer& w, const std::vector<double>& grid, const std::vector<GainCurve>& curves) {
  w.write("compare.csv", [&](std::ostream& os) {
    os << "f_s_Hz";
    for (const auto& c : curves) {
      std::string s(to_string(c.method));
      for (char& ch : s)
        if (ch == '-') ch = '_';
      os << ',' << s << "_dB";
    }
    os << '\n';
    char buf[64];
    for (double f : grid) {
      std::snprintf(buf, sizeof buf, "%.17g", f);
      os << buf;
      for (const auto& c : curves) {
        os << ',';
        try {
          std::snprintf(buf, sizeof buf, "%.17g", c.at(f));
          os << buf;
        } catch (const LookupError&) {
          os << "nan";
        }
      }
      os << '\n';
    }
  });
}

// Single operating point: full record and spectrum for transient, S-parameters
// for harmonic balance, closed form for CME.
void run_single(const RunConfig& cfg, unsigned jobs, Writer& w, Report& rep) {
  const OperatingPoint op = cfg.operating_point();
  const double fs = cfg.drive.signal_frequency;
  std::vector<GainCurve> curves;
  for (GainMethod m : methods_for(cfg.solver)) {
    const auto t0 = std::chrono::steady_clock::now();
    GainCurve c;
    c.method = m;
    c.op = op;
    json extra;
    try {
      if (m == GainMethod::transient) {
        const SweepOptions opt = cfg.sweep_options(jobs);
        const TransientGainSetup setup = prepare_transient_gain(cfg.device, op, opt);
        TimeSeries record;
        const double g = transient_gain_point(setup, op, fs, opt, &record, cfg.record);
        c.points.push_back({fs, g});
        w.write("time_series.csv", [&](std::ostream& os) { write_csv(os, record); });
        const Spectrum sp = spectrum(record, "i_out", setup.window_start);
        w.write("spectrum.csv", [&](std::ostream& os) { write_csv(os, sp); });
        extra["window_start_s"] = setup.window_start;
        extra["measured_arrival_s"] = propagation_time(setup.pump_only, cfg.arrival_threshold);
        const double load = setup.net.output().value;
        extra["output_power_dBm"] = {
            {"pump", tone_power(record, "i_out", op.pump_frequency, setup.window_start, load)},
            {"signal", tone_power(record, "i_out", fs, setup.window_start, load)},
            {"idler", tone_power(record, "i_out", idler_frequency(op.pump_frequency, fs),
                                 setup.window_start, load)}};
      } else if (m == GainMethod::harmonic_balance) {
        SmallSignalSolution sp;
        c = sweep_gain(cfg.device, op, {fs}, m, cfg.sweep_options(jobs), &sp);
        w.write("sparams.csv", [&](std::ostream& os) { write_csv(os, sp); });
      } else {
        c = sweep_gain(cfg.device, op, {fs}, m, cfg.sweep_options(jobs));
      }
    } catch (const std::exception& e) {
      c.diagnostics.push_back(std::string("failed: ") + e.what());
      log_line(std::string(to_string(m)) + " failed: " + e.what());
    }
    json j = curve_json(c, seconds_since(t0));
    if (!extra.is_null()) j["details"] = extra;
    if (!c.points.empty()) j["gain_dB"] = c.points.front().gain_db;
    rep.doc["runs"].push_back(j);
    w.write(method_file(m), [&](std::ostream& os) { write_csv(os, c); });
    curves.push_back(std::move(c));
  }
  if (curves.size() > 1) write_merged(w, {fs}, curves);
  std::size_t with_points = 0;
  for (const auto& c : curves) with_points += c.points.empty() ? 0 : 1;
  if (with_points == 0) rep.total_failure = true;
  else if (with_points < curves.size()) rep.partial = true;
}

json plan(const std::string& command, const RunConfig& cfg, const fs::path& out, unsigned jobs) {
  json p;
  p["command"] = command;
  p["solver"] = std::string(to_string(cfg.solver));
  p["output_dir"] = out.string();
  p["jobs"] = jobs;
  p["pump"] = {{"frequency_Hz", cfg.drive.pump_frequency}, {"power_dBm", cfg.drive.pump_power_dbm}};
  p["flux_Phi0"] = cfg.flux;
  p["junction_model"] = cfg.lossless ? "lossless" : "rsj";
  std::vector<std::string> files;
  const auto methods = command == "compare" ? methods_for(SolverSelector::compare) : methods_for(cfg.solver);
  for (GainMethod m : methods) files.push_back(method_file(m));
  if (command == "run") {
    p["signal_frequency_Hz"] = cfg.drive.signal_frequency;
    for (GainMethod m : methods)
      if (m == GainMethod::transient) {
        files.push_back("time_series.csv");
        files.push_back("spectrum.csv");
      }
  } else {
    p["grid_points"] = cfg.grid.size();
    p["grid_Hz"] = {cfg.grid.front(), cfg.grid.back()};
  }
  for (GainMethod m : methods)
    if (m == GainMethod::harmonic_balance) files.push_back("sparams.csv");
  if (methods.size() > 1) files.push_back("compare.csv");
  files.push_back("report.json");
  p["files"] = files;
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SNAIL TWPA simulator: CME, transient and harmonic-balance gain"};
  app.require_subcommand(1);
  unsigned jobs = 0;
  bool dry_run = false;
  std::string output_dir;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "JSON run configuration")->required();
    sub->add_option("--jobs,-j", jobs, "Concurrent sweep points (default: available cores)");
    sub->add_option("--output-dir,-o", output_dir, "Output directory (overrides config and JTWPA_OUTPUT_DIR)");
    sub->add_flag("--dry-run", dry_run, "Validate the config and print the plan without writing files");
  };
  CLI::App* run = app.add_subcommand("run", "Single operating point with the configured solver");
  CLI::App* sweep = app.add_subcommand("sweep", "Gain sweep over the configured grid");
  CLI::App* compare = app.add_subcommand("compare", "CME, transient and harmonic-balance sweeps on one grid");
  CLI::App* info = app.add_subcommand("device-info", "Closed-form device summary");
  for (CLI::App* s : {run, sweep, compare}) add_common(s);
  info->add_option("config", config_path, "JSON run configuration")->required();
  CLI::App* netlist = app.add_subcommand("netlist", "Netlist utilities");
  netlist->require_subcommand(1);
  CLI::App* exp = netlist->add_subcommand("export", "Write the device netlist as JSON");
  std::string netlist_out;
  exp->add_option("config", config_path, "JSON run configuration")->required();
  exp->add_option("--output,-o", netlist_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  RunConfig cfg;
  try {
    cfg = parse_config(read_file(config_path));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  if (info->parsed()) {
    try {
      std::cout << device_info(cfg).dump(2) << '\n';
    } catch (const std::exception& e) {
      std::cerr << "device error: " << e.what() << '\n';
      return kConfigError;
    }
    return kOk;
  }
  if (exp->parsed()) {
    try {
      const Netlist net = build_snail_twpa(cfg.biased_device(), {cfg.lossless});
      const std::string text = to_json(net).dump(2) + "\n";
      if (netlist_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream os(netlist_out, std::ios::binary);
        os << text;
        if (!os) throw std::runtime_error("cannot write '" + netlist_out + "'");
      }
    } catch (const std::exception& e) {
      std::cerr << "netlist error: " << e.what() << '\n';
      return kConfigError;
    }
    return kOk;
  }

  std::string command = run->parsed() ? "run" : sweep->parsed() ? "sweep" : "compare";
  if (command == "compare") cfg.solver = SolverSelector::compare;
  fs::path out = cfg.output_dir;
  if (const char* env = std::getenv("JTWPA_OUTPUT_DIR"); env && *env) out = env;
  if (!output_dir.empty()) out = output_dir;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());

  if (dry_run) {
    std::cout << plan(command, cfg, out, jobs).dump(2) << '\n';
    return kOk;
  }

  Report rep;
  rep.doc["command"] = command;
  rep.doc["started_utc"] = utc_timestamp();
  rep.doc["plan"] = plan(command, cfg, out, jobs);
  rep.doc["runs"] = json::array();
  Writer w(out, rep);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (command == "run") {
      run_single(cfg, jobs, w, rep);
    } else {
      std::vector<GainCurve> curves;
      const auto methods = methods_for(cfg.solver);
      std::size_t with_points = 0;
      for (GainMethod m : methods) {
        try {
          curves.push_back(run_sweep(cfg, m, jobs, w, rep, cfg.grid));
          if (!curves.back().points.empty()) ++with_points;
        } catch (const std::exception& e) {
          rep.doc["runs"].push_back({{"method", std::string(to_string(m))},
                                     {"diagnostics", {std::string("failed: ") + e.what()}}});
          GainCurve empty;
          empty.method = m;
          curves.push_back(std::move(empty));
          log_line(std::string(to_string(m)) + " failed: " + e.what());
        }
      }
      if (curves.size() > 1) write_merged(w, cfg.grid, curves);
      if (with_points == 0) rep.total_failure = true;
      else if (with_points < methods.size()) rep.partial = true;
    }
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    rep.total_failure = true;
  }
  rep.doc["wall_clock_s"] = seconds_since(t0);
  rep.files.push_back((out / "report.json").string());
  rep.doc["files"] = rep.files;
  try {
    fs::create_directories(out);
    std::ofstream os(out / "report.json", std::ios::binary);
    os << rep.doc.dump(2) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "cannot write report: " << e.what() << '\n';
    return kSolverError;
  }
  if (rep.total_failure) return kSolverError;
  if (rep.partial) return kPartial;
  return kOk;
}
