// subrigid: scenario generation, experiment runners and rigidity audits.
//
// Exit codes: 0 success, 2 rigidity lost during a control run, 3 invalid
// configuration or input.

#include <subrigid.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

namespace {

using subrigid::json;

constexpr int kExitRigidityLost = 2;
constexpr int kExitInvalidConfig = 3;

// Opens `path` for writing, or returns stdout when the path is empty or "-".
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw subrigid::InvalidConfig("cannot open " + path + " for writing");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

json read_json(const std::string& path) {
  try {
    if (path.empty() || path == "-") return json::parse(std::cin);
    std::ifstream in(path);
    if (!in) throw subrigid::InvalidConfig("cannot open " + path);
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw subrigid::InvalidConfig(path + ": " + e.what());
  }
}

void add_scenario_flags(CLI::App& app, subrigid::ScenarioConfig& c) {
  app.add_option("--seed", c.seed, "RNG seed")->capture_default_str();
  app.add_option("--n", c.n, "number of agents")->capture_default_str();
  app.add_option("--width", c.region_width, "region width (m)")->capture_default_str();
  app.add_option("--height", c.region_height, "region height (m)")->capture_default_str();
  app.add_option("--depth", c.region_depth, "region depth (m), 3-D only")->capture_default_str();
  app.add_option("--range", c.range, "communication range (m)")->capture_default_str();
  app.add_option("--dim", c.dim, "ambient dimension (2 or 3)")->capture_default_str();
  app.add_option("--max-rejections", c.max_rejections, "rejection budget for rigid draws")->capture_default_str();
  app.add_option("--min-nontrivial-extents", c.min_nontrivial_extents,
                 "reject draws with fewer nodes of rigidity extent >= 2")
      ->capture_default_str();
  app.add_option("-o,--output", c.output_path, "output file (default stdout)");
}

void add_control_flags(CLI::App& app, subrigid::ScenarioConfig& c) {
  auto& p = c.control;
  app.add_option("--duration", c.duration, "simulated time (s)")->capture_default_str();
  app.add_option("--dt", p.dt, "control time step (s)")->capture_default_str();
  app.add_option("--steepness", p.steepness, "logistic weight steepness (1/m)")->capture_default_str();
  app.add_option("--rigidity-exponent", p.rigidity_exponent, "exponent of the rigidity potential")->capture_default_str();
  app.add_option("--collision-exponent", p.collision_exponent, "exponent of the collision potential")
      ->capture_default_str();
  app.add_option("--gain-rigidity", p.gain_rigidity)->capture_default_str();
  app.add_option("--gain-load", p.gain_load)->capture_default_str();
  app.add_option("--gain-collision", p.gain_collision)->capture_default_str();
  app.add_option("--noise", c.localization.measurement_sigma, "range noise sigma (m)")->capture_default_str();
  app.add_option("--anchors", c.localization.anchors, "anchor node ids");
  app.add_flag("!--truth", c.use_estimates, "drive the controller with true positions");
  app.add_option("--summary", c.summary_path, "run summary JSON");
  app.add_option("--trace", c.trace_path, "message trace (JSON lines)");
}

int cmd_gen(const subrigid::ScenarioConfig& cfg) {
  cfg.validate();
  const auto scenario = subrigid::generate_scenario(cfg);
  json out{{"framework", scenario.framework}, {"rejections", scenario.rejections}};
  if (scenario.extents) out["rigidity_extents"] = *scenario.extents;
  Sink sink(cfg.output_path);
  sink.stream() << out.dump(2) << '\n';
  return 0;
}

int cmd_ensemble(const subrigid::ScenarioConfig& cfg, const std::string& csv_path) {
  const auto result = subrigid::run_ensemble_experiment(cfg, cfg.threads);
  const json summary = subrigid::ensemble_summary(result, cfg.ensemble_ranges);
  {
    Sink sink(cfg.output_path);
    sink.stream() << json{{"config", cfg}, {"records", result.records}, {"summary", summary}}.dump(1) << '\n';
  }
  if (!csv_path.empty()) {
    Sink csv(csv_path);
    subrigid::write_ensemble_csv(result, csv.stream());
  }
  if (!cfg.summary_path.empty()) {
    Sink s(cfg.summary_path);
    s.stream() << summary.dump(2) << '\n';
  }
  std::fprintf(stderr, "ensemble: %zu networks, eta<=5 fraction %.3f\n", result.records.size(),
               result.fraction_extent_at_most(5));
  return 0;
}

int cmd_control(const subrigid::ScenarioConfig& cfg) {
  cfg.validate();
  std::unique_ptr<Sink> trace_sink;
  subrigid::ControlTraceSink trace;
  if (!cfg.trace_path.empty()) {
    trace_sink = std::make_unique<Sink>(cfg.trace_path);
    trace = [&os = trace_sink->stream()](std::size_t tick, const subrigid::TraceEvent& e) {
      os << subrigid::to_json_event(tick, e).dump() << '\n';
    };
  }
  Sink out(cfg.output_path);
  const auto result = subrigid::run_control_experiment(cfg, &out.stream(), trace);
  const bool lost = result.status == subrigid::RunStatus::RigidityLost;

  if (!cfg.summary_path.empty()) {
    json summary{{"config", cfg},
                 {"status", lost ? "rigidity_lost" : "completed"},
                 {"diagnostic", result.diagnostic},
                 {"rejections", result.scenario.rejections},
                 {"worst_extent", result.worst_extent},
                 {"rigidity_extents", *result.scenario.extents},
                 {"max_exchange_rounds", result.max_exchange_rounds},
                 {"framework_rigidity_violations", result.framework_rigidity_violations},
                 {"degenerate_events", result.degenerate_events},
                 {"step_halvings", result.step_halvings},
                 {"rows", result.rows.size()}};
    if (result.final_world) summary["final_framework"] = result.final_world->truth.framework;
    Sink s(cfg.summary_path);
    s.stream() << summary.dump(2) << '\n';
  }
  if (lost) {
    std::fprintf(stderr, "control: %s\n", result.diagnostic.c_str());
    return kExitRigidityLost;
  }
  return 0;
}

int cmd_audit(const std::string& input, const std::string& output, double tol) {
  const json in = read_json(input);
  subrigid::Framework fw;
  try {
    fw = (in.contains("framework") ? in.at("framework") : in).get<subrigid::Framework>();
  } catch (const json::exception& e) {
    throw subrigid::InvalidConfig(std::string("framework: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw subrigid::InvalidConfig(std::string("framework: ") + e.what());
  }
  json out{{"nodes", fw.size()}, {"edges", fw.graph.edge_count()}, {"connected", subrigid::is_connected(fw.graph)}};
  out["report"] = subrigid::rigidity_report(fw, tol);
  if (out["connected"].get<bool>()) {
    out["diameter"] = subrigid::diameter(fw.graph);
    out["diameter_bound"] =
        subrigid::diameter_eigenvalue_bound(fw.graph.edge_count(), subrigid::diameter(fw.graph));
  }
  if (auto ext = subrigid::rigidity_extents(fw, tol)) {
    out["rigidity_extents"] = *ext;
    out["worst_extent"] = ext->worst_case();
    out["load"] = subrigid::communication_load(fw.graph, *ext);
  }
  Sink sink(output);
  sink.stream() << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subframework rigidity analysis and rigidity-maintenance experiments"};
  app.require_subcommand(1);

  subrigid::ScenarioConfig cfg;
  std::string config_path;
  app.add_option("--config", config_path, "JSON config; its keys override command-line flags");

  auto* gen = app.add_subcommand("gen", "generate a scenario framework");
  add_scenario_flags(*gen, cfg);
  gen->add_flag("!--any", cfg.require_rigid, "accept frameworks that are not rigid");

  auto* ens = app.add_subcommand("ensemble", "diameter / extent / load statistics over random networks");
  add_scenario_flags(*ens, cfg);
  std::string csv_path;
  ens->add_option("--count", cfg.ensemble_count, "networks per range group")->capture_default_str();
  ens->add_option("--ranges", cfg.ensemble_ranges, "communication range of each group");
  ens->add_option("--csv", csv_path, "per-network CSV");
  ens->add_option("--summary", cfg.summary_path, "histogram summary JSON");
  ens->add_option("--threads", cfg.threads, "worker threads (0 = all cores)");

  auto* ctl = app.add_subcommand("control", "decentralized rigidity-maintenance run (CSV time series)");
  add_scenario_flags(*ctl, cfg);
  add_control_flags(*ctl, cfg);

  auto* audit = app.add_subcommand("audit", "rigidity report for a framework JSON");
  std::string audit_input = "-", audit_output;
  double audit_tol = subrigid::kDefaultRigidityTol;
  audit->add_option("input", audit_input, "framework JSON (default stdin)");
  audit->add_option("-o,--output", audit_output, "output file (default stdout)");
  audit->add_option("--tol", audit_tol, "relative rigidity tolerance")->capture_default_str();

  // The ensemble defaults differ from the single-run defaults.
  ens->preparse_callback([&](std::size_t) { cfg.n = 100; });
  ctl->preparse_callback([&](std::size_t) { cfg.min_nontrivial_extents = 2; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalidConfig;
  }

  try {
    if (!config_path.empty()) subrigid::apply_json(read_json(config_path), cfg);
    if (*gen) return cmd_gen(cfg);
    if (*ens) return cmd_ensemble(cfg, csv_path);
    if (*ctl) return cmd_control(cfg);
    return cmd_audit(audit_input, audit_output, audit_tol);
  } catch (const subrigid::InvalidConfig& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return kExitInvalidConfig;
  } catch (const subrigid::RejectionBudgetExceeded& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitInvalidConfig;
  } catch (const subrigid::RigidityLost& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitRigidityLost;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
