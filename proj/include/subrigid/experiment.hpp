#pragma once

#include "subrigid/control.hpp"
#include "subrigid/errors.hpp"
#include "subrigid/graph.hpp"
#include "subrigid/random.hpp"
#include "subrigid/rigidity.hpp"
#include "subrigid/simulation.hpp"
#include "subrigid/subframework.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace subrigid {

/// Everything needed to reproduce a generated scenario or experiment.
struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::size_t n = 60;
  double region_width = 100.0;   // m
  double region_height = 100.0;  // m
  double region_depth = 100.0;   // m, d = 3 only
  double range = 40.0;           // Omega (m)
  std::size_t dim = 2;

  // Ensemble runner.
  std::size_t ensemble_count = 250;
  std::vector<double> ensemble_ranges{25.0, 20.0, 17.5};

  // Scenario acceptance.
  bool require_rigid = true;
  std::size_t min_nontrivial_extents = 0;  // nodes with eta_i >= 2 required at t0
  std::size_t max_rejections = 100000;

  // Control runner.
  double duration = 200.0;  // s
  ControlParams control;    // control.range is overridden by `range`
  LocalizationParams localization;
  bool use_estimates = true;

  // Outputs; empty means stdout for `output` and no trace.
  std::string output_path;
  std::string summary_path;
  std::string trace_path;
  unsigned threads = 0;  // ensemble workers, 0 = hardware concurrency

  void validate() const {
    if (n == 0) throw InvalidConfig("n must be positive");
    if (!(region_width > 0.0) || !(region_height > 0.0) || !(region_depth > 0.0))
      throw InvalidConfig("region dimensions must be positive");
    if (!(range > 0.0)) throw InvalidConfig("range must be positive");
    if (dim != 2 && dim != 3) throw InvalidConfig("dim must be 2 or 3");
    if (duration < 0.0) throw InvalidConfig("duration must be non-negative");
    for (double r : ensemble_ranges)
      if (!(r > 0.0)) throw InvalidConfig("ensemble ranges must be positive");
    if (!(localization.modeled_sigma > 0.0) || localization.measurement_sigma < 0.0 ||
        !(localization.anchor_sigma > 0.0) || localization.anchor_noise < 0.0 || localization.process_noise < 0.0 ||
        localization.motion_inflation < 0.0 || localization.initial_error < 0.0)
      throw InvalidConfig("localization noise parameters out of range");
    for (NodeId a : localization.anchors)
      if (a >= n) throw InvalidConfig("anchor id outside the network");
    control_params().validate();
  }

  ControlParams control_params() const {
    ControlParams p = control;
    p.range = range;
    return p;
  }

  SimulationParams simulation_params() const { return {control_params(), localization, use_estimates}; }
};

struct Scenario {
  Framework framework;
  std::size_t rejections = 0;
  std::optional<ExtentAssignment> extents;  // filled when rigid
};

/// Uniform positions in the region; disk-proximity links. When
/// `require_rigid`, draws are rejected until the framework is connected and
/// infinitesimally rigid (and has at least `min_nontrivial_extents` nodes with
/// eta_i >= 2). With n <= d the rigidity tests are undefined, so only
/// connectivity is required and no extents are reported. Throws
/// RejectionBudgetExceeded.
inline Scenario generate_scenario(const ScenarioConfig& cfg, std::uint64_t stream_id = 0) {
  Rng rng = Rng::stream(cfg.seed, stream_id);
  const double extent[3] = {cfg.region_width, cfg.region_height, cfg.region_depth};
  Scenario out;
  for (std::size_t attempt = 0; attempt <= cfg.max_rejections; ++attempt) {
    Positions x(static_cast<Eigen::Index>(cfg.dim), static_cast<Eigen::Index>(cfg.n));
    for (Eigen::Index i = 0; i < x.cols(); ++i)
      for (Eigen::Index a = 0; a < x.rows(); ++a) x(a, i) = rng.uniform(0.0, extent[a]);
    Graph g = disk_proximity_graph(x, cfg.range);
    Framework fw(std::move(g), std::move(x));
    if (!cfg.require_rigid) {
      out.framework = std::move(fw);
      return out;
    }
    if (fw.size() <= fw.dim()) {
      if (is_connected(fw.graph)) {
        out.framework = std::move(fw);
        return out;
      }
    } else if (is_connected(fw.graph) && passes_eigenvalue_test(fw)) {
      auto ext = rigidity_extents(fw);
      if (ext) {
        const auto nontrivial = static_cast<std::size_t>(
            std::count_if(ext->extents.begin(), ext->extents.end(), [](std::size_t h) { return h >= 2; }));
        if (nontrivial >= cfg.min_nontrivial_extents) {
          out.framework = std::move(fw);
          out.extents = std::move(ext);
          return out;
        }
      }
    }
    ++out.rejections;
  }
  throw RejectionBudgetExceeded(cfg.max_rejections + 1);
}

// ---------------------------------------------------------------------------
// Ensemble statistics.

struct NetworkRecord {
  double range = 0.0;
  std::size_t index = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t diameter = 0;
  std::size_t worst_extent = 0;      // eta
  double load = 0.0;                 // extents = eta_i
  double standardized_load = 0.0;    // load / 2m
  double upper_load = 0.0;           // extents = eccentricities
  double upper_standardized_load = 0.0;
  std::size_t rejections = 0;
};

struct EnsembleResult {
  std::vector<NetworkRecord> records;  // group-major, index order

  std::map<std::size_t, std::size_t> diameter_histogram(double range) const {
    std::map<std::size_t, std::size_t> h;
    for (const auto& r : records)
      if (r.range == range) ++h[r.diameter];
    return h;
  }

  std::map<std::size_t, std::size_t> extent_histogram(double range) const {
    std::map<std::size_t, std::size_t> h;
    for (const auto& r : records)
      if (r.range == range) ++h[r.worst_extent];
    return h;
  }

  /// Most frequent diameter (smallest on ties).
  std::size_t diameter_mode(double range) const {
    std::size_t best = 0, count = 0;
    for (const auto& [d, c] : diameter_histogram(range))
      if (c > count) {
        best = d;
        count = c;
      }
    return best;
  }

  double fraction_extent_at_most(std::size_t eta) const {
    if (records.empty()) return 0.0;
    std::size_t k = 0;
    for (const auto& r : records) k += r.worst_extent <= eta ? 1 : 0;
    return static_cast<double>(k) / static_cast<double>(records.size());
  }
};

/// Statistics of one rigid framework.
inline NetworkRecord analyze_network(const Framework& fw, const ExtentAssignment& ext) {
  NetworkRecord rec;
  rec.nodes = fw.size();
  rec.edges = fw.graph.edge_count();
  rec.diameter = diameter(fw.graph);
  rec.worst_extent = ext.worst_case();
  const auto load = communication_load(fw.graph, ext);
  rec.load = load.total;
  rec.standardized_load = load.standardized;
  const auto upper = communication_load(fw.graph, ExtentAssignment::eccentricities(fw.graph));
  rec.upper_load = upper.total;
  rec.upper_standardized_load = upper.standardized;
  return rec;
}

/// Network k of range group g draws from stream (g << 32) | k, so the result
/// does not depend on `threads`. Records are merged in (group, index) order.
inline EnsembleResult run_ensemble_experiment(const ScenarioConfig& cfg, unsigned threads = 0) {
  cfg.validate();
  if (cfg.n <= cfg.dim) throw InvalidConfig("ensemble networks need n > dim");
  const std::size_t groups = cfg.ensemble_ranges.size();
  const std::size_t total = groups * cfg.ensemble_count;
  EnsembleResult result;
  result.records.resize(total);
  if (total == 0) return result;

  auto work = [&](std::size_t slot) {
    const std::size_t g = slot / cfg.ensemble_count;
    const std::size_t k = slot % cfg.ensemble_count;
    ScenarioConfig group = cfg;
    group.range = cfg.ensemble_ranges[g];
    group.require_rigid = true;
    const auto scenario = generate_scenario(group, (static_cast<std::uint64_t>(g) << 32) | k);
    NetworkRecord rec = analyze_network(scenario.framework, *scenario.extents);
    rec.range = group.range;
    rec.index = k;
    rec.rejections = scenario.rejections;
    result.records[slot] = rec;
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, total));
  if (threads == 1) {
    for (std::size_t slot = 0; slot < total; ++slot) work(slot);
    return result;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t slot = next++; slot < total; slot = next++) work(slot);
      } catch (...) {
        errors[t] = std::current_exception();
        next = total;
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

namespace detail {
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace detail

inline const char* kEnsembleCsvHeader =
    "range,index,nodes,edges,diameter,worst_extent,load,standardized_load,upper_load,"
    "upper_standardized_load,rejections";

inline void write_ensemble_csv(const EnsembleResult& result, std::ostream& os) {
  os << kEnsembleCsvHeader << '\n';
  using detail::fmt_double;
  for (const auto& r : result.records)
    os << fmt_double(r.range) << ',' << r.index << ',' << r.nodes << ',' << r.edges << ',' << r.diameter << ','
       << r.worst_extent << ',' << fmt_double(r.load) << ',' << fmt_double(r.standardized_load) << ','
       << fmt_double(r.upper_load) << ',' << fmt_double(r.upper_standardized_load) << ',' << r.rejections << '\n';
}

// ---------------------------------------------------------------------------
// Control experiment.

inline const char* kControlCsvHeader =
    "t,rho_min,rho_mean,rho_max,rho_framework,load_standardized,edges,min_distance,max_localization_error";

inline void write_metrics_row(const Metrics& m, std::ostream& os) {
  using detail::fmt_double;
  os << fmt_double(m.time) << ',' << fmt_double(m.rho_min) << ',' << fmt_double(m.rho_mean) << ','
     << fmt_double(m.rho_max) << ',' << fmt_double(m.rho_framework) << ',' << fmt_double(m.load_standardized) << ','
     << m.edges << ',' << fmt_double(m.min_distance) << ',' << fmt_double(m.max_localization_error) << '\n';
}

enum class RunStatus { Completed, RigidityLost };

struct ControlRunResult {
  RunStatus status = RunStatus::Completed;
  std::vector<Metrics> rows;
  Scenario scenario;
  std::optional<World> final_world;
  std::string diagnostic;
  std::size_t max_exchange_rounds = 0;
  std::size_t worst_extent = 0;
  std::size_t framework_rigidity_violations = 0;  // rho_framework <= 0 while every rho_i > 0
  std::size_t degenerate_events = 0;
  std::size_t step_halvings = 0;
};

/// Receives every message transmission of a control run, tagged with the tick.
using ControlTraceSink = std::function<void(std::size_t tick, const TraceEvent&)>;

/// Runs the decentralized simulation from a rigid scenario with extents frozen
/// at their t0 rigidity extents. Rows go to `csv` as they are produced; a
/// zero-duration run writes only the header.
inline ControlRunResult run_control_experiment(const ScenarioConfig& cfg, std::ostream* csv = nullptr,
                                               const ControlTraceSink& trace = {}) {
  cfg.validate();
  if (cfg.n <= cfg.dim) throw InvalidConfig("control runs need n > dim");
  ControlRunResult result;
  if (csv) *csv << kControlCsvHeader << '\n';

  ScenarioConfig rigid_cfg = cfg;
  rigid_cfg.require_rigid = true;
  result.scenario = generate_scenario(rigid_cfg);
  const auto params = cfg.simulation_params();
  result.worst_extent = result.scenario.extents->worst_case();
  if (!(cfg.duration > 0.0)) return result;

  World world = make_world(result.scenario.framework, *result.scenario.extents, params, cfg.seed);
  auto record = [&](const World& w) {
    const Metrics m = measure(w);
    if (!(m.rho_framework > params.control.rigidity_tol)) ++result.framework_rigidity_violations;
    result.rows.push_back(m);
    if (csv) write_metrics_row(m, *csv);
  };
  record(world);

  const double end = cfg.duration * (1.0 - 1e-12);
  while (world.truth.time < end) {
    try {
      TraceSink sink;
      if (trace) sink = [&trace, tick = world.tick](const TraceEvent& e) { trace(tick, e); };
      world = step_simulation(world, params, sink);
    } catch (const RigidityLost& lost) {
      result.status = RunStatus::RigidityLost;
      result.diagnostic = lost.what();
      break;
    }
    result.max_exchange_rounds = std::max(result.max_exchange_rounds, world.last_exchange.completion_round);
    result.degenerate_events += world.last_degenerate;
    result.step_halvings += world.last_halvings;
    record(world);
  }
  result.final_world = std::move(world);
  return result;
}

}  // namespace subrigid
