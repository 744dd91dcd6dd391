// Acceptance checks. Prints one PASS/FAIL line per criterion and exits with
// the number of failures.
//
// Writes acceptance_control.csv (the long control run) to the working
// directory for inspection.

#include <subrigid.hpp>

#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace subrigid;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double normalized_rho(const Framework& fw) {
  return rigidity_eigenpair(assemble_symmetric_rigidity_matrix(fw), fw.dim()).rho;
}

Framework random_connected(Rng& rng, std::size_t n, double p, std::size_t d = 2) {
  return Framework(oracle::random_connected_graph(rng, n, p), oracle::random_positions(rng, d, n));
}

// ---------------------------------------------------------------------------

Outcome rank_vs_eigenvalue() {
  const auto start = Clock::now();
  Rng rng(1001);
  int agree = 0, rigid = 0;
  constexpr int kSamples = 1000;
  for (int k = 0; k < kSamples; ++k) {
    const std::size_t d = 2 + rng.below(2);
    const std::size_t n = 4 + rng.below(12);
    const Framework fw(oracle::random_graph(rng, n, rng.uniform(0.2, 1.0)), oracle::random_positions(rng, d, n));
    const bool by_eig = passes_eigenvalue_test(fw);
    agree += by_eig == passes_rank_test(fw);
    rigid += by_eig;
  }
  const double elapsed = seconds_since(start);
  return {agree == kSamples && elapsed < 30.0,
          format("%d/%d agree (%d rigid, %d flexible), %.2f s", agree, kSamples, rigid, kSamples - rigid, elapsed)};
}

Outcome diameter_bound() {
  Rng rng(1002);
  int violations = 0;
  double worst_ratio = 0.0;
  constexpr int kSamples = 500;
  for (int k = 0; k < kSamples; ++k) {
    const std::size_t n = 4 + rng.below(20);
    const auto fw = random_connected(rng, n, rng.uniform(0.0, 0.4));
    const double bound = diameter_eigenvalue_bound(fw.graph.edge_count(), diameter(fw.graph));
    const double rho = normalized_rho(fw);
    violations += rho > bound * (1.0 + 1e-12);
    worst_ratio = std::max(worst_ratio, rho / bound);
  }
  return {violations == 0, format("%d violations in %d samples, largest rho/bound %.3f", violations, kSamples,
                                  worst_ratio)};
}

Outcome subframework_equivalence() {
  Rng rng(1003);
  int counterexamples = 0, rigid = 0;
  constexpr int kSamples = 300;
  for (int k = 0; k < kSamples; ++k) {
    const auto fw = random_connected(rng, 4 + rng.below(9), rng.uniform(0.05, 0.6));
    const bool is_rigid = is_infinitesimally_rigid(fw);
    const bool by_balls = verify_subframework_rigidity(fw, ExtentAssignment::eccentricities(fw.graph));
    bool ok = is_rigid == by_balls;
    if (is_rigid) {
      ++rigid;
      const auto ext = rigidity_extents(fw);
      ok = ok && ext && verify_subframework_rigidity(fw, *ext);
    }
    counterexamples += !ok;
  }
  return {counterexamples == 0,
          format("%d counterexamples in %d samples (%d rigid)", counterexamples, kSamples, rigid)};
}

Outcome load_identities() {
  Rng rng(1004);
  int failures = 0;
  constexpr int kSamples = 200;
  for (int k = 0; k < kSamples; ++k) {
    const auto fw = random_connected(rng, 2 + rng.below(20), 0.25);
    const Graph& g = fw.graph;
    const auto unit = communication_load(g, ExtentAssignment::uniform(g.size(), 1));
    failures += unit.total != 2.0 * static_cast<double>(g.edge_count());

    // Upper bound against the definition evaluated with Floyd-Warshall hops.
    const auto ecc = ExtentAssignment::eccentricities(g);
    const auto hops = oracle::floyd_warshall(g);
    double expected = 0.0;
    for (NodeId i = 0; i < g.size(); ++i)
      for (NodeId j = 0; j < g.size(); ++j)
        if (hops[i][j] < ecc[i])
          expected += static_cast<double>(ecc[i] - hops[i][j]) * static_cast<double>(g.degree(j));
    failures += communication_load(g, ecc).total != expected;
  }
  Graph path(3, {{0, 1}, {1, 2}});
  const double path_load = communication_load(path, ExtentAssignment{{2, 1, 2}}).total;
  return {failures == 0 && path_load == 10.0,
          format("%d identity failures in %d graphs, path example load %.1f", failures, kSamples, path_load)};
}

Outcome gradients() {
  Rng rng(1005);
  ControlParams params;
  constexpr double kStep = 1e-5;
  int phi = 0, ell = 0, psi = 0, bad = 0;
  double worst = 0.0;
  auto check = [&](const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd) {
    const double e = oracle::relative_error(analytic, fd);
    worst = std::max(worst, e);
    bad += !(e < 1e-4);
  };
  while (phi < 100 || ell < 100 || psi < 100) {
    const std::size_t n = 6 + rng.below(7);
    Positions x = oracle::random_positions(rng, 2, n, rng.uniform(40.0, 90.0));
    Graph g = disk_proximity_graph(x, params.range);
    Framework fw(std::move(g), std::move(x));
    if (!is_connected(fw.graph) || !passes_eigenvalue_test(fw)) continue;
    auto ext = rigidity_extents(fw);
    if (!ext) continue;
    ControlState st;
    try {
      st = make_control_state(fw, *ext, params);
    } catch (const RigidityLost&) {
      continue;
    }
    const auto& x0 = st.framework.positions;
    bool separated = true;
    for (const auto& e : st.eigenpairs) separated = separated && e.next - e.rho >= 1e-3 * e.largest;
    if (separated) {
      check(rigidity_gradients(st, params),
            oracle::central_difference([&](const Positions& y) { return rigidity_potential(st.structure, y, params); },
                                       x0, kStep));
      ++phi;
    }
    check(load_gradients(st, params),
          oracle::central_difference([&](const Positions& y) { return load_potential(st.structure, y, params); }, x0,
                                     kStep));
    ++ell;
    check(collision_gradients(st.framework, params.collision_exponent),
          oracle::central_difference(
              [&](const Positions& y) { return collision_potential(st.framework.graph, y, params.collision_exponent); },
              x0, kStep));
    ++psi;
  }
  return {bad == 0, format("phi %d, load %d, collision %d samples; %d above 1e-4, worst relative error %.2e", phi,
                           ell, psi, bad, worst)};
}

Outcome round_bound() {
  Rng rng(1006);
  int checked = 0, late = 0, unit_not_two = 0, multi_hop = 0;
  std::size_t largest_eta = 0;
  while (checked < 200) {
    const std::size_t n = 5 + rng.below(26);
    Positions x = oracle::random_positions(rng, 2, n, 100.0);
    Graph g = disk_proximity_graph(x, rng.uniform(25.0, 60.0));
    Framework fw(std::move(g), std::move(x));
    if (!is_connected(fw.graph) || !passes_eigenvalue_test(fw)) continue;
    const auto ext = rigidity_extents(fw);
    if (!ext) continue;
    ++checked;
    const std::size_t eta = ext->worst_case();
    largest_eta = std::max(largest_eta, eta);
    multi_hop += eta > 1;
    try {
      const auto log = run_exchange_phase(fw, *ext);
      late += !(log.complete() && log.completion_round <= 2 * eta);
      const auto unit = run_exchange_phase(fw, ExtentAssignment::uniform(n, 1));
      unit_not_two += !(unit.complete() && unit.completion_round == 2);
    } catch (const ProtocolViolation&) {
      ++late;
    }
  }
  return {late == 0 && unit_not_two == 0,
          format("%d frameworks (%d with eta > 1, largest eta %zu): %d late, %d unit-extent runs not in 2 rounds",
                 checked, multi_hop, largest_eta, late, unit_not_two)};
}

Outcome ensemble() {
  const auto start = Clock::now();
  ScenarioConfig cfg;
  cfg.n = 100;
  cfg.ensemble_count = 250;
  cfg.ensemble_ranges = {25.0, 20.0, 17.5};
  const auto result = run_ensemble_experiment(cfg);
  const double elapsed = seconds_since(start);
  const std::size_t expected_modes[] = {7, 9, 10};
  bool modes_ok = true;
  std::string modes;
  for (std::size_t g = 0; g < 3; ++g) {
    const auto mode = result.diameter_mode(cfg.ensemble_ranges[g]);
    modes_ok = modes_ok && mode + 1 >= expected_modes[g] && mode <= expected_modes[g] + 1;
    modes += (g ? "/" : "") + std::to_string(mode);
  }
  const double fraction = result.fraction_extent_at_most(5);
  const bool fraction_ok = std::abs(fraction - 0.85) <= 0.10;
  return {modes_ok && fraction_ok && elapsed <= 600.0,
          format("diameter modes %s, eta<=5 fraction %.3f, %zu networks in %.1f s", modes.c_str(), fraction,
                 result.records.size(), elapsed)};
}

// The reference control configuration: defaults plus the CLI's control-verb
// policy of starting from a framework with multi-hop extents.
ScenarioConfig reference_control() {
  ScenarioConfig cfg;
  cfg.min_nontrivial_extents = 2;
  return cfg;
}

Outcome control_run() {
  const auto start = Clock::now();
  const ScenarioConfig cfg = reference_control();
  std::ofstream csv("acceptance_control.csv", std::ios::binary);
  const auto result = run_control_experiment(cfg, &csv);
  const double elapsed = seconds_since(start);
  if (result.rows.empty()) return {false, "no rows"};

  double min_rho = result.rows.front().rho_min, min_framework_rho = result.rows.front().rho_framework;
  double peak_load = 0.0, peak_time = 0.0;
  const Metrics* at25 = &result.rows.front();
  for (const auto& m : result.rows) {
    min_rho = std::min(min_rho, m.rho_min);
    min_framework_rho = std::min(min_framework_rho, m.rho_framework);
    if (m.load_standardized > peak_load) {
      peak_load = m.load_standardized;
      peak_time = m.time;
    }
    if (std::abs(m.time - 25.0) < std::abs(at25->time - 25.0)) at25 = &m;
  }
  const auto& first = result.rows.front();
  const auto& last = result.rows.back();
  const bool completed = result.status == RunStatus::Completed && last.time >= cfg.duration - 1e-9;
  const double growth = at25->rho_min / first.rho_min;
  const double reduction = (peak_load - last.load_standardized) / peak_load;

  const bool ok_rho = completed && min_rho > 0.0;
  const bool ok_growth = growth >= 2.0;
  const bool ok_load = std::abs(reduction - 0.40) <= 0.15;
  const bool ok_framework = completed && min_framework_rho > 0.0 && result.framework_rigidity_violations == 0;
  return {ok_rho && ok_growth && ok_load && ok_framework,
          format("%s to t=%.1f s; min rho_i %.4g [%s]; rho_min(25)/rho_min(0) = %.4g/%.4g = %.2f [%s]; "
                 "load peak %.4f at t=%.2f, final %.4f, reduction %.1f%% [%s]; min framework rho %.4g [%s]; "
                 "eta %zu, %.0f s",
                 completed ? "completed" : "stopped", last.time, min_rho, ok_rho ? "ok" : "FAIL", at25->rho_min,
                 first.rho_min, growth, ok_growth ? "ok" : "FAIL", peak_load, peak_time, last.load_standardized,
                 100.0 * reduction, ok_load ? "ok" : "FAIL", min_framework_rho, ok_framework ? "ok" : "FAIL",
                 result.worst_extent, elapsed)};
}

double congruence_error(const Positions& a, const Positions& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = i + 1; j < a.cols(); ++j)
      worst = std::max(worst, std::abs((a.col(i) - a.col(j)).norm() - (b.col(i) - b.col(j)).norm()));
  return worst;
}

Outcome localization() {
  // Calibration: seeds 1..10 of this setup needed at most 1954 iterations.
  constexpr int kBudget = 2500;
  constexpr double kRange = 40.0;
  int converged = 0, congruent = 0, worst_iterations = 0;
  double worst_absolute_free = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ScenarioConfig cfg;
    cfg.seed = seed;
    cfg.n = 20;
    cfg.region_width = cfg.region_height = 60.0;
    cfg.range = kRange;
    const auto sc = generate_scenario(cfg);
    const Positions& truth = sc.framework.positions;

    for (bool anchored : {true, false}) {
      SimulationParams p;
      p.localization.measurement_sigma = 0.0;
      p.localization.anchor_noise = 0.0;
      p.localization.process_noise = 1.0;
      p.localization.initial_error = 0.1 * kRange;
      p.localization.anchors = anchored ? std::vector<NodeId>{0, 1} : std::vector<NodeId>{};
      World w = make_world(sc.framework, *sc.extents, p, seed);
      int it = 0;
      for (; it < kBudget; ++it) {
        World next = w;
        localization_round(w, next, p.localization);
        w = std::move(next);
        if (anchored && measure(w).max_localization_error < 1e-3) break;
      }
      if (anchored) {
        if (measure(w).max_localization_error < 1e-3) {
          ++converged;
          worst_iterations = std::max(worst_iterations, it + 1);
        }
      } else {
        congruent += congruence_error(estimates(w), truth) < 1e-3;
        worst_absolute_free = std::max(worst_absolute_free, measure(w).max_localization_error);
      }
    }
  }
  return {converged == 10 && congruent == 10,
          format("anchored: %d/10 below 1e-3 m (worst %d of %d iterations); anchor-free: %d/10 congruent to 1e-3 m, "
                 "largest absolute error %.3g m",
                 converged, worst_iterations, kBudget, congruent, worst_absolute_free)};
}

Outcome determinism() {
  auto control_csv = [] {
    ScenarioConfig cfg = reference_control();
    cfg.duration = 10.0;
    std::ostringstream os;
    run_control_experiment(cfg, &os);
    return os.str();
  };
  auto ensemble_csv = [](unsigned threads) {
    ScenarioConfig cfg;
    cfg.n = 100;
    cfg.ensemble_count = 10;
    std::ostringstream os;
    write_ensemble_csv(run_ensemble_experiment(cfg, threads), os);
    return os.str();
  };
  const auto a = control_csv();
  const bool control_same = a == control_csv();
  const auto e = ensemble_csv(1);
  const bool ensemble_same = e == ensemble_csv(2);
  return {control_same && ensemble_same && !a.empty(),
          format("control CSV (%zu bytes) %s; ensemble CSV (%zu bytes) %s", a.size(),
                 control_same ? "identical" : "differs", e.size(), ensemble_same ? "identical" : "differs")};
}

}  // namespace

// Optional arguments select criteria by number; default is all of them.
int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{rank_vs_eigenvalue, diameter_bound, subframework_equivalence,
                                                       load_identities,    gradients,      round_bound,
                                                       ensemble,           control_run,    localization,
                                                       determinism};
  int failures = 0;
  std::vector<bool> selected(criteria.size(), argc <= 1);
  for (int a = 1; a < argc; ++a) {
    const long k = std::strtol(argv[a], nullptr, 10);
    if (k >= 1 && static_cast<std::size_t>(k) <= criteria.size()) selected[static_cast<std::size_t>(k - 1)] = true;
  }
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!selected[k]) continue;
    Outcome r;
    try {
      r = criteria[k]();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failures += !r.pass;
    std::printf("%s criterion %zu: %s\n", r.pass ? "PASS" : "FAIL", k + 1, r.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
