#pragma once

#include "subrigid/control.hpp"
#include "subrigid/localization.hpp"
#include "subrigid/random.hpp"
#include "subrigid/rigidity.hpp"
#include "subrigid/simnet.hpp"
#include "subrigid/subframework.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace subrigid {

struct LocalizationParams {
  double measurement_sigma = 0.1;   // true range noise (m); 0 = noiseless
  double modeled_sigma = 0.1;       // sigma used in C_i (m), must be > 0
  double anchor_noise = 0.01;       // true absolute-fix noise (m); 0 = exact
  double anchor_sigma = 0.01;       // sigma used for the fix in the filter (m), must be > 0
  double process_noise = 1e-4;      // m^2 added to P every tick
  double motion_inflation = 1.0;    // lambda_P in lambda_P dt^2 ||u||^2
  double initial_error = 1.0;       // max initial estimate error (m)
  std::vector<NodeId> anchors{0, 1};
};

struct SimulationParams {
  ControlParams control;
  LocalizationParams localization;
  bool use_estimates = true;  // false: control runs on ground truth
};

/// Engine-owned world. Agent logic never reads `truth` directly: it sees its
/// filter, its measurements and the messages it receives.
struct World {
  ControlState truth;
  std::vector<FilterState> filters;
  Eigen::MatrixXd last_velocity;  // d x n
  double last_dt = 0.0;
  Rng rng{0};
  std::size_t tick = 0;
  RoundLog last_exchange;
  std::size_t last_halvings = 0;
  std::size_t last_degenerate = 0;
};

inline World make_world(Framework initial, ExtentAssignment ext, const SimulationParams& params,
                        std::uint64_t seed) {
  params.control.validate();
  World w;
  w.rng = Rng::stream(seed, 0xfeedULL);
  const auto d = initial.positions.rows();
  const auto n = initial.positions.cols();
  const auto& loc = params.localization;
  const double var = loc.modeled_sigma * loc.modeled_sigma;
  for (Eigen::Index i = 0; i < n; ++i) {
    // Initial guess: truth displaced by a uniform direction, radius <= initial_error.
    Eigen::VectorXd offset(d);
    for (Eigen::Index a = 0; a < d; ++a) offset(a) = w.rng.normal();
    const double radius = loc.initial_error * w.rng.uniform();
    if (offset.norm() > 0.0) offset *= radius / offset.norm();
    const bool anchor = std::find(loc.anchors.begin(), loc.anchors.end(), static_cast<NodeId>(i)) != loc.anchors.end();
    const double p0 = std::max(loc.initial_error * loc.initial_error, 1e-6);
    w.filters.push_back(FilterState::initial(initial.positions.col(i) + offset, p0, var, anchor));
  }
  w.last_velocity = Eigen::MatrixXd::Zero(d, n);
  w.truth = make_control_state(std::move(initial), std::move(ext), params.control);
  return w;
}

inline Positions estimates(const World& w) {
  Positions x(w.truth.framework.positions.rows(), w.truth.framework.positions.cols());
  for (std::size_t i = 0; i < w.filters.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = w.filters[i].estimate;
  return x;
}

/// Center-side computation of u_ji = k_phi dphi_j/dx_i + k_l dl_j/dx_i.
inline CenterHandler control_center_handler(const ControlParams& params) {
  return [params](const CenterView& view) -> Eigen::MatrixXd {
    const auto c = evaluate_center(view.topology, view.positions, params);
    return params.gain_rigidity * c.rigidity + params.gain_load * c.load_grad;
  };
}

/// Decentralized velocity commands for a broadcast framework: the exchange
/// phase delivers every u_ji, and each agent adds its own collision term from
/// neighbor positions it received in the flood.
inline std::pair<Eigen::MatrixXd, RoundLog> decentralized_control_input(const Framework& broadcast,
                                                                        const ExtentAssignment& ext,
                                                                        const ControlParams& params,
                                                                        const TraceSink& trace = {}) {
  const auto d = broadcast.positions.rows();
  auto outcome = run_exchange_phase(broadcast, ext, control_center_handler(params), d, trace);
  Eigen::MatrixXd u = -outcome.received;
  const double p = params.collision_exponent;
  for (NodeId i = 0; i < broadcast.size(); ++i) {
    const auto& nbrs = outcome.neighbor_positions[i];
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    for (Eigen::Index k = 0; k < nbrs.cols(); ++k) {
      const Eigen::VectorXd diff = broadcast.position(i) - nbrs.col(k);
      grad -= p * std::pow(diff.norm(), -(p + 2.0)) * diff;
    }
    u.col(static_cast<Eigen::Index>(i)) -= params.gain_collision * grad;
  }
  return {std::move(u), std::move(outcome.log)};
}

/// Ranging, one-hop estimate broadcast and filter updates for one tick.
/// Reads `world` (truth and previous estimates) and writes `next.filters`;
/// neighbors see the previous tick's estimates.
inline void localization_round(const World& world, World& next, const LocalizationParams& loc,
                               const TraceSink& trace = {}) {
  const auto& fw = world.truth.framework;
  const Graph& g = fw.graph;
  const std::size_t n = fw.size();

  // Ranging against true positions.
  std::vector<Eigen::VectorXd> ranges(n);
  for (NodeId i = 0; i < n; ++i) {
    const auto& nbrs = g.neighbors(i);
    ranges[i].resize(static_cast<Eigen::Index>(nbrs.size()));
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      double z = (fw.position(i) - fw.position(nbrs[k])).norm();
      if (loc.measurement_sigma > 0.0) z += loc.measurement_sigma * next.rng.normal();
      ranges[i](static_cast<Eigen::Index>(k)) = z;
    }
  }

  // One-hop estimate broadcast.
  Network net(g);
  net.set_trace(trace);
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j : g.neighbors(i)) {
      Message m;
      m.kind = MessageKind::EstimateBroadcast;
      m.origin = i;
      m.payload = world.filters[i].estimate;
      m.path = {i};
      net.send(i, j, std::move(m));
    }
  net.deliver();

  for (NodeId i = 0; i < n; ++i) {
    const auto& nbrs = g.neighbors(i);
    Eigen::MatrixXd heard(fw.positions.rows(), static_cast<Eigen::Index>(nbrs.size()));
    for (auto& m : net.take_inbox(i)) {
      const auto k = std::lower_bound(nbrs.begin(), nbrs.end(), m.origin) - nbrs.begin();
      heard.col(static_cast<Eigen::Index>(k)) = m.payload;
    }
    const double speed_sq = world.last_velocity.col(static_cast<Eigen::Index>(i)).squaredNorm();
    const double moved = world.last_dt * world.last_dt * speed_sq;
    auto f = inflate_covariance(world.filters[i], loc.process_noise + loc.motion_inflation * moved);
    f = filter_update(f, ranges[i], heard);
    if (f.is_anchor) {
      Eigen::VectorXd fix = fw.position(i);
      if (loc.anchor_noise > 0.0)
        for (Eigen::Index a = 0; a < fix.size(); ++a) fix(a) += loc.anchor_noise * next.rng.normal();
      f = anchor_update(f, fix, loc.anchor_sigma * loc.anchor_sigma);
    }
    next.filters[i] = std::move(f);
  }
}

/// One tick: ranging, one-hop estimate broadcast, filter updates, exchange
/// phase on the broadcast positions, guarded Euler step and topology refresh.
/// RigidityLost propagates to the caller.
inline World step_simulation(const World& world, const SimulationParams& params, const TraceSink& trace = {}) {
  World next = world;
  const auto& fw = world.truth.framework;
  const Graph& g = fw.graph;
  const std::size_t n = fw.size();

  localization_round(world, next, params.localization, trace);

  const Framework broadcast(g, params.use_estimates ? estimates(next) : fw.positions);
  auto [u, log] = decentralized_control_input(broadcast, world.truth.extents, params.control, trace);
  auto step = apply_velocity(world.truth, u, params.control);
  next.truth = std::move(step.state);
  // Dead reckoning with the commanded velocity over the step actually taken.
  for (NodeId i = 0; i < n; ++i) next.filters[i].estimate += step.dt_used * u.col(static_cast<Eigen::Index>(i));
  next.last_dt = step.dt_used;
  next.last_velocity = std::move(u);
  next.last_exchange = std::move(log);
  next.last_halvings = step.halvings;
  next.last_degenerate = step.degenerate;
  ++next.tick;
  return next;
}

struct Metrics {
  double time = 0.0;
  double rho_min = 0.0;
  double rho_mean = 0.0;
  double rho_max = 0.0;
  double rho_framework = 0.0;   // normalized, whole framework
  double load_standardized = 0.0;
  std::size_t edges = 0;
  double min_distance = 0.0;
  double max_localization_error = 0.0;
};

inline Metrics measure(const World& w) {
  Metrics m;
  const auto& st = w.truth;
  m.time = st.time;
  const auto rhos = st.rhos();
  m.rho_min = *std::min_element(rhos.begin(), rhos.end());
  m.rho_max = *std::max_element(rhos.begin(), rhos.end());
  double sum = 0.0;
  for (double r : rhos) sum += r;
  m.rho_mean = sum / static_cast<double>(rhos.size());
  m.rho_framework = rigidity_eigenpair(assemble_symmetric_rigidity_matrix(st.framework), st.framework.dim()).rho;
  m.load_standardized = communication_load(st.framework.graph, st.extents).standardized;
  m.edges = st.framework.graph.edge_count();
  m.min_distance = std::numeric_limits<double>::infinity();
  const auto& x = st.framework.positions;
  for (Eigen::Index i = 0; i < x.cols(); ++i)
    for (Eigen::Index j = i + 1; j < x.cols(); ++j) m.min_distance = std::min(m.min_distance, (x.col(i) - x.col(j)).norm());
  for (std::size_t i = 0; i < w.filters.size(); ++i)
    m.max_localization_error = std::max(
        m.max_localization_error, (w.filters[i].estimate - x.col(static_cast<Eigen::Index>(i))).norm());
  return m;
}

}  // namespace subrigid
