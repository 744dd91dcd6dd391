#pragma once

#include "subrigid/errors.hpp"
#include "subrigid/graph.hpp"
#include "subrigid/rigidity.hpp"
#include "subrigid/subframework.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace subrigid {

/// Tunables of the rigidity-maintenance controller.
struct ControlParams {
  double range = 40.0;               // communication range Omega (m)
  double steepness = 0.5;            // logistic steepness beta (1/m)
  double rigidity_exponent = 1.0;    // q in phi_i = rho_i^-q
  double collision_exponent = 2.0;   // p in psi
  double gain_rigidity = 1.0;
  double gain_load = 1.0;
  double gain_collision = 1.0;
  double dt = 0.05;                  // s
  double weight_prune_threshold = 0.01;
  bool weighted_rigidity = true;     // S_i = R^T W R with logistic W, else W = I
  std::size_t max_step_halvings = 8;
  double rigidity_tol = kDefaultRigidityTol;

  void validate() const {
    if (!(range > 0.0) || !(steepness > 0.0) || !(rigidity_exponent > 0.0) ||
        !(collision_exponent > 0.0) || !(dt > 0.0))
      throw InvalidConfig("range, steepness, exponents and dt must be positive");
    if (gain_rigidity < 0.0 || gain_load < 0.0 || gain_collision < 0.0)
      throw InvalidConfig("control gains must be non-negative");
    if (!(weight_prune_threshold > 0.0 && weight_prune_threshold < 1.0))
      throw InvalidConfig("weight prune threshold must lie in (0, 1)");
  }
};

/// Logistic link weight (1 + exp(-beta (range - distance)))^-1.
inline double edge_weight(double distance, double range, double steepness) {
  return 1.0 / (1.0 + std::exp(-steepness * (range - distance)));
}

inline double edge_weight(const Eigen::Ref<const Eigen::VectorXd>& xi,
                          const Eigen::Ref<const Eigen::VectorXd>& xj, double range,
                          double steepness) {
  return edge_weight((xi - xj).norm(), range, steepness);
}

/// dw/d(distance) = -beta w (1 - w).
inline double edge_weight_slope(double distance, double range, double steepness) {
  const double w = edge_weight(distance, range, steepness);
  return -steepness * w * (1.0 - w);
}

/// Weighted degrees sum_{l in N_k} w_kl.
inline std::vector<double> weighted_degrees(const Framework& fw, double range, double steepness) {
  std::vector<double> deg(fw.size(), 0.0);
  for (const auto& [i, j] : fw.graph.edges()) {
    const double w = edge_weight(fw.position(i), fw.position(j), range, steepness);
    deg[i] += w;
    deg[j] += w;
  }
  return deg;
}

/// Load metric; `weighted` swaps delta_j for the weighted degree.
inline LoadReport communication_load(const Framework& fw, const ExtentAssignment& ext, bool weighted,
                                     const ControlParams& params = {}) {
  if (!weighted) return communication_load(fw.graph, ext);
  const auto deg = weighted_degrees(fw, params.range, params.steepness);
  return communication_load(fw.graph, ext, deg);
}

// ---------------------------------------------------------------------------
// Discrete structure, frozen within a control step.

struct SubframeworkTopology {
  NodeId center = 0;
  std::size_t extent = 0;
  std::vector<NodeId> vertices;                          // sorted global ids
  std::vector<std::size_t> hops;                         // from center
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // local ids, lexicographic
};

struct FrozenStructure {
  std::vector<SubframeworkTopology> subframeworks;  // indexed by center
  std::vector<std::vector<NodeId>> inclusion;       // I_i, sorted
};

inline SubframeworkTopology subframework_topology(const Graph& g, NodeId center, std::size_t h) {
  SubframeworkTopology topo;
  topo.center = center;
  topo.extent = h;
  detail::collect_ball(detail::bfs_raw(g, center, h), h, topo.vertices, topo.hops);
  const auto& verts = topo.vertices;
  for (std::size_t a = 0; a < verts.size(); ++a)
    for (NodeId w : g.neighbors(verts[a])) {
      if (w <= verts[a]) continue;
      auto it = std::lower_bound(verts.begin(), verts.end(), w);
      if (it != verts.end() && *it == w) topo.edges.emplace_back(a, static_cast<std::size_t>(it - verts.begin()));
    }
  return topo;
}

inline FrozenStructure freeze_structure(const Graph& g, const ExtentAssignment& ext) {
  if (ext.size() != g.size()) throw std::invalid_argument("one extent per node required");
  FrozenStructure s;
  s.subframeworks.reserve(g.size());
  s.inclusion.assign(g.size(), {});
  for (NodeId j = 0; j < g.size(); ++j) {
    s.subframeworks.push_back(subframework_topology(g, j, ext[j]));
    for (NodeId v : s.subframeworks.back().vertices) s.inclusion[v].push_back(j);
  }
  return s;
}

inline Positions gather_positions(const Positions& x, const std::vector<NodeId>& vertices) {
  Positions local(x.rows(), static_cast<Eigen::Index>(vertices.size()));
  for (std::size_t a = 0; a < vertices.size(); ++a)
    local.col(static_cast<Eigen::Index>(a)) = x.col(static_cast<Eigen::Index>(vertices[a]));
  return local;
}

// ---------------------------------------------------------------------------
// Per-center evaluation. Everything here depends only on the subframework's own
// positions, so a center can run it on data it received over the network.

/// Symmetric rigidity matrix of a subframework from local positions.
inline Eigen::MatrixXd subframework_matrix(const SubframeworkTopology& topo, const Positions& local,
                                           const ControlParams& params) {
  const auto d = local.rows();
  const auto dn = d * local.cols();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dn, dn);
  for (const auto& [a, b] : topo.edges) {
    const Eigen::VectorXd diff = local.col(static_cast<Eigen::Index>(a)) - local.col(static_cast<Eigen::Index>(b));
    const double len = diff.norm();
    if (!(len > 0.0)) throw CoincidentNodes(topo.vertices[a], topo.vertices[b]);
    const double w = params.weighted_rigidity ? edge_weight(len, params.range, params.steepness) : 1.0;
    const Eigen::MatrixXd block = (w / (len * len)) * diff * diff.transpose();
    const auto ba = d * static_cast<Eigen::Index>(a);
    const auto bb = d * static_cast<Eigen::Index>(b);
    S.block(ba, ba, d, d) += block;
    S.block(bb, bb, d, d) += block;
    S.block(ba, bb, d, d) -= block;
    S.block(bb, ba, d, d) -= block;
  }
  return S;
}

/// rho_j and nu_j; throws RigidityLost when the subframework is not rigid.
inline RigidityEigenpair subframework_eigenpair(const SubframeworkTopology& topo, const Positions& local,
                                                const ControlParams& params) {
  const auto d = static_cast<std::size_t>(local.rows());
  if (topo.vertices.size() <= d) throw RigidityLost(topo.center, 0.0);
  auto eig = rigidity_eigenpair(subframework_matrix(topo, local, params), d);
  if (!(eig.largest > 0.0) || !(eig.rho > params.rigidity_tol * eig.largest))
    throw RigidityLost(topo.center, eig.rho);
  return eig;
}

/// d(rho_j)/d(x_v) for every member v (d x |V_j|), from the eigenvalue
/// derivative nu^T (dS/dx_v) nu. Both the bearings and the logistic weights
/// are differentiated.
inline Eigen::MatrixXd eigenvalue_gradient(const SubframeworkTopology& topo, const Positions& local,
                                           const RigidityEigenpair& eig, const ControlParams& params) {
  const auto d = local.rows();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(d, local.cols());
  for (const auto& [a, b] : topo.edges) {
    const auto ia = static_cast<Eigen::Index>(a);
    const auto ib = static_cast<Eigen::Index>(b);
    const Eigen::VectorXd diff = local.col(ia) - local.col(ib);
    const double len = diff.norm();
    const Eigen::VectorXd r = diff / len;
    const Eigen::VectorXd dnu = eig.nu.segment(d * ia, d) - eig.nu.segment(d * ib, d);
    const double s = r.dot(dnu);
    double w = 1.0;
    double slope = 0.0;
    if (params.weighted_rigidity) {
      w = edge_weight(len, params.range, params.steepness);
      slope = -params.steepness * w * (1.0 - w);
    }
    const Eigen::VectorXd term = slope * s * s * r + (2.0 * w * s / len) * (dnu - s * r);
    grad.col(ia) += term;
    grad.col(ib) -= term;
  }
  return grad;
}

/// Weighted load l_j = sum_{k in V_j} c_jk * weighted_degree_k of one center.
inline double center_load(const SubframeworkTopology& topo, const Positions& local, const ControlParams& params) {
  double load = 0.0;
  for (const auto& [a, b] : topo.edges) {
    const std::size_t ca = topo.extent - std::min(topo.extent, topo.hops[a]);
    const std::size_t cb = topo.extent - std::min(topo.extent, topo.hops[b]);
    if (ca + cb == 0) continue;
    const double len = (local.col(static_cast<Eigen::Index>(a)) - local.col(static_cast<Eigen::Index>(b))).norm();
    load += static_cast<double>(ca + cb) * edge_weight(len, params.range, params.steepness);
  }
  return load;
}

/// d(l_j)/d(x_v) for every member v (d x |V_j|). Only weights move; c_jk and
/// the edge set are frozen.
inline Eigen::MatrixXd center_load_gradient(const SubframeworkTopology& topo, const Positions& local,
                                            const ControlParams& params) {
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(local.rows(), local.cols());
  for (const auto& [a, b] : topo.edges) {
    // Edge {a,b} enters the weighted degree of both endpoints.
    const std::size_t ca = topo.extent - std::min(topo.extent, topo.hops[a]);
    const std::size_t cb = topo.extent - std::min(topo.extent, topo.hops[b]);
    if (ca + cb == 0) continue;
    const auto ia = static_cast<Eigen::Index>(a);
    const auto ib = static_cast<Eigen::Index>(b);
    const Eigen::VectorXd diff = local.col(ia) - local.col(ib);
    const double len = diff.norm();
    const Eigen::VectorXd g =
        static_cast<double>(ca + cb) * edge_weight_slope(len, params.range, params.steepness) * (diff / len);
    grad.col(ia) += g;
    grad.col(ib) -= g;
  }
  return grad;
}

/// What center j sends back to each member v: u_jv = d(phi_j)/d(x_v) + d(l_j)/d(x_v),
/// kept as separate terms so gains can be applied by the receiver.
struct CenterContribution {
  RigidityEigenpair eig;
  double phi = 0.0;
  double load = 0.0;
  Eigen::MatrixXd rigidity;  // d x |V_j|, d(phi_j)/dx
  Eigen::MatrixXd load_grad; // d x |V_j|, d(l_j)/dx
};

inline CenterContribution evaluate_center(const SubframeworkTopology& topo, const Positions& local,
                                          const ControlParams& params) {
  CenterContribution out;
  out.eig = subframework_eigenpair(topo, local, params);
  const double q = params.rigidity_exponent;
  out.phi = std::pow(out.eig.rho, -q);
  const double dphi_drho = -q * std::pow(out.eig.rho, -(q + 1.0));
  out.rigidity = dphi_drho * eigenvalue_gradient(topo, local, out.eig, params);
  out.load = center_load(topo, local, params);
  out.load_grad = center_load_gradient(topo, local, params);
  return out;
}

// ---------------------------------------------------------------------------
// Whole-network potentials on a frozen structure.

inline double rigidity_potential(const FrozenStructure& s, const Positions& x, const ControlParams& params) {
  double phi = 0.0;
  for (const auto& topo : s.subframeworks) {
    const auto eig = subframework_eigenpair(topo, gather_positions(x, topo.vertices), params);
    phi += std::pow(eig.rho, -params.rigidity_exponent);
  }
  return phi;
}

inline double load_potential(const FrozenStructure& s, const Positions& x, const ControlParams& params) {
  double load = 0.0;
  for (const auto& topo : s.subframeworks) load += center_load(topo, gather_positions(x, topo.vertices), params);
  return load;
}

/// psi = sum over edges of ||x_i - x_j||^-p.
inline double collision_potential(const Graph& g, const Positions& x, double p) {
  double psi = 0.0;
  for (const auto& [i, j] : g.edges()) {
    const double len = (x.col(static_cast<Eigen::Index>(i)) - x.col(static_cast<Eigen::Index>(j))).norm();
    if (!(len > 0.0)) throw CoincidentNodes(i, j);
    psi += std::pow(len, -p);
  }
  return psi;
}

inline double collision_potential(const Framework& fw, double p) {
  return collision_potential(fw.graph, fw.positions, p);
}

/// d(psi)/d(x_i) = -sum_{j in N_i} p ||x_i - x_j||^-(p+2) (x_i - x_j).
inline Eigen::VectorXd collision_gradient(const Framework& fw, NodeId i, double p) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fw.dim()));
  for (NodeId j : fw.graph.neighbors(i)) {
    const Eigen::VectorXd diff = fw.position(i) - fw.position(j);
    const double len = diff.norm();
    if (!(len > 0.0)) throw CoincidentNodes(i, j);
    grad -= p * std::pow(len, -(p + 2.0)) * diff;
  }
  return grad;
}

inline Eigen::MatrixXd collision_gradients(const Framework& fw, double p) {
  Eigen::MatrixXd grad(fw.positions.rows(), fw.positions.cols());
  for (NodeId i = 0; i < fw.size(); ++i) grad.col(static_cast<Eigen::Index>(i)) = collision_gradient(fw, i, p);
  return grad;
}

// ---------------------------------------------------------------------------
// Controller state.

struct ControlState {
  Framework framework;
  ExtentAssignment extents;  // fixed at t0
  FrozenStructure structure;
  std::vector<RigidityEigenpair> eigenpairs;  // per center, current positions
  double time = 0.0;

  std::vector<double> rhos() const {
    std::vector<double> out;
    out.reserve(eigenpairs.size());
    for (const auto& e : eigenpairs) out.push_back(e.rho);
    return out;
  }
};

/// Builds the state; throws RigidityLost if some subframework is not rigid.
inline ControlState make_control_state(Framework fw, ExtentAssignment ext, const ControlParams& params,
                                       double time = 0.0) {
  if (ext.size() != fw.size()) throw std::invalid_argument("one extent per node required");
  ControlState st;
  st.structure = freeze_structure(fw.graph, ext);
  st.eigenpairs.reserve(fw.size());
  for (const auto& topo : st.structure.subframeworks)
    st.eigenpairs.push_back(subframework_eigenpair(topo, gather_positions(fw.positions, topo.vertices), params));
  st.framework = std::move(fw);
  st.extents = std::move(ext);
  st.time = time;
  return st;
}

inline double rigidity_potential(const ControlState& st, const ControlParams& params) {
  double phi = 0.0;
  for (const auto& e : st.eigenpairs) phi += std::pow(e.rho, -params.rigidity_exponent);
  return phi;
}

inline double load_potential(const ControlState& st, const ControlParams& params) {
  return load_potential(st.structure, st.framework.positions, params);
}

namespace detail {
// Adds the contribution of center j, scaled by `scale`, into a d x n accumulator.
inline void scatter(Eigen::MatrixXd& acc, const SubframeworkTopology& topo, const Eigen::MatrixXd& local,
                    double scale) {
  for (std::size_t a = 0; a < topo.vertices.size(); ++a)
    acc.col(static_cast<Eigen::Index>(topo.vertices[a])) += scale * local.col(static_cast<Eigen::Index>(a));
}

inline Eigen::MatrixXd rigidity_contribution(const ControlState& st, NodeId j, const ControlParams& params) {
  const auto& topo = st.structure.subframeworks[j];
  const auto& eig = st.eigenpairs[j];
  const double q = params.rigidity_exponent;
  return -q * std::pow(eig.rho, -(q + 1.0)) *
         eigenvalue_gradient(topo, gather_positions(st.framework.positions, topo.vertices), eig, params);
}
}  // namespace detail

/// d(phi)/d(x_i), summed over the inclusion group of i.
inline Eigen::VectorXd rigidity_gradient(const ControlState& st, const ControlParams& params, NodeId i) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(st.framework.dim()));
  for (NodeId j : st.structure.inclusion.at(i)) {
    const auto& topo = st.structure.subframeworks[j];
    const auto it = std::lower_bound(topo.vertices.begin(), topo.vertices.end(), i);
    const auto local = static_cast<Eigen::Index>(it - topo.vertices.begin());
    grad += detail::rigidity_contribution(st, j, params).col(local);
  }
  return grad;
}

/// All d(phi)/d(x_i) as a d x n matrix, accumulated center by center.
inline Eigen::MatrixXd rigidity_gradients(const ControlState& st, const ControlParams& params) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(st.framework.positions.rows(), st.framework.positions.cols());
  for (NodeId j = 0; j < st.framework.size(); ++j)
    detail::scatter(acc, st.structure.subframeworks[j], detail::rigidity_contribution(st, j, params), 1.0);
  return acc;
}

/// d(l)/d(x_i), summed over the inclusion group of i.
inline Eigen::VectorXd load_gradient(const ControlState& st, const ControlParams& params, NodeId i) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(st.framework.dim()));
  for (NodeId j : st.structure.inclusion.at(i)) {
    const auto& topo = st.structure.subframeworks[j];
    const auto it = std::lower_bound(topo.vertices.begin(), topo.vertices.end(), i);
    const auto local = static_cast<Eigen::Index>(it - topo.vertices.begin());
    grad += center_load_gradient(topo, gather_positions(st.framework.positions, topo.vertices), params).col(local);
  }
  return grad;
}

inline Eigen::MatrixXd load_gradients(const ControlState& st, const ControlParams& params) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(st.framework.positions.rows(), st.framework.positions.cols());
  for (const auto& topo : st.structure.subframeworks)
    detail::scatter(acc, topo, center_load_gradient(topo, gather_positions(st.framework.positions, topo.vertices), params),
                    1.0);
  return acc;
}

/// Velocity command u_i = -(k_phi dphi/dx_i + k_l dl/dx_i + k_psi dpsi/dx_i).
inline Eigen::MatrixXd control_input(const ControlState& st, const ControlParams& params) {
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(st.framework.positions.rows(), st.framework.positions.cols());
  if (params.gain_rigidity > 0.0) u -= params.gain_rigidity * rigidity_gradients(st, params);
  if (params.gain_load > 0.0) u -= params.gain_load * load_gradients(st, params);
  if (params.gain_collision > 0.0)
    u -= params.gain_collision * collision_gradients(st.framework, params.collision_exponent);
  return u;
}

/// Weighted objective J = k_phi phi + k_l l + k_psi psi on a frozen structure.
inline double objective(const FrozenStructure& s, const Graph& g, const Positions& x, const ControlParams& params) {
  double j = 0.0;
  if (params.gain_rigidity > 0.0) j += params.gain_rigidity * rigidity_potential(s, x, params);
  if (params.gain_load > 0.0) j += params.gain_load * load_potential(s, x, params);
  if (params.gain_collision > 0.0) j += params.gain_collision * collision_potential(g, x, params.collision_exponent);
  return j;
}

/// Edges survive while w >= w_min; new edges form below the range.
inline Graph refresh_topology(const Graph& old, const Positions& x, const ControlParams& params) {
  const std::size_t n = old.size();
  Graph g(n);
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j) {
      const double len = (x.col(static_cast<Eigen::Index>(i)) - x.col(static_cast<Eigen::Index>(j))).norm();
      const bool keep = old.has_edge(i, j) &&
                        edge_weight(len, params.range, params.steepness) >= params.weight_prune_threshold;
      if (keep || len < params.range) g.add_edge(i, j);
    }
  return g;
}

struct StepResult {
  ControlState state;
  double dt_used = 0.0;
  std::size_t halvings = 0;
  std::size_t degenerate = 0;  // subframeworks with a repeated rho after the step
};

/// Euler step x <- x + dt u, followed by topology refresh and re-evaluation of
/// every subframework. If some subframework would lose rigidity (or the graph
/// would disconnect) dt is halved and the step retried, up to
/// params.max_step_halvings times; then RigidityLost propagates.
inline StepResult apply_velocity(const ControlState& st, const Eigen::MatrixXd& u, const ControlParams& params) {
  if (u.rows() != st.framework.positions.rows() || u.cols() != st.framework.positions.cols())
    throw std::invalid_argument("velocity must be d x n");
  double dt = params.dt;
  std::size_t last_center = 0;
  double last_rho = 0.0;
  for (std::size_t attempt = 0; attempt <= params.max_step_halvings; ++attempt, dt *= 0.5) {
    Positions x = st.framework.positions + dt * u;
    Graph g = refresh_topology(st.framework.graph, x, params);
    if (!is_connected(g)) continue;
    try {
      StepResult out{make_control_state(Framework(std::move(g), std::move(x)), st.extents, params, st.time + dt),
                     dt, attempt, 0};
      for (const auto& e : out.state.eigenpairs) out.degenerate += e.degenerate ? 1 : 0;
      return out;
    } catch (const RigidityLost& lost) {
      last_center = lost.center;
      last_rho = lost.rho;
    } catch (const CoincidentNodes&) {
    }
  }
  throw RigidityLost(last_center, last_rho);
}

inline StepResult control_step(const ControlState& st, const ControlParams& params) {
  return apply_velocity(st, control_input(st, params), params);
}

}  // namespace subrigid
