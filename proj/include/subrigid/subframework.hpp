#pragma once

#include "subrigid/graph.hpp"
#include "subrigid/rigidity.hpp"

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace subrigid {

/// The framework induced by every node within `extent` hops of `center`.
struct Subframework {
  NodeId center = 0;
  std::size_t extent = 0;
  std::vector<NodeId> vertices;    // sorted global ids; local index = position here
  std::vector<std::size_t> hops;   // g_{center, vertices[k]}
  Framework framework;             // local ids 0..|V|-1

  std::size_t size() const { return vertices.size(); }
  NodeId global_id(std::size_t local) const { return vertices.at(local); }

  std::optional<std::size_t> local_index(NodeId global) const {
    auto it = std::lower_bound(vertices.begin(), vertices.end(), global);
    if (it == vertices.end() || *it != global) return std::nullopt;
    return static_cast<std::size_t>(it - vertices.begin());
  }
};

namespace detail {
// Ball vertices (sorted) and their hop counts from a raw BFS row.
inline void collect_ball(const std::vector<std::size_t>& dist, std::size_t h,
                         std::vector<NodeId>& vertices, std::vector<std::size_t>& hops) {
  vertices.clear();
  hops.clear();
  for (NodeId v = 0; v < dist.size(); ++v)
    if (dist[v] <= h) {
      vertices.push_back(v);
      hops.push_back(dist[v]);
    }
}

inline Framework induced_framework(const Framework& fw, const std::vector<NodeId>& vertices) {
  Graph local(vertices.size());
  Positions pos(fw.positions.rows(), static_cast<Eigen::Index>(vertices.size()));
  for (std::size_t a = 0; a < vertices.size(); ++a) {
    pos.col(static_cast<Eigen::Index>(a)) = fw.position(vertices[a]);
    for (NodeId w : fw.graph.neighbors(vertices[a])) {
      if (w <= vertices[a]) continue;
      auto it = std::lower_bound(vertices.begin(), vertices.end(), w);
      if (it != vertices.end() && *it == w)
        local.add_edge(a, static_cast<std::size_t>(it - vertices.begin()));
    }
  }
  return Framework(std::move(local), std::move(pos));
}
}  // namespace detail

inline Subframework extract_subframework(const Framework& fw, NodeId center, std::size_t h) {
  if (h < 1) throw std::invalid_argument("subframework extent must be at least 1");
  if (center >= fw.size()) throw std::out_of_range("subframework center outside framework");
  Subframework sub;
  sub.center = center;
  sub.extent = h;
  detail::collect_ball(detail::bfs_raw(fw.graph, center, h), h, sub.vertices, sub.hops);
  sub.framework = detail::induced_framework(fw, sub.vertices);
  return sub;
}

/// Per-node extents h_i.
struct ExtentAssignment {
  std::vector<std::size_t> extents;

  std::size_t size() const { return extents.size(); }
  std::size_t operator[](NodeId i) const { return extents.at(i); }
  std::size_t worst_case() const {
    return extents.empty() ? 0 : *std::max_element(extents.begin(), extents.end());
  }

  static ExtentAssignment uniform(std::size_t n, std::size_t h) { return {std::vector<std::size_t>(n, h)}; }

  /// h_i = eccentricity of i, the largest meaningful extent.
  static ExtentAssignment eccentricities(const Graph& g) {
    ExtentAssignment out;
    out.extents.reserve(g.size());
    for (NodeId i = 0; i < g.size(); ++i) out.extents.push_back(std::max<std::size_t>(1, eccentricity(g, i)));
    return out;
  }
};

/// Throws std::invalid_argument unless 1 <= h_i <= max(1, eps_i) for all i.
inline void validate_extents(const Graph& g, const ExtentAssignment& ext) {
  if (ext.size() != g.size()) throw std::invalid_argument("one extent per node required");
  for (NodeId i = 0; i < g.size(); ++i) {
    const auto ecc = std::max<std::size_t>(1, eccentricity(g, i));
    if (ext[i] < 1 || ext[i] > ecc)
      throw std::invalid_argument("extent of node " + std::to_string(i) + " outside [1, eccentricity]");
  }
}

/// Minimal h in 1..eps_center whose subframework is infinitesimally rigid
/// (W = I); std::nullopt is the "no rigidity extent" outcome. Balls with at
/// most d nodes are skipped.
inline std::optional<std::size_t> rigidity_extent(const Framework& fw, NodeId center,
                                                  double tol = kDefaultRigidityTol) {
  const auto dist = detail::bfs_raw(fw.graph, center);
  std::size_t ecc = 0;
  for (auto v : dist)
    if (v != detail::kUnreached) ecc = std::max(ecc, v);

  std::vector<NodeId> vertices;
  std::vector<std::size_t> hops;
  std::size_t previous_size = 0;
  for (std::size_t h = 1; h <= ecc; ++h) {
    detail::collect_ball(dist, h, vertices, hops);
    if (vertices.size() <= fw.dim()) continue;
    if (vertices.size() == previous_size) continue;  // same ball, same verdict
    previous_size = vertices.size();
    if (passes_eigenvalue_test(detail::induced_framework(fw, vertices), tol)) return h;
  }
  return std::nullopt;
}

/// eta_i for every node, or std::nullopt if some node has no rigidity extent.
inline std::optional<ExtentAssignment> rigidity_extents(const Framework& fw,
                                                        double tol = kDefaultRigidityTol) {
  ExtentAssignment out;
  out.extents.reserve(fw.size());
  for (NodeId i = 0; i < fw.size(); ++i) {
    const auto h = rigidity_extent(fw, i, tol);
    if (!h) return std::nullopt;
    out.extents.push_back(*h);
  }
  return out;
}

/// eta = max_i eta_i.
inline std::optional<std::size_t> worst_case_extent(const Framework& fw,
                                                    double tol = kDefaultRigidityTol) {
  const auto ext = rigidity_extents(fw, tol);
  if (!ext) return std::nullopt;
  return ext->worst_case();
}

/// I_i = { j : g_ij <= h_j }, sorted.
inline std::vector<NodeId> inclusion_group(const Graph& g, NodeId i, const ExtentAssignment& ext) {
  const auto dist = detail::bfs_raw(g, i);
  std::vector<NodeId> out;
  for (NodeId j = 0; j < g.size(); ++j)
    if (dist[j] != detail::kUnreached && dist[j] <= ext[j]) out.push_back(j);
  return out;
}

struct LoadCoefficient {
  NodeId node;
  std::size_t c;  // max(0, h_center - g_{center,node})
};

struct LoadReport {
  std::vector<double> per_node;                        // l_i
  double total = 0.0;                                  // l
  double standardized = 0.0;                           // l / 2m
  std::vector<std::vector<LoadCoefficient>> coefficients;  // per center, over V_i
};

/// l_i = sum_{j in V_i} c_ij * degree_j, with per-node degrees supplied by the
/// caller (plain or weighted).
inline LoadReport communication_load(const Graph& g, const ExtentAssignment& ext,
                                     std::span<const double> degrees) {
  if (ext.size() != g.size() || degrees.size() != g.size())
    throw std::invalid_argument("extents and degrees must cover every node");
  LoadReport rep;
  rep.per_node.assign(g.size(), 0.0);
  rep.coefficients.resize(g.size());
  for (NodeId i = 0; i < g.size(); ++i) {
    const auto dist = detail::bfs_raw(g, i, ext[i]);
    double li = 0.0;
    for (NodeId j = 0; j < g.size(); ++j) {
      if (dist[j] > ext[i]) continue;
      const std::size_t c = ext[i] - dist[j];
      rep.coefficients[i].push_back({j, c});
      li += static_cast<double>(c) * degrees[j];
    }
    rep.per_node[i] = li;
    rep.total += li;
  }
  const double two_m = 2.0 * static_cast<double>(g.edge_count());
  rep.standardized = two_m > 0.0 ? rep.total / two_m : 0.0;
  return rep;
}

/// Load with plain degrees delta_j.
inline LoadReport communication_load(const Graph& g, const ExtentAssignment& ext) {
  std::vector<double> deg(g.size());
  for (NodeId j = 0; j < g.size(); ++j) deg[j] = static_cast<double>(g.degree(j));
  return communication_load(g, ext, deg);
}

/// True iff every subframework under `ext` is infinitesimally rigid.
inline bool verify_subframework_rigidity(const Framework& fw, const ExtentAssignment& ext,
                                         double tol = kDefaultRigidityTol) {
  if (ext.size() != fw.size()) throw std::invalid_argument("one extent per node required");
  for (NodeId i = 0; i < fw.size(); ++i) {
    const auto sub = extract_subframework(fw, i, ext[i]);
    if (sub.size() <= fw.dim()) return false;
    if (!passes_eigenvalue_test(sub.framework, tol)) return false;
  }
  return true;
}

}  // namespace subrigid
