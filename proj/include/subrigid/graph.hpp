#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace subrigid {

using NodeId = std::size_t;

/// Hop count between two nodes; std::nullopt means "unreachable".
using Hops = std::optional<std::size_t>;

/// Node positions, one column per node (d x n). Column-major storage makes the
/// raw data the stacked vector [x_0; x_1; ...; x_{n-1}].
using Positions = Eigen::MatrixXd;

struct Edge {
  NodeId i;
  NodeId j;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Simple undirected graph on dense ids 0..n-1.
///
/// Adjacency lists are kept sorted, so iterating `edges()` yields the
/// lexicographic order (i < j, then by j) used for rows of the rigidity matrix.
class Graph {
 public:
  Graph() = default;
  explicit Graph(std::size_t n) : adjacency_(n) {}

  Graph(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edge_list) : adjacency_(n) {
    for (const auto& [a, b] : edge_list) add_edge(a, b);
  }

  std::size_t size() const { return adjacency_.size(); }
  std::size_t edge_count() const { return edge_count_; }

  /// Inserts {a, b}; returns false if it was already present.
  bool add_edge(NodeId a, NodeId b) {
    check_node(a);
    check_node(b);
    if (a == b) throw std::invalid_argument("self-loop on node " + std::to_string(a));
    auto& na = adjacency_[a];
    auto it = std::lower_bound(na.begin(), na.end(), b);
    if (it != na.end() && *it == b) return false;
    na.insert(it, b);
    auto& nb = adjacency_[b];
    nb.insert(std::lower_bound(nb.begin(), nb.end(), a), a);
    ++edge_count_;
    return true;
  }

  bool remove_edge(NodeId a, NodeId b) {
    check_node(a);
    check_node(b);
    auto& na = adjacency_[a];
    auto it = std::lower_bound(na.begin(), na.end(), b);
    if (it == na.end() || *it != b) return false;
    na.erase(it);
    auto& nb = adjacency_[b];
    nb.erase(std::lower_bound(nb.begin(), nb.end(), a));
    --edge_count_;
    return true;
  }

  bool has_edge(NodeId a, NodeId b) const {
    if (a >= size() || b >= size()) return false;
    const auto& na = adjacency_[a];
    return std::binary_search(na.begin(), na.end(), b);
  }

  const std::vector<NodeId>& neighbors(NodeId i) const { return adjacency_.at(i); }
  std::size_t degree(NodeId i) const { return adjacency_.at(i).size(); }

  /// Edges with i < j in lexicographic order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count_);
    for (NodeId i = 0; i < size(); ++i)
      for (NodeId j : adjacency_[i])
        if (j > i) out.push_back({i, j});
    return out;
  }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  void check_node(NodeId v) const {
    if (v >= size())
      throw std::out_of_range("node " + std::to_string(v) + " outside graph of size " +
                              std::to_string(size()));
  }

  std::vector<std::vector<NodeId>> adjacency_;
  std::size_t edge_count_ = 0;
};

namespace detail {
inline constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

// BFS from `source`, stopping after `max_hops`; unreached entries hold kUnreached.
inline std::vector<std::size_t> bfs_raw(const Graph& g, NodeId source,
                                        std::size_t max_hops = kUnreached) {
  std::vector<std::size_t> dist(g.size(), kUnreached);
  std::deque<NodeId> queue{source};
  dist.at(source) = 0;
  while (!queue.empty()) {
    const NodeId v = queue.front();
    queue.pop_front();
    if (dist[v] >= max_hops) continue;
    for (NodeId w : g.neighbors(v)) {
      if (dist[w] == kUnreached) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}
}  // namespace detail

/// Hop counts g_{source,j} for every node j.
inline std::vector<Hops> bfs_distances(const Graph& g, NodeId source) {
  if (source >= g.size()) throw std::out_of_range("bfs source outside graph");
  const auto raw = detail::bfs_raw(g, source);
  std::vector<Hops> out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j)
    if (raw[j] != detail::kUnreached) out[j] = raw[j];
  return out;
}

/// All-pairs hop counts from n breadth-first searches.
class GeodesicTable {
 public:
  explicit GeodesicTable(const Graph& g) : n_(g.size()), dist_(n_ * n_) {
    for (NodeId s = 0; s < n_; ++s) {
      const auto row = detail::bfs_raw(g, s);
      std::copy(row.begin(), row.end(), dist_.begin() + static_cast<std::ptrdiff_t>(s * n_));
    }
  }

  std::size_t size() const { return n_; }

  Hops operator()(NodeId i, NodeId j) const {
    const auto v = dist_.at(i * n_ + j);
    if (v == detail::kUnreached) return std::nullopt;
    return v;
  }

  bool connected() const {
    return std::none_of(dist_.begin(), dist_.end(),
                        [](std::size_t v) { return v == detail::kUnreached; });
  }

  /// Largest entry; throws if some pair is unreachable.
  std::size_t max_hops() const {
    if (!connected()) throw std::domain_error("diameter of a disconnected graph is undefined");
    return n_ == 0 ? 0 : *std::max_element(dist_.begin(), dist_.end());
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> dist_;
};

inline bool is_connected(const Graph& g) {
  if (g.size() == 0) return true;
  const auto raw = detail::bfs_raw(g, 0);
  return std::none_of(raw.begin(), raw.end(),
                      [](std::size_t v) { return v == detail::kUnreached; });
}

/// Largest hop count from `i` to any node of its connected component.
inline std::size_t eccentricity(const Graph& g, NodeId i) {
  std::size_t ecc = 0;
  for (auto v : detail::bfs_raw(g, i))
    if (v != detail::kUnreached) ecc = std::max(ecc, v);
  return ecc;
}

/// Maximum eccentricity. Throws std::domain_error for disconnected graphs.
inline std::size_t diameter(const Graph& g) {
  std::size_t diam = 0;
  for (NodeId i = 0; i < g.size(); ++i) {
    const auto raw = detail::bfs_raw(g, i);
    for (auto v : raw) {
      if (v == detail::kUnreached)
        throw std::domain_error("diameter of a disconnected graph is undefined");
      diam = std::max(diam, v);
    }
  }
  return diam;
}

/// Disk-proximity model: {i, j} is an edge iff ||x_i - x_j|| < range (strict).
inline Graph disk_proximity_graph(const Positions& positions, double range) {
  if (!(range > 0.0)) throw std::invalid_argument("disk-proximity range must be positive");
  const auto n = static_cast<std::size_t>(positions.cols());
  Graph g(n);
  const double range_sq = range * range;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if ((positions.col(static_cast<Eigen::Index>(i)) - positions.col(static_cast<Eigen::Index>(j)))
              .squaredNorm() < range_sq)
        g.add_edge(i, j);
  return g;
}

}  // namespace subrigid
