#pragma once

#include "subrigid/control.hpp"
#include "subrigid/errors.hpp"
#include "subrigid/graph.hpp"
#include "subrigid/localization.hpp"
#include "subrigid/random.hpp"
#include "subrigid/rigidity.hpp"
#include "subrigid/subframework.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace subrigid {

enum class MessageKind { PositionFlood, GradientReturn, EstimateBroadcast };

inline const char* to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::PositionFlood: return "PositionFlood";
    case MessageKind::GradientReturn: return "GradientReturn";
    case MessageKind::EstimateBroadcast: return "EstimateBroadcast";
  }
  return "?";
}

struct Message {
  MessageKind kind = MessageKind::PositionFlood;
  NodeId origin = 0;                // flooding node, or the center for GradientReturn
  NodeId target = 0;                // GradientReturn only
  Eigen::VectorXd payload;          // position, or the center's contribution
  std::vector<NodeId> neighbors;    // origin's neighbor list (PositionFlood)
  std::size_t ttl = 0;              // hops the message may still be forwarded
  // PositionFlood: nodes traversed so far, origin first.
  // GradientReturn: remaining route; the next hop is path.back().
  std::vector<NodeId> path;
};

struct TraceEvent {
  std::size_t round;
  MessageKind kind;
  NodeId origin;
  NodeId target;
  NodeId from;
  NodeId to;
  std::size_t ttl;
};

using TraceSink = std::function<void(const TraceEvent&)>;

/// Lock-step transport: messages sent during a round become visible to their
/// recipient only after deliver(). Every send is checked against the edge set.
class Network {
 public:
  explicit Network(const Graph& g) : graph_(&g), pending_(g.size()), inbox_(g.size()) {}

  void set_trace(TraceSink sink) { trace_ = std::move(sink); }

  void send(NodeId from, NodeId to, Message msg) {
    if (!graph_->has_edge(from, to))
      throw ProtocolViolation("message from " + std::to_string(from) + " to " + std::to_string(to) +
                              " crosses a non-edge");
    if (trace_) trace_({round_ + 1, msg.kind, msg.origin, msg.target, from, to, msg.ttl});
    pending_[to].push_back(std::move(msg));
    ++in_flight_;
    ++sent_this_round_;
  }

  /// Ends the round; returns the number of messages delivered.
  std::size_t deliver() {
    ++round_;
    const std::size_t delivered = in_flight_;
    for (std::size_t i = 0; i < pending_.size(); ++i) {
      inbox_[i] = std::move(pending_[i]);
      pending_[i].clear();
    }
    in_flight_ = 0;
    sent_this_round_ = 0;
    return delivered;
  }

  /// Messages delivered to `i` in the last completed round.
  std::vector<Message> take_inbox(NodeId i) { return std::exchange(inbox_.at(i), {}); }

  std::size_t inbox_size(NodeId i) const { return inbox_.at(i).size(); }
  std::size_t round() const { return round_; }
  std::size_t in_flight() const { return in_flight_; }

 private:
  const Graph* graph_;
  std::vector<std::vector<Message>> pending_;
  std::vector<std::vector<Message>> inbox_;
  std::size_t round_ = 0;
  std::size_t in_flight_ = 0;
  std::size_t sent_this_round_ = 0;
  TraceSink trace_;
};

struct RoundStats {
  std::size_t round = 0;
  std::size_t delivered = 0;
  std::size_t max_inbox = 0;
  std::size_t max_outbox = 0;
  std::size_t pairs_completed = 0;  // cumulative
};

struct PairCompletion {
  NodeId center;
  NodeId member;
  std::size_t round;
};

/// Record of one exchange phase.
struct RoundLog {
  std::vector<RoundStats> rounds;
  std::vector<PairCompletion> completions;  // in completion order
  std::size_t pairs_expected = 0;
  std::size_t completion_round = 0;  // round in which the last pair completed
  std::size_t worst_extent = 0;      // eta

  bool complete() const { return completions.size() == pairs_expected; }
};

/// What a center assembled purely from its inbox.
struct CenterView {
  SubframeworkTopology topology;
  Positions positions;  // local, columns follow topology.vertices
};

/// Computes, for each member of the center's subframework, the column that is
/// returned to it (payload_rows x |V_j|).
using CenterHandler = std::function<Eigen::MatrixXd(const CenterView&)>;

struct ExchangeOutcome {
  RoundLog log;
  Eigen::MatrixXd received;                       // payload_rows x n, per-agent sums
  std::vector<Eigen::MatrixXd> neighbor_positions;  // per agent, d x delta_i, from floods
  std::vector<CenterView> views;                  // per center
};

namespace detail {

struct FloodRecord {
  Eigen::VectorXd position;
  std::vector<NodeId> neighbors;
  std::vector<NodeId> path;  // origin first, excludes the receiving agent
};

// Agent-local memory for one exchange. Agents see only this and their inbox.
struct ExchangeAgent {
  NodeId id = 0;
  std::size_t extent = 1;
  std::size_t ttl = 1;
  Eigen::VectorXd position;
  std::vector<NodeId> neighbors;
  std::map<NodeId, FloodRecord> floods;
  Eigen::VectorXd received;
  bool fired = false;
};

inline CenterView assemble_view(const ExchangeAgent& agent) {
  CenterView view;
  auto& topo = view.topology;
  topo.center = agent.id;
  topo.extent = agent.extent;
  std::vector<std::pair<NodeId, std::size_t>> members{{agent.id, 0}};
  for (const auto& [origin, rec] : agent.floods)
    if (rec.path.size() <= agent.extent) members.emplace_back(origin, rec.path.size());
  std::sort(members.begin(), members.end());
  for (const auto& [v, h] : members) {
    topo.vertices.push_back(v);
    topo.hops.push_back(h);
  }
  view.positions.resize(agent.position.size(), static_cast<Eigen::Index>(members.size()));
  for (std::size_t a = 0; a < members.size(); ++a) {
    const NodeId v = members[a].first;
    const auto& pos = v == agent.id ? agent.position : agent.floods.at(v).position;
    const auto& nbrs = v == agent.id ? agent.neighbors : agent.floods.at(v).neighbors;
    view.positions.col(static_cast<Eigen::Index>(a)) = pos;
    for (NodeId w : nbrs) {
      if (w <= v) continue;
      auto it = std::lower_bound(topo.vertices.begin(), topo.vertices.end(), w);
      if (it != topo.vertices.end() && *it == w)
        topo.edges.emplace_back(a, static_cast<std::size_t>(it - topo.vertices.begin()));
    }
  }
  std::sort(topo.edges.begin(), topo.edges.end());
  return view;
}

}  // namespace detail

/// One decentralized exchange: positions flood out to inclusion groups, each
/// center j evaluates `handler` on its assembled subframework, and returns one
/// column to every member along the reverse of the flood path. The flood ttl of
/// node i is max{h_j | j in I_i}, precomputed from the static extents.
///
/// Throws ProtocolViolation if a (center, member) pair is still undelivered
/// after 2*eta rounds.
inline ExchangeOutcome run_exchange_phase(const Framework& broadcast, const ExtentAssignment& ext,
                                          const CenterHandler& handler, Eigen::Index payload_rows,
                                          const TraceSink& trace = {}) {
  const Graph& g = broadcast.graph;
  const std::size_t n = g.size();
  if (ext.size() != n) throw std::invalid_argument("one extent per node required");
  const std::size_t eta = ext.worst_case();

  std::vector<detail::ExchangeAgent> agents(n);
  for (NodeId i = 0; i < n; ++i) {
    auto& a = agents[i];
    a.id = i;
    a.extent = ext[i];
    a.position = broadcast.position(i);
    a.neighbors = g.neighbors(i);
    a.received = Eigen::VectorXd::Zero(payload_rows);
    a.ttl = 1;
    for (NodeId j : inclusion_group(g, i, ext)) a.ttl = std::max(a.ttl, ext[j]);
  }

  ExchangeOutcome out;
  out.views.resize(n);
  auto& log = out.log;
  log.worst_extent = eta;
  for (NodeId j = 0; j < n; ++j) {
    const auto dist = detail::bfs_raw(g, j, ext[j]);
    log.pairs_expected += static_cast<std::size_t>(
        std::count_if(dist.begin(), dist.end(), [&](std::size_t h) { return h <= ext[j]; }));
  }

  Network net(g);
  if (trace) net.set_trace(trace);
  std::vector<std::size_t> outbox(n, 0);

  auto complete = [&](NodeId center, NodeId member, std::size_t round) {
    log.completions.push_back({center, member, round});
    log.completion_round = std::max(log.completion_round, round);
  };

  const std::size_t round_cap = 2 * eta + 2;
  for (std::size_t round = 1; round <= round_cap; ++round) {
    std::fill(outbox.begin(), outbox.end(), 0);
    std::size_t max_inbox = 0;
    for (NodeId i = 0; i < n; ++i) {
      auto& agent = agents[i];
      auto send = [&](NodeId to, Message m) {
        net.send(i, to, std::move(m));
        ++outbox[i];
      };

      if (round == 1) {
        for (NodeId w : agent.neighbors) {
          Message m;
          m.kind = MessageKind::PositionFlood;
          m.origin = i;
          m.payload = agent.position;
          m.neighbors = agent.neighbors;
          m.ttl = agent.ttl - 1;
          m.path = {i};
          send(w, std::move(m));
        }
      }

      auto inbox = net.take_inbox(i);
      max_inbox = std::max(max_inbox, inbox.size());
      for (auto& m : inbox) {
        if (m.kind == MessageKind::PositionFlood) {
          if (m.origin == i || agent.floods.count(m.origin)) continue;
          agent.floods[m.origin] = {m.payload, m.neighbors, m.path};
          if (m.ttl == 0) continue;
          const NodeId sender = m.path.back();
          for (NodeId w : agent.neighbors) {
            if (w == sender) continue;
            Message fwd = m;
            fwd.ttl = m.ttl - 1;
            fwd.path.push_back(i);
            send(w, std::move(fwd));
          }
        } else if (m.kind == MessageKind::GradientReturn) {
          if (m.target == i) {
            agent.received += m.payload;
            complete(m.origin, i, round - 1);
          } else {
            const NodeId next = m.path.back();
            m.path.pop_back();
            send(next, std::move(m));
          }
        }
      }

      // Everything within h_i hops has arrived by the end of round h_i.
      if (!agent.fired && round == agent.extent + 1) {
        agent.fired = true;
        CenterView view = detail::assemble_view(agent);
        const Eigen::MatrixXd cols = handler ? handler(view)
                                             : Eigen::MatrixXd::Zero(payload_rows, static_cast<Eigen::Index>(view.topology.vertices.size()));
        if (cols.rows() != payload_rows || cols.cols() != static_cast<Eigen::Index>(view.topology.vertices.size()))
          throw std::logic_error("center handler returned a matrix of the wrong shape");
        for (std::size_t a = 0; a < view.topology.vertices.size(); ++a) {
          const NodeId member = view.topology.vertices[a];
          if (member == i) {
            agent.received += cols.col(static_cast<Eigen::Index>(a));
            complete(i, i, agent.extent);
            continue;
          }
          Message m;
          m.kind = MessageKind::GradientReturn;
          m.origin = i;
          m.target = member;
          m.payload = cols.col(static_cast<Eigen::Index>(a));
          m.path = agent.floods.at(member).path;  // origin ... last forwarder
          const NodeId next = m.path.back();
          m.path.pop_back();
          send(next, std::move(m));
        }
        out.views[i] = std::move(view);
      }
    }

    const std::size_t delivered = net.deliver();
    log.rounds.push_back({round, delivered, max_inbox, *std::max_element(outbox.begin(), outbox.end()), 0});
    bool pending = false;
    for (NodeId i = 0; i < n && !pending; ++i) pending = net.inbox_size(i) > 0;
    if (!pending && std::all_of(agents.begin(), agents.end(), [](const auto& a) { return a.fired; })) break;
  }
  for (auto& stats : log.rounds)
    stats.pairs_completed = static_cast<std::size_t>(std::count_if(
        log.completions.begin(), log.completions.end(), [&](const PairCompletion& c) { return c.round <= stats.round; }));

  if (!log.complete() || log.completion_round > 2 * eta)
    throw ProtocolViolation("exchange incomplete after " + std::to_string(2 * eta) + " rounds");

  out.received.resize(payload_rows, static_cast<Eigen::Index>(n));
  out.neighbor_positions.resize(n);
  for (NodeId i = 0; i < n; ++i) {
    out.received.col(static_cast<Eigen::Index>(i)) = agents[i].received;
    auto& np = out.neighbor_positions[i];
    np.resize(broadcast.positions.rows(), static_cast<Eigen::Index>(agents[i].neighbors.size()));
    for (std::size_t k = 0; k < agents[i].neighbors.size(); ++k)
      np.col(static_cast<Eigen::Index>(k)) = agents[i].floods.at(agents[i].neighbors[k]).position;
  }
  return out;
}

/// Round log only, with empty payloads.
inline RoundLog run_exchange_phase(const Framework& fw, const ExtentAssignment& ext, const TraceSink& trace = {}) {
  return run_exchange_phase(fw, ext, CenterHandler{}, 0, trace).log;
}

}  // namespace subrigid
