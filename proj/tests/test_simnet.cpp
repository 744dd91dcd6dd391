#include <subrigid/simnet.hpp>
#include <subrigid/simulation.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace subrigid;

namespace {

struct RigidCase {
  Framework fw;
  ExtentAssignment ext;
};

// Rigid disk graphs whose range is drawn relative to the region, so that both
// one-hop and multi-hop extents occur.
std::vector<RigidCase> rigid_cases(std::uint64_t seed, std::size_t count) {
  Rng rng(seed);
  std::vector<RigidCase> out;
  while (out.size() < count) {
    const std::size_t n = 5 + rng.below(26);
    Positions x = oracle::random_positions(rng, 2, n, 100.0);
    Graph g = disk_proximity_graph(x, rng.uniform(25.0, 60.0));
    Framework fw(std::move(g), std::move(x));
    if (!is_connected(fw.graph) || !passes_eigenvalue_test(fw)) continue;
    auto ext = rigidity_extents(fw);
    if (!ext) continue;
    out.push_back({std::move(fw), std::move(*ext)});
  }
  return out;
}

Graph complete(std::size_t n) {
  Graph g(n);
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j) g.add_edge(i, j);
  return g;
}

Framework path_framework(std::size_t n) {
  Graph g(n);
  Positions x(2, static_cast<Eigen::Index>(n));
  for (NodeId i = 0; i < n; ++i) {
    x.col(static_cast<Eigen::Index>(i)) << static_cast<double>(i), 0.0;
    if (i + 1 < n) g.add_edge(i, i + 1);
  }
  return {std::move(g), std::move(x)};
}

}  // namespace

TEST(Network, RejectsNonEdgeSends) {
  const Framework fw = path_framework(3);
  Network net(fw.graph);
  EXPECT_NO_THROW(net.send(0, 1, Message{}));
  EXPECT_THROW(net.send(0, 2, Message{}), ProtocolViolation);
  EXPECT_THROW(net.send(1, 1, Message{}), ProtocolViolation);
}

TEST(Network, MessagesAppearOnlyAfterDelivery) {
  const Framework fw = path_framework(3);
  Network net(fw.graph);
  Message m;
  m.origin = 0;
  net.send(0, 1, m);
  EXPECT_EQ(net.inbox_size(1), 0u);
  EXPECT_EQ(net.in_flight(), 1u);
  EXPECT_EQ(net.deliver(), 1u);
  EXPECT_EQ(net.round(), 1u);
  const auto inbox = net.take_inbox(1);
  ASSERT_EQ(inbox.size(), 1u);
  EXPECT_EQ(inbox[0].origin, 0u);
  EXPECT_EQ(net.inbox_size(1), 0u);
}

TEST(ExchangePhase, OneHopExtentsFinishInTwoRounds) {
  for (std::size_t n : {2u, 3u, 5u}) {
    Framework fw(complete(n), Positions::Random(2, static_cast<Eigen::Index>(n)));
    const auto log = run_exchange_phase(fw, ExtentAssignment::uniform(n, 1));
    EXPECT_TRUE(log.complete());
    EXPECT_EQ(log.completion_round, 2u);
  }
  const Framework path = path_framework(6);
  const auto log = run_exchange_phase(path, ExtentAssignment::uniform(6, 1));
  EXPECT_EQ(log.completion_round, 2u);
  EXPECT_EQ(log.pairs_expected, 6u + 2u * path.graph.edge_count());
}

TEST(ExchangePhase, PathWithFullExtentsUsesExactlyTwiceTheWorstExtent) {
  const Framework fw = path_framework(5);
  const auto ext = ExtentAssignment::eccentricities(fw.graph);
  const auto log = run_exchange_phase(fw, ext);
  EXPECT_EQ(log.worst_extent, 4u);
  EXPECT_EQ(log.completion_round, 8u);
  EXPECT_EQ(log.pairs_expected, 25u);
}

TEST(ExchangePhase, RoundBoundOnRigidFrameworks) {
  std::size_t multi_hop = 0;
  for (const auto& c : rigid_cases(31, 200)) {
    const auto log = run_exchange_phase(c.fw, c.ext);
    ASSERT_TRUE(log.complete());
    EXPECT_LE(log.completion_round, 2 * c.ext.worst_case());
    EXPECT_EQ(log.rounds.back().pairs_completed, log.pairs_expected);
    multi_hop += c.ext.worst_case() > 1;
  }
  RecordProperty("multi_hop_cases", static_cast<int>(multi_hop));
  EXPECT_GT(multi_hop, 20u);
}

TEST(ExchangePhase, RoundBoundForArbitraryValidExtents) {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(15);
    const Graph g = oracle::random_connected_graph(rng, n, 0.1);
    Framework fw(g, oracle::random_positions(rng, 2, n));
    ExtentAssignment ext;
    for (NodeId i = 0; i < n; ++i) ext.extents.push_back(1 + rng.below(std::max<std::size_t>(1, eccentricity(g, i))));
    validate_extents(g, ext);
    const auto log = run_exchange_phase(fw, ext);
    EXPECT_TRUE(log.complete());
    EXPECT_LE(log.completion_round, 2 * ext.worst_case());
  }
}

TEST(ExchangePhase, CenterViewsMatchExtractedSubframeworks) {
  for (const auto& c : rigid_cases(33, 40)) {
    auto outcome = run_exchange_phase(c.fw, c.ext, CenterHandler{}, 0);
    for (NodeId j = 0; j < c.fw.size(); ++j) {
      const auto sub = extract_subframework(c.fw, j, c.ext[j]);
      const auto& view = outcome.views[j];
      EXPECT_EQ(view.topology.vertices, sub.vertices);
      EXPECT_EQ(view.topology.hops, sub.hops);
      EXPECT_EQ(view.positions, sub.framework.positions);
      std::vector<Edge> edges;
      for (const auto& [a, b] : view.topology.edges) edges.push_back({a, b});
      EXPECT_EQ(edges, sub.framework.graph.edges());
    }
  }
}

TEST(ExchangePhase, ReturnsReachEveryMemberOfEachInclusionGroup) {
  // Center j returns (j+1) * (member+1) to each member; agent i must receive
  // the sum over its inclusion group.
  for (const auto& c : rigid_cases(34, 40)) {
    const CenterHandler handler = [](const CenterView& v) {
      Eigen::MatrixXd cols(1, static_cast<Eigen::Index>(v.topology.vertices.size()));
      for (std::size_t a = 0; a < v.topology.vertices.size(); ++a)
        cols(0, static_cast<Eigen::Index>(a)) =
            static_cast<double>((v.topology.center + 1) * (v.topology.vertices[a] + 1));
      return cols;
    };
    const auto outcome = run_exchange_phase(c.fw, c.ext, handler, 1);
    for (NodeId i = 0; i < c.fw.size(); ++i) {
      double expected = 0.0;
      for (NodeId j : inclusion_group(c.fw.graph, i, c.ext)) expected += static_cast<double>((j + 1) * (i + 1));
      EXPECT_DOUBLE_EQ(outcome.received(0, static_cast<Eigen::Index>(i)), expected);
    }
  }
}

TEST(ExchangePhase, WrongHandlerShapeIsALogicError) {
  const Framework fw = path_framework(3);
  const CenterHandler bad = [](const CenterView&) { return Eigen::MatrixXd::Zero(1, 1); };
  EXPECT_THROW(run_exchange_phase(fw, ExtentAssignment::uniform(3, 1), bad, 1), std::logic_error);
}

TEST(ExchangePhase, TraceFollowsEdgesAndRoundCounts) {
  for (const auto& c : rigid_cases(35, 20)) {
    std::vector<TraceEvent> events;
    const auto log = run_exchange_phase(c.fw, c.ext, [&](const TraceEvent& e) { events.push_back(e); });
    std::size_t sent = 0;
    for (const auto& r : log.rounds) sent += r.delivered;
    EXPECT_EQ(events.size(), sent);
    std::size_t last_round = 0;
    for (const auto& e : events) {
      EXPECT_TRUE(c.fw.graph.has_edge(e.from, e.to));
      EXPECT_GE(e.round, last_round);
      EXPECT_LE(e.round, 2 * c.ext.worst_case());
      last_round = e.round;
      if (e.kind == MessageKind::PositionFlood) EXPECT_LT(e.ttl, c.ext.worst_case());
    }
  }
}

TEST(DecentralizedControl, MatchesCentralizedInput) {
  ControlParams params;
  for (const auto& c : rigid_cases(36, 30)) {
    params.range = 1.05 * [&] {
      double longest = 0.0;
      for (const auto& e : c.fw.graph.edges())
        longest = std::max(longest, (c.fw.position(e.i) - c.fw.position(e.j)).norm());
      return longest;
    }();
    ControlState st;
    try {
      st = make_control_state(c.fw, c.ext, params);
    } catch (const RigidityLost&) {
      continue;
    }
    const Eigen::MatrixXd central = control_input(st, params);
    const auto [u, log] = decentralized_control_input(c.fw, c.ext, params);
    EXPECT_LT((u - central).norm(), 1e-9 * (1.0 + central.norm()));
    EXPECT_LE(log.completion_round, 2 * c.ext.worst_case());
  }
}

TEST(DecentralizedControl, TruthModeStepMatchesCentralizedStep) {
  const auto c = rigid_cases(37, 1).front();
  SimulationParams p;
  p.use_estimates = false;
  p.control.range = 70.0;
  const World w = make_world(c.fw, c.ext, p, 37);
  const World next = step_simulation(w, p);
  const auto central = apply_velocity(w.truth, control_input(w.truth, p.control), p.control);
  EXPECT_LT((next.truth.framework.positions - central.state.framework.positions).norm(), 1e-9);
  EXPECT_EQ(next.truth.framework.graph.edges(), central.state.framework.graph.edges());
}
