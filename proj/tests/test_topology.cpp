#include <doctest.h>

#include <set>
#include <sstream>

#include "dactd/topology.hpp"
#include "dactd/verify.hpp"

using namespace dactd;

namespace {
std::vector<AgentId> ids(std::initializer_list<int> one_based) {
  std::vector<AgentId> v;
  for (int x : one_based) v.push_back(x - 1);
  return v;
}
}  // namespace

TEST_CASE("khop neighbours on a five-agent line") {
  const auto g = line_graph(5);
  CHECK(khop_neighbors(g, 0, 2) == ids({3}));
  CHECK(khop_neighbors(g, 2, 1) == ids({2, 4}));
  CHECK(khop_neighbors(g, 0, 5).empty());
  CHECK(khop_neighbors(g, 3, 0) == ids({4}));
  CHECK_THROWS_AS(khop_neighbors(g, 5, 1), ArgumentError);
  CHECK_THROWS_AS(khop_neighbors(g, -1, 1), ArgumentError);
}

TEST_CASE("latency bound examples") {
  CHECK(latency_bound(line_graph(5), 0, 1) == 4);
  for (int n : {2, 3, 7}) CHECK(latency_bound(complete_graph(n), 0, 1) == 1);
  CHECK(latency_bound(star_graph(6, 0), 1, 2) == 6);
  CHECK(latency_bound(line_graph(1), 0, 1) == 1);
  CHECK_THROWS_AS(latency_bound(undirected_graph(4, {{0, 1}, {2, 3}}), 0, 1), TopologyError);
  CHECK_THROWS_AS(latency_bound(line_graph(3), -1, 1), ConfigurationError);
  CHECK_THROWS_AS(latency_bound(line_graph(3), 0, 0), ConfigurationError);
}

TEST_CASE("classify") {
  const auto line = classify(line_graph(5));
  CHECK(line.acyclic_undirected);
  CHECK(line.strongly_connected);
  CHECK(line.diameter == 4);

  const auto tri = classify(complete_graph(3));
  CHECK_FALSE(tri.acyclic_undirected);
  CHECK(tri.strongly_connected);

  const auto pairs = classify(undirected_graph(4, {{0, 1}, {2, 3}}));
  CHECK_FALSE(pairs.strongly_connected);
  CHECK(pairs.diameter == -1);

  // a one-way path is acyclic as an undirected graph but not strongly connected
  const auto oneway = classify(GraphSchedule::make_static(3, {{0, 1}, {1, 2}}));
  CHECK(oneway.acyclic_undirected);
  CHECK_FALSE(oneway.strongly_connected);

  const auto periodic = GraphSchedule::make_periodic(2, {{{0, 1}}, {{1, 0}}});
  CHECK_THROWS_AS(classify(periodic), ConfigurationError);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(GraphSchedule::make_static(3, {{0, 0}}), ArgumentError);
  CHECK_THROWS_AS(GraphSchedule::make_static(3, {{0, 3}}), ArgumentError);
  CHECK_THROWS_AS(GraphSchedule::make_static(0, {}), ArgumentError);
  const auto g = GraphSchedule::make_periodic(3, {{{0, 1}}, {{1, 2}, {2, 0}}});
  CHECK(g.has_edge({0, 1}, 0));
  CHECK_FALSE(g.has_edge({0, 1}, 1));
  CHECK(g.has_edge({0, 1}, 4));
  CHECK(g.out_neighbors(1, 3) == ids({3}));
  CHECK(g.in_neighbors(0, 1) == ids({3}));
  CHECK(g.union_edges().size() == 3);
}

TEST_CASE("khop sets partition the reachable set") {
  Rng rng(11);
  for (int c = 0; c < 50; ++c) {
    const int n = static_cast<int>(uniform_int(rng, 1, 9));
    const auto g = n == 1 ? line_graph(1) : random_connected_schedule(n, rng);
    for (AgentId i = 0; i < n; ++i) {
      for (auto closure : {Closure::undirected, Closure::directed}) {
        std::set<AgentId> seen;
        std::size_t total = 0;
        for (int k = 0; k <= n; ++k) {
          const auto ring = khop_neighbors(g, i, k, 0, closure);
          total += ring.size();
          seen.insert(ring.begin(), ring.end());
        }
        CHECK(total == seen.size());  // disjoint
        const auto dist = hop_distances(g, i, 0, closure);
        std::size_t reachable = 0;
        for (int d : dist) reachable += d >= 0;
        CHECK(seen.size() == reachable);
      }
    }
  }
}

TEST_CASE("static latency equals diameter and trees have n-1 edges") {
  Rng rng(5);
  for (int c = 0; c < 40; ++c) {
    const int n = static_cast<int>(uniform_int(rng, 2, 12));
    const auto tree = random_tree(n, rng);
    const auto cls = classify(tree);
    CHECK(cls.acyclic_undirected);
    CHECK(tree.edges_at(0).size() == static_cast<std::size_t>(2 * (n - 1)));
    CHECK(latency_bound(tree, 0, 1) == cls.diameter);
  }
}

TEST_CASE("time-varying latency bound covers the slowest flood") {
  // 0->1 only on even ticks, 1->0 only on odd ticks: with T1 = 0, T2 = 1 a
  // message waits at most one tick for its edge and one tick in flight.
  const auto g = GraphSchedule::make_periodic(2, {{{0, 1}}, {{1, 0}}});
  CHECK(latency_bound(g, 0, 1) == 2);
  const auto never = GraphSchedule::make_periodic(2, {{{0, 1}}, {{0, 1}}});
  CHECK_THROWS_AS(latency_bound(never, 0, 1), TopologyError);
}

TEST_CASE("text format round trip") {
  std::istringstream in(
      "# five agents\n"
      "agents 3\n"
      "tick 0\n"
      "1 -> 2\n"
      "2 - 3\n"
      "tick 1\n"
      "3 1\n");
  const auto g = parse_graph_schedule(in);
  CHECK(g.n_agents() == 3);
  CHECK(g.period() == 2);
  CHECK(g.has_edge({0, 1}, 0));
  CHECK(g.has_edge({1, 2}, 0));
  CHECK(g.has_edge({2, 1}, 0));
  CHECK(g.has_edge({2, 0}, 1));
  std::ostringstream out;
  write_graph_schedule(out, g);
  std::istringstream back(out.str());
  const auto h = parse_graph_schedule(back);
  CHECK(h.period() == g.period());
  for (Tick t = 0; t < 2; ++t) CHECK(h.edges_at(t) == g.edges_at(t));

  std::istringstream bad("agents 2\nstatic\n1 3\n");
  CHECK_THROWS_AS(parse_graph_schedule(bad), ConfigurationError);
  std::istringstream empty("static\n1 2\n");
  CHECK_THROWS_AS(parse_graph_schedule(empty), ConfigurationError);
}
