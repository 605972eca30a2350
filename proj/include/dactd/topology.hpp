#pragma once

#include <compare>
#include <iosfwd>
#include <string>
#include <vector>

#include "dactd/common.hpp"

namespace dactd {

struct Edge {
  AgentId src = 0;
  AgentId dst = 0;
  auto operator<=>(const Edge&) const = default;
};

using EdgeSet = std::vector<Edge>;

/// Time-indexed directed communication graphs over agents 0..N-1.
///
/// A schedule is a finite sequence of edge sets repeated forever; a static
/// schedule is the one-element case. Edge sets are kept sorted and unique.
class GraphSchedule {
public:
  static GraphSchedule make_static(int n_agents, EdgeSet edges);
  static GraphSchedule make_periodic(int n_agents, std::vector<EdgeSet> period);

  int n_agents() const noexcept { return n_agents_; }
  bool is_static() const noexcept { return period_.size() == 1; }
  std::size_t period() const noexcept { return period_.size(); }

  const EdgeSet& edges_at(Tick t) const;
  bool has_edge(const Edge& e, Tick t) const;
  std::vector<AgentId> out_neighbors(AgentId i, Tick t) const;
  std::vector<AgentId> in_neighbors(AgentId i, Tick t) const;

  /// Edges active at any tick of the period.
  EdgeSet union_edges() const;

  void check_agent(AgentId i) const;

private:
  GraphSchedule(int n_agents, std::vector<EdgeSet> period);

  int n_agents_;
  std::vector<EdgeSet> period_;
};

/// Bidirectional path 0-1-...-(n-1).
GraphSchedule line_graph(int n);
GraphSchedule complete_graph(int n);
/// Bidirectional star with `center` joined to every other agent.
GraphSchedule star_graph(int n, AgentId center = 0);
/// Both directions of every listed pair.
GraphSchedule undirected_graph(int n, const std::vector<std::pair<AgentId, AgentId>>& pairs);

enum class Closure { undirected, directed };

/// Shortest-path hop counts from `i` at tick t; -1 marks unreachable agents.
std::vector<int> hop_distances(const GraphSchedule& g, AgentId i, Tick t,
                               Closure closure = Closure::undirected);

/// Agents at exact distance k from i (k = 0 gives {i}), ascending.
std::vector<AgentId> khop_neighbors(const GraphSchedule& g, AgentId i, int k, Tick t = 0,
                                    Closure closure = Closure::undirected);

/// Agents at distance <= k from i, ascending.
std::vector<AgentId> within_hops(const GraphSchedule& g, AgentId i, int k, Tick t = 0,
                                 Closure closure = Closure::undirected);

struct GraphClass {
  bool acyclic_undirected = false;
  bool strongly_connected = false;
  /// Directed diameter; -1 when not strongly connected.
  int diameter = -1;
};

/// Throws ConfigurationError on time-varying schedules.
GraphClass classify(const GraphSchedule& g);

/// Worst-case ticks for a TD error to reach every agent under the channel
/// guarantee (T1, T2).
///
/// Static schedules give k*(T1+T2) with k the directed diameter. Periodic
/// schedules are bounded by a worst-case temporal flooding search in which
/// each hop waits for the (T1+1)-th active tick of its edge and then the
/// full delay T2. A single agent reports 1, the smallest usable delay.
int latency_bound(const GraphSchedule& g, int T1, int T2);

/// Parses the text schedule format:
///
///     agents 5
///     static            # or: tick 0, tick 1, ... for a periodic schedule
///     1 2               # directed edge, agents numbered from 1
///     2 - 3             # both directions
GraphSchedule parse_graph_schedule(std::istream& in);
GraphSchedule load_graph_schedule(const std::string& path);
void write_graph_schedule(std::ostream& out, const GraphSchedule& g);

}  // namespace dactd
