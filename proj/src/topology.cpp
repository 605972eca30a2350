#include "dactd/topology.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

namespace dactd {

namespace {

EdgeSet normalized(EdgeSet edges, int n) {
  for (const auto& e : edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
      throw ArgumentError("edge endpoint outside agent range");
    if (e.src == e.dst) throw ArgumentError("self-loop on agent " + std::to_string(e.src));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

std::size_t phase_of(Tick t, std::size_t period) {
  const auto p = static_cast<Tick>(period);
  return static_cast<std::size_t>(((t % p) + p) % p);
}

std::vector<std::vector<AgentId>> adjacency(const EdgeSet& edges, int n, Closure closure) {
  std::vector<std::vector<AgentId>> adj(n);
  for (const auto& e : edges) {
    adj[e.src].push_back(e.dst);
    if (closure == Closure::undirected) adj[e.dst].push_back(e.src);
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

std::vector<int> bfs(const std::vector<std::vector<AgentId>>& adj, AgentId src) {
  std::vector<int> dist(adj.size(), -1);
  std::deque<AgentId> queue{src};
  dist[src] = 0;
  while (!queue.empty()) {
    const AgentId u = queue.front();
    queue.pop_front();
    for (AgentId v : adj[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

// Tick of the m-th (1-based) activation of `active_phases` at or after `from`.
Tick nth_active_tick(const std::vector<std::size_t>& active_phases, std::size_t period, Tick from,
                     int m) {
  Tick t = from;
  int seen = 0;
  for (;;) {
    const auto ph = phase_of(t, period);
    if (std::binary_search(active_phases.begin(), active_phases.end(), ph) && ++seen == m)
      return t;
    ++t;
  }
}

}  // namespace

GraphSchedule::GraphSchedule(int n_agents, std::vector<EdgeSet> period)
    : n_agents_(n_agents), period_(std::move(period)) {}

GraphSchedule GraphSchedule::make_static(int n_agents, EdgeSet edges) {
  return make_periodic(n_agents, {std::move(edges)});
}

GraphSchedule GraphSchedule::make_periodic(int n_agents, std::vector<EdgeSet> period) {
  if (n_agents <= 0) throw ArgumentError("graph needs at least one agent");
  if (period.empty()) throw ArgumentError("graph schedule needs at least one edge set");
  for (auto& edges : period) edges = normalized(std::move(edges), n_agents);
  return GraphSchedule(n_agents, std::move(period));
}

const EdgeSet& GraphSchedule::edges_at(Tick t) const { return period_[phase_of(t, period_.size())]; }

bool GraphSchedule::has_edge(const Edge& e, Tick t) const {
  const auto& edges = edges_at(t);
  return std::binary_search(edges.begin(), edges.end(), e);
}

void GraphSchedule::check_agent(AgentId i) const {
  if (i < 0 || i >= n_agents_)
    throw ArgumentError("agent id " + std::to_string(i) + " outside [0, " +
                        std::to_string(n_agents_) + ")");
}

std::vector<AgentId> GraphSchedule::out_neighbors(AgentId i, Tick t) const {
  check_agent(i);
  std::vector<AgentId> out;
  for (const auto& e : edges_at(t))
    if (e.src == i) out.push_back(e.dst);
  return out;
}

std::vector<AgentId> GraphSchedule::in_neighbors(AgentId i, Tick t) const {
  check_agent(i);
  std::vector<AgentId> in;
  for (const auto& e : edges_at(t))
    if (e.dst == i) in.push_back(e.src);
  std::sort(in.begin(), in.end());
  return in;
}

EdgeSet GraphSchedule::union_edges() const {
  EdgeSet all;
  for (const auto& edges : period_) all.insert(all.end(), edges.begin(), edges.end());
  return normalized(std::move(all), n_agents_);
}

GraphSchedule line_graph(int n) {
  std::vector<std::pair<AgentId, AgentId>> pairs;
  for (int i = 0; i + 1 < n; ++i) pairs.emplace_back(i, i + 1);
  return undirected_graph(n, pairs);
}

GraphSchedule complete_graph(int n) {
  EdgeSet edges;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) edges.push_back({i, j});
  return GraphSchedule::make_static(n, std::move(edges));
}

GraphSchedule star_graph(int n, AgentId center) {
  std::vector<std::pair<AgentId, AgentId>> pairs;
  for (int i = 0; i < n; ++i)
    if (i != center) pairs.emplace_back(center, i);
  return undirected_graph(n, pairs);
}

GraphSchedule undirected_graph(int n, const std::vector<std::pair<AgentId, AgentId>>& pairs) {
  EdgeSet edges;
  for (auto [a, b] : pairs) {
    edges.push_back({a, b});
    edges.push_back({b, a});
  }
  return GraphSchedule::make_static(n, std::move(edges));
}

std::vector<int> hop_distances(const GraphSchedule& g, AgentId i, Tick t, Closure closure) {
  g.check_agent(i);
  return bfs(adjacency(g.edges_at(t), g.n_agents(), closure), i);
}

std::vector<AgentId> khop_neighbors(const GraphSchedule& g, AgentId i, int k, Tick t,
                                    Closure closure) {
  if (k < 0) throw ArgumentError("hop count must be non-negative");
  const auto dist = hop_distances(g, i, t, closure);
  std::vector<AgentId> out;
  for (AgentId j = 0; j < g.n_agents(); ++j)
    if (dist[j] == k) out.push_back(j);
  return out;
}

std::vector<AgentId> within_hops(const GraphSchedule& g, AgentId i, int k, Tick t,
                                 Closure closure) {
  if (k < 0) throw ArgumentError("hop count must be non-negative");
  const auto dist = hop_distances(g, i, t, closure);
  std::vector<AgentId> out;
  for (AgentId j = 0; j < g.n_agents(); ++j)
    if (dist[j] >= 0 && dist[j] <= k) out.push_back(j);
  return out;
}

GraphClass classify(const GraphSchedule& g) {
  if (!g.is_static())
    throw ConfigurationError("acyclicity is only defined for static graph schedules");
  const int n = g.n_agents();
  GraphClass out;

  // Undirected closure is a forest iff union-find never joins a component to itself.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  out.acyclic_undirected = true;
  for (const auto& e : g.edges_at(0)) {
    if (e.src > e.dst && g.has_edge({e.dst, e.src}, 0)) continue;  // counted once
    const int a = find(e.src);
    const int b = find(e.dst);
    if (a == b) {
      out.acyclic_undirected = false;
      break;
    }
    parent[a] = b;
  }

  const auto adj = adjacency(g.edges_at(0), n, Closure::directed);
  out.strongly_connected = true;
  int diameter = 0;
  for (AgentId i = 0; i < n && out.strongly_connected; ++i) {
    for (int d : bfs(adj, i)) {
      if (d < 0) {
        out.strongly_connected = false;
        break;
      }
      diameter = std::max(diameter, d);
    }
  }
  out.diameter = out.strongly_connected ? diameter : -1;
  return out;
}

int latency_bound(const GraphSchedule& g, int T1, int T2) {
  if (T1 < 0) throw ConfigurationError("T1 must be non-negative");
  if (T2 < 1) throw ConfigurationError("T2 must be positive");
  if (g.n_agents() == 1) return 1;

  if (g.is_static()) {
    const auto cls = classify(g);
    if (!cls.strongly_connected)
      throw TopologyError("graph is not strongly connected; latency is unbounded");
    return std::max(1, cls.diameter * (T1 + T2));
  }

  const int n = g.n_agents();
  const std::size_t period = g.period();
  const EdgeSet edges = g.union_edges();
  std::vector<std::vector<std::size_t>> phases(edges.size());
  for (std::size_t p = 0; p < period; ++p)
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (g.has_edge(edges[e], static_cast<Tick>(p))) phases[e].push_back(p);

  constexpr Tick kInf = std::numeric_limits<Tick>::max();
  Tick worst = 0;
  for (std::size_t start = 0; start < period; ++start) {
    for (AgentId src = 0; src < n; ++src) {
      // Earliest tick at which each agent can forward the source's TD error,
      // assuming the adversary drops and delays as much as the channel allows.
      std::vector<Tick> ready(n, kInf);
      using Item = std::pair<Tick, AgentId>;
      std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
      ready[src] = static_cast<Tick>(start);
      queue.push({ready[src], src});
      while (!queue.empty()) {
        auto [at, u] = queue.top();
        queue.pop();
        if (at != ready[u]) continue;
        for (std::size_t e = 0; e < edges.size(); ++e) {
          if (edges[e].src != u) continue;
          const Tick sent = nth_active_tick(phases[e], period, at, T1 + 1);
          const Tick arrival = sent + T2;
          if (arrival < ready[edges[e].dst]) {
            ready[edges[e].dst] = arrival;
            queue.push({arrival, edges[e].dst});
          }
        }
      }
      for (Tick r : ready) {
        if (r == kInf) throw TopologyError("schedule is not jointly strongly connected");
        worst = std::max(worst, r - static_cast<Tick>(start));
      }
    }
  }
  return static_cast<int>(std::max<Tick>(1, worst));
}

GraphSchedule parse_graph_schedule(std::istream& in) {
  int n = 0;
  bool is_static = false;
  std::vector<EdgeSet> period;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigurationError("graph schedule line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    std::string first;
    if (!(words >> first)) continue;
    if (first == "agents") {
      if (!(words >> n) || n <= 0) fail("expected a positive agent count");
    } else if (first == "static") {
      if (!period.empty()) fail("'static' must precede all edges");
      is_static = true;
      period.emplace_back();
    } else if (first == "tick") {
      std::size_t idx = 0;
      if (is_static) fail("'tick' sections cannot follow 'static'");
      if (!(words >> idx) || idx != period.size()) fail("tick sections must be numbered 0, 1, ...");
      period.emplace_back();
    } else {
      if (n <= 0) fail("'agents' must come first");
      if (period.empty()) fail("edge before 'static' or 'tick'");
      std::vector<std::string> toks{first};
      for (std::string w; words >> w;) toks.push_back(w);
      bool both = false;
      if (toks.size() == 3 && (toks[1] == "-" || toks[1] == "->")) {
        both = toks[1] == "-";
        toks.erase(toks.begin() + 1);
      }
      if (toks.size() != 2) fail("expected 'src dst', 'src -> dst' or 'a - b'");
      int a = 0;
      int b = 0;
      try {
        a = std::stoi(toks[0]);
        b = std::stoi(toks[1]);
      } catch (const std::exception&) {
        fail("agent ids must be integers");
      }
      if (a < 1 || a > n || b < 1 || b > n) fail("agent id outside 1.." + std::to_string(n));
      if (a == b) fail("self-loops are not allowed");
      period.back().push_back({a - 1, b - 1});
      if (both) period.back().push_back({b - 1, a - 1});
    }
  }
  if (n <= 0) throw ConfigurationError("graph schedule missing 'agents'");
  if (period.empty()) throw ConfigurationError("graph schedule has no 'static' or 'tick' section");
  return GraphSchedule::make_periodic(n, std::move(period));
}

GraphSchedule load_graph_schedule(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open graph schedule '" + path + "'");
  return parse_graph_schedule(in);
}

void write_graph_schedule(std::ostream& out, const GraphSchedule& g) {
  out << "agents " << g.n_agents() << '\n';
  for (std::size_t p = 0; p < g.period(); ++p) {
    if (g.is_static())
      out << "static\n";
    else
      out << "tick " << p << '\n';
    for (const auto& e : g.edges_at(static_cast<Tick>(p))) out << e.src + 1 << ' ' << e.dst + 1 << '\n';
  }
}

}  // namespace dactd
