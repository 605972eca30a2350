#include "dactd/protocol.hpp"

#include <cstring>
#include <ostream>

namespace dactd {

// ---------------------------------------------------------------- TdVector

TdVector::TdVector(int n_agents, int width, Tick origin)
    : origin_(origin), values_(Eigen::MatrixXd::Zero(width, n_agents)), known_(n_agents, 0) {
  if (n_agents <= 0 || width <= 0) throw ArgumentError("TD vector needs positive size and width");
}

bool TdVector::complete() const {
  return std::all_of(known_.begin(), known_.end(), [](unsigned char k) { return k != 0; });
}

int TdVector::known_count() const {
  return static_cast<int>(std::count(known_.begin(), known_.end(), 1));
}

bool bitwise_equal(const Eigen::Ref<const Eigen::VectorXd>& a,
                   const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double x = a[k];
    const double y = b[k];
    if (std::memcmp(&x, &y, sizeof(double)) != 0) return false;
  }
  return true;
}

void TdVector::set(AgentId j, const Eigen::Ref<const Eigen::VectorXd>& block) {
  if (j < 0 || j >= size()) throw ArgumentError("TD vector slot out of range");
  if (block.size() != width()) throw ArgumentError("TD block width mismatch");
  if (known_[j]) {
    if (!bitwise_equal(values_.col(j), block))
      throw ProtocolCorruptionError("conflicting values for slot " + std::to_string(j) +
                                    " of origin tick " + std::to_string(origin_));
    return;
  }
  values_.col(j) = block;
  known_[j] = 1;
}

int TdVector::merge_from(const TdVector& other) {
  if (other.size() != size() || other.width() != width())
    throw ArgumentError("merging TD vectors of different shape");
  if (other.origin_ != origin_) throw ArgumentError("merging TD vectors of different origin ticks");
  int filled = 0;
  for (AgentId j = 0; j < size(); ++j) {
    if (!other.known_[j]) continue;
    if (!known_[j]) ++filled;
    set(j, other.values_.col(j));
  }
  return filled;
}

bool operator==(const TdVector& a, const TdVector& b) {
  if (a.origin_ != b.origin_ || a.known_ != b.known_ || a.width() != b.width()) return false;
  for (AgentId j = 0; j < a.size(); ++j)
    if (a.known_[j] && !bitwise_equal(a.values_.col(j), b.values_.col(j))) return false;
  return true;
}

TdVector init_td_vector(AgentId i, double delta, Tick t, int n_agents) {
  return init_td_vector(i, Eigen::VectorXd::Constant(1, delta), t, n_agents);
}

TdVector init_td_vector(AgentId i, const Eigen::Ref<const Eigen::VectorXd>& delta, Tick t,
                        int n_agents) {
  TdVector v(n_agents, static_cast<int>(delta.size()), t);
  v.set(i, delta);
  return v;
}

// --------------------------------------------------------------- TdHistory

TdHistory::TdHistory(AgentId owner, int n_agents, int K, int width)
    : owner_(owner), n_agents_(n_agents), K_(K), width_(width) {
  if (K < 1) throw ArgumentError("latency bound must be at least 1");
  if (owner < 0 || owner >= n_agents) throw ArgumentError("history owner out of range");
  for (int tau = 0; tau <= K; ++tau) window_.emplace_back(n_agents, width, current_ - tau);
}

void TdHistory::advance(Tick t, const Eigen::Ref<const Eigen::VectorXd>& own_delta) {
  if (t != current_ + 1) throw ArgumentError("history must advance one tick at a time");
  window_.push_front(init_td_vector(owner_, own_delta, t, n_agents_));
  window_.pop_back();
  current_ = t;
}

const TdVector& TdHistory::at_origin(Tick origin) const {
  if (!in_window(origin))
    throw ArgumentError("origin tick " + std::to_string(origin) + " outside the history window");
  return window_[static_cast<std::size_t>(current_ - origin)];
}

TdVector& TdHistory::slot(Tick origin) { return const_cast<TdVector&>(at_origin(origin)); }

std::vector<TdVector> TdHistory::outgoing() const {
  return {window_.begin(), window_.begin() + K_};
}

void TdHistory::merge(std::span<const TdVector> received) {
  for (const auto& v : received) slot(v.origin_tick()).merge_from(v);
}

Eigen::VectorXd TdHistory::team_td(Tick origin) const {
  const auto& v = at_origin(origin);
  if (!v.complete())
    throw IncompleteAggregationError(
        "agent " + std::to_string(owner_) + " knows only " + std::to_string(v.known_count()) +
            "/" + std::to_string(n_agents_) + " TD errors of tick " + std::to_string(origin),
        origin);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(width_);
  for (AgentId j = 0; j < n_agents_; ++j) sum += v.value(j);
  return sum / static_cast<double>(n_agents_);
}

TdHistory merge(TdHistory hist, std::span<const TdVector> received) {
  hist.merge(received);
  return hist;
}

double team_td(const TdHistory& hist, Tick origin) { return hist.team_td(origin)[0]; }

double centralized_team_td(std::span<const double> deltas) {
  if (deltas.empty()) throw ArgumentError("team TD error of zero agents");
  double sum = 0.0;
  for (double d : deltas) sum += d;
  return sum / static_cast<double>(deltas.size());
}

Eigen::VectorXd centralized_team_td(const Eigen::Ref<const Eigen::MatrixXd>& deltas) {
  if (deltas.cols() == 0) throw ArgumentError("team TD error of zero agents");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(deltas.rows());
  for (Eigen::Index j = 0; j < deltas.cols(); ++j) sum += deltas.col(j);
  return sum / static_cast<double>(deltas.cols());
}

// ------------------------------------------------------------ AcyclicState

AcyclicState make_acyclic_state(std::vector<AgentId> neighbors, int K, int width) {
  if (K < 1) throw ArgumentError("latency bound must be at least 1");
  std::sort(neighbors.begin(), neighbors.end());
  AcyclicState st;
  st.K = K;
  st.neighbors = std::move(neighbors);
  st.partial = Eigen::MatrixXd::Zero(width, K + 1);
  st.rho = Eigen::MatrixXd::Zero(width, K);
  st.z.assign(st.neighbors.size(), Eigen::MatrixXd::Zero(width, K + 1));
  st.z_prev = st.z;
  return st;
}

AcyclicState acyclic_step(AcyclicState st, const Eigen::Ref<const Eigen::VectorXd>& delta,
                          const std::map<AgentId, Eigen::MatrixXd>& received_rho) {
  const int K = st.K;
  const Eigen::Index width = st.width();
  if (delta.size() != width) throw ArgumentError("TD block width mismatch");
  for (const auto& [j, r] : received_rho) {
    if (!std::binary_search(st.neighbors.begin(), st.neighbors.end(), j))
      throw ArgumentError("rho received from non-neighbor " + std::to_string(j));
    if (r.rows() != width || r.cols() != K) throw ArgumentError("rho payload has wrong shape");
  }
  const Eigen::MatrixXd zero_rho = Eigen::MatrixXd::Zero(width, K);
  std::vector<const Eigen::MatrixXd*> rho_in;
  for (AgentId j : st.neighbors) {
    auto it = received_rho.find(j);
    rho_in.push_back(it == received_rho.end() ? &zero_rho : &it->second);
  }

  Eigen::MatrixXd partial(width, K + 1);
  Eigen::MatrixXd rho(width, K);
  std::vector<Eigen::MatrixXd> z(st.neighbors.size(), Eigen::MatrixXd(width, K + 1));
  partial.col(0) = delta;
  rho.col(0) = delta;
  for (auto& zj : z) zj.col(0) = delta;

  for (int a = 1; a <= K; ++a) {
    Eigen::VectorXd inflow = Eigen::VectorXd::Zero(width);
    for (std::size_t n = 0; n < st.neighbors.size(); ++n) {
      inflow += rho_in[n]->col(a - 1);
      if (a >= 2) inflow -= st.z_prev[n].col(a - 2);
    }
    partial.col(a) = st.partial.col(a - 1) + inflow;
    const Eigen::VectorXd increment = partial.col(a) - st.partial.col(a - 1);
    if (a < K) rho.col(a) = increment;
    for (std::size_t n = 0; n < st.neighbors.size(); ++n) {
      z[n].col(a) = increment - rho_in[n]->col(a - 1);
      if (a >= 2) z[n].col(a) += st.z_prev[n].col(a - 2);
    }
  }

  st.partial = std::move(partial);
  st.rho = std::move(rho);
  st.z_prev = std::move(st.z);
  st.z = std::move(z);
  return st;
}

InvariantReport partial_sum_invariant(const AcyclicTrace& trace, const GraphSchedule& graph,
                                     double tol) {
  InvariantReport report;
  const int n = graph.n_agents();
  const int K = trace.K;
  std::vector<std::vector<int>> dist(n);
  for (AgentId i = 0; i < n; ++i) dist[i] = hop_distances(graph, i, 0, Closure::undirected);

  auto note = [&](const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
    const double err = (got - want).cwiseAbs().maxCoeff();
    report.worst_error = std::max(report.worst_error, err);
    if (!(err <= tol)) report.holds = false;
    ++report.checks;
  };

  for (std::size_t t = 0; t < trace.partial.size(); ++t) {
    for (AgentId i = 0; i < n; ++i) {
      for (int a = 1; a <= K; ++a) {
        const auto origin = static_cast<Tick>(t) - a;
        if (origin < 0) continue;
        const Eigen::MatrixXd& deltas = trace.deltas[static_cast<std::size_t>(origin)];
        Eigen::VectorXd within = Eigen::VectorXd::Zero(deltas.rows());
        for (AgentId l = 0; l < n; ++l)
          if (dist[i][l] >= 0 && dist[i][l] <= a) within += deltas.col(l);
        note(trace.partial[t][i].col(a), within);

        for (std::size_t nb = 0; nb < trace.neighbors[i].size(); ++nb) {
          const AgentId j = trace.neighbors[i][nb];
          Eigen::VectorXd fresh = Eigen::VectorXd::Zero(deltas.rows());
          for (AgentId l = 0; l < n; ++l)
            if (dist[i][l] == a && dist[j][l] != a - 1) fresh += deltas.col(l);
          note(trace.z[t][i][nb].col(a), fresh);
        }
      }
    }
  }
  return report;
}

// ------------------------------------------------------------- aggregators

CentralizedAggregation::CentralizedAggregation(int n_agents, int delay)
    : n_agents_(n_agents), delay_(delay) {
  if (n_agents <= 0) throw ArgumentError("aggregation needs at least one agent");
  if (delay < 0) throw ArgumentError("delay must be non-negative");
}

std::optional<Eigen::MatrixXd> CentralizedAggregation::exchange(Tick t, const Eigen::MatrixXd& local) {
  if (local.cols() != n_agents_) throw ArgumentError("expected one TD column per agent");
  buffer_.push_back(local);
  if (t < delay_) return std::nullopt;
  const Eigen::VectorXd mean = centralized_team_td(buffer_.front());
  buffer_.pop_front();
  return mean.replicate(1, n_agents_).eval();
}

namespace {

std::uint64_t digest_general(const GeneralPayload& payload) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& v : payload) {
    const Tick o = v.origin_tick();
    h = fnv1a(&o, sizeof o, h);
    h = fnv1a(v.known_flags().data(), v.known_flags().size(), h);
    h = fnv1a(v.values().data(), sizeof(double) * static_cast<std::size_t>(v.values().size()), h);
  }
  return h;
}

std::uint64_t digest_matrix(const Eigen::MatrixXd& m) {
  return fnv1a(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void check_local(const Eigen::MatrixXd& local, int width, int n) {
  if (local.rows() != width || local.cols() != n)
    throw ArgumentError("local TD matrix must be width x N");
}

}  // namespace

GeneralAggregation::GeneralAggregation(const GraphSchedule& graph, ChannelModel channel, int K,
                                       int width)
    : graph_(&graph), K_(K), width_(width), channel_(std::move(channel), graph, digest_general) {
  for (AgentId i = 0; i < graph.n_agents(); ++i) histories_.emplace_back(i, graph.n_agents(), K, width);
}

void GeneralAggregation::set_trace_csv(std::ostream* out) {
  trace_csv_ = out;
  if (out) *out << "tick,agent,tau,slot,value,known\n";
}

void GeneralAggregation::deliver(Tick t) {
  for (auto& hist : histories_) {
    std::vector<TdVector> fresh;
    for (auto& msg : channel_.drain(hist.owner(), t))
      for (auto& v : msg.payload)
        if (hist.in_window(v.origin_tick())) fresh.push_back(std::move(v));
    hist.merge(fresh);
  }
}

std::optional<Eigen::MatrixXd> GeneralAggregation::exchange(Tick t, const Eigen::MatrixXd& local) {
  if (t != next_tick_) throw ArgumentError("aggregation ticks must be consecutive from 0");
  const int n = graph_->n_agents();
  check_local(local, width_, n);
  ++next_tick_;

  for (AgentId i = 0; i < n; ++i) histories_[i].advance(t, local.col(i));
  deliver(t);  // messages that waited in the medium
  for (AgentId i = 0; i < n; ++i) {
    GeneralPayload out = histories_[i].outgoing();
    max_payload_ = std::max(max_payload_, out.size() * static_cast<std::size_t>(n * width_));
    for (AgentId j : graph_->out_neighbors(i, t)) channel_.attempt_send({i, j}, out, t);
  }
  deliver(t);  // zero-delay deliveries of this tick

  if (trace_csv_) {
    for (const auto& hist : histories_)
      for (int tau = 0; tau <= K_; ++tau) {
        const auto& v = hist.at_origin(t - tau);
        for (AgentId j = 0; j < n; ++j)
          *trace_csv_ << t << ',' << hist.owner() + 1 << ',' << tau << ',' << j + 1 << ','
                      << v.value(j)[0] << ',' << int(v.known(j)) << '\n';
      }
  }

  if (t < K_) return std::nullopt;
  Eigen::MatrixXd team(width_, n);
  for (AgentId i = 0; i < n; ++i) team.col(i) = histories_[i].team_td(t - K_);
  return team;
}

ChannelModel unit_delay_channel(std::uint64_t seed) {
  ChannelModel ch;
  ch.T1 = 0;
  ch.T2 = 1;
  ch.drop_prob = 0.0;
  ch.delay_law = DelayLaw::fixed;
  ch.seed = seed;
  return ch;
}

AcyclicAggregation::AcyclicAggregation(const GraphSchedule& graph, ChannelModel channel, int K,
                                       int width)
    : graph_(&graph), K_(K), width_(width), channel_(channel, graph, digest_matrix) {
  if (!graph.is_static())
    throw ConfigurationError("acyclic aggregation needs a time-invariant graph");
  const auto cls = classify(graph);
  if (!cls.acyclic_undirected) throw ConfigurationError("acyclic aggregation needs an acyclic graph");
  for (const auto& e : graph.edges_at(0))
    if (!graph.has_edge({e.dst, e.src}, 0))
      throw ConfigurationError("acyclic aggregation needs bidirectional edges");
  if (graph.n_agents() > 1 && !cls.strongly_connected)
    throw ConfigurationError("acyclic aggregation needs a connected tree");
  if (channel.T1 != 0 || channel.T2 != 1 || channel.drop_prob != 0.0 ||
      channel.delay_law != DelayLaw::fixed || channel.adversary)
    throw ConfigurationError("acyclic aggregation needs a lossless channel with unit delay");
  if (K < std::max(1, cls.diameter))
    throw ConfigurationError("latency bound is smaller than the graph diameter");

  trace_.K = K;
  for (AgentId i = 0; i < graph.n_agents(); ++i) {
    states_.push_back(make_acyclic_state(graph.out_neighbors(i, 0), K, width));
    trace_.neighbors.push_back(states_.back().neighbors);
  }
}

void AcyclicAggregation::set_trace_csv(std::ostream* out) {
  trace_csv_ = out;
  if (out) *out << "tick,agent,tau,delta_hat,rho\n";
}

std::optional<Eigen::MatrixXd> AcyclicAggregation::exchange(Tick t, const Eigen::MatrixXd& local) {
  if (t != next_tick_) throw ArgumentError("aggregation ticks must be consecutive from 0");
  const int n = graph_->n_agents();
  check_local(local, width_, n);
  ++next_tick_;

  for (AgentId i = 0; i < n; ++i) {
    std::map<AgentId, Eigen::MatrixXd> received;
    for (auto& msg : channel_.drain(i, t)) received.emplace(msg.src, std::move(msg.payload));
    states_[i] = acyclic_step(std::move(states_[i]), local.col(i), received);
  }
  for (AgentId i = 0; i < n; ++i) {
    max_payload_ = std::max(max_payload_, static_cast<std::size_t>(states_[i].rho.size()));
    for (AgentId j : graph_->out_neighbors(i, t)) channel_.attempt_send({i, j}, states_[i].rho, t);
  }

  if (recording_) {
    trace_.deltas.push_back(local);
    auto& partial = trace_.partial.emplace_back();
    auto& z = trace_.z.emplace_back();
    for (const auto& st : states_) {
      partial.push_back(st.partial);
      z.push_back(st.z);
    }
  }
  if (trace_csv_) {
    for (AgentId i = 0; i < n; ++i)
      for (int tau = 1; tau <= K_; ++tau)
        *trace_csv_ << t << ',' << i + 1 << ',' << tau << ',' << states_[i].partial(0, tau) << ','
                    << (tau < K_ ? states_[i].rho(0, tau) : 0.0) << '\n';
  }

  if (t < K_) return std::nullopt;
  Eigen::MatrixXd team(width_, n);
  for (AgentId i = 0; i < n; ++i) team.col(i) = states_[i].readout(n);
  return team;
}

}  // namespace dactd
