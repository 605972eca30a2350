#pragma once

#include <Eigen/Dense>

#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "dactd/common.hpp"
#include "dactd/topology.hpp"
#include "dactd/transport.hpp"

namespace dactd {

/// Local TD errors of all agents for one origin tick, as learned by one agent.
///
/// Each slot holds a block of `width` reals (width 1 when one protocol tick
/// is one environment step; one entry per step when a tick is an episode).
/// Slots are either known or unknown, and a known slot is write-once.
class TdVector {
public:
  TdVector() = default;
  TdVector(int n_agents, int width, Tick origin);

  int size() const noexcept { return static_cast<int>(known_.size()); }
  int width() const noexcept { return static_cast<int>(values_.rows()); }
  Tick origin_tick() const noexcept { return origin_; }

  bool known(AgentId j) const { return known_.at(j) != 0; }
  bool complete() const;
  int known_count() const;
  auto value(AgentId j) const { return values_.col(j); }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const std::vector<unsigned char>& known_flags() const noexcept { return known_; }

  /// Sets slot j; re-setting a known slot to a bitwise-different block throws
  /// ProtocolCorruptionError.
  void set(AgentId j, const Eigen::Ref<const Eigen::VectorXd>& block);

  /// Copies every slot known in `other` but unknown here. Returns the number
  /// of slots filled.
  int merge_from(const TdVector& other);

  friend bool operator==(const TdVector& a, const TdVector& b);

private:
  Tick origin_ = 0;
  Eigen::MatrixXd values_;  // width x N
  std::vector<unsigned char> known_;
};

bool bitwise_equal(const Eigen::Ref<const Eigen::VectorXd>& a,
                   const Eigen::Ref<const Eigen::VectorXd>& b);

/// Vector with only the owner's slot known.
TdVector init_td_vector(AgentId i, double delta, Tick t, int n_agents);
TdVector init_td_vector(AgentId i, const Eigen::Ref<const Eigen::VectorXd>& delta, Tick t,
                        int n_agents);

/// One agent's window of TD vectors for origins current-K .. current.
class TdHistory {
public:
  TdHistory(AgentId owner, int n_agents, int K, int width = 1);

  AgentId owner() const noexcept { return owner_; }
  int latency() const noexcept { return K_; }
  Tick current_tick() const noexcept { return current_; }
  bool in_window(Tick origin) const noexcept { return origin <= current_ && origin >= current_ - K_; }

  /// Moves to tick current+1 and records the owner's own TD error for it.
  void advance(Tick t, const Eigen::Ref<const Eigen::VectorXd>& own_delta);

  const TdVector& at_origin(Tick origin) const;

  /// The vectors transmitted each tick: origins current .. current-K+1.
  std::vector<TdVector> outgoing() const;

  /// Fill-in from received vectors; each must lie inside the window.
  void merge(std::span<const TdVector> received);

  /// Mean over agents, summed in ascending agent order. Throws
  /// IncompleteAggregationError when a slot is still unknown.
  Eigen::VectorXd team_td(Tick origin) const;

private:
  TdVector& slot(Tick origin);

  AgentId owner_;
  int n_agents_;
  int K_;
  int width_;
  Tick current_ = -1;
  std::deque<TdVector> window_;  // front = newest origin
};

TdHistory merge(TdHistory hist, std::span<const TdVector> received);

/// Scalar convenience for width-1 histories.
double team_td(const TdHistory& hist, Tick origin);

/// Mean of all local TD errors, ascending agent order.
double centralized_team_td(std::span<const double> deltas);
/// Column-wise version: `deltas` is width x N.
Eigen::VectorXd centralized_team_td(const Eigen::Ref<const Eigen::MatrixXd>& deltas);

/// Per-agent state of the differential aggregation protocol for acyclic graphs.
///
/// Columns are indexed by age a: column a concerns the TD errors of origin
/// tick t-a. `partial.col(a)` sums the local TD errors of every agent within
/// a hops, `rho.col(a)` is the increment partial_t[a] - partial_{t-1}[a-1]
/// transmitted to the neighbors, and `z[j].col(a)` tracks the part of that
/// increment already contributed by neighbor j. Only `rho` (K columns) is
/// sent, so messages hold K reals per lane regardless of N.
struct AcyclicState {
  int K = 1;
  std::vector<AgentId> neighbors;       // ascending
  Eigen::MatrixXd partial;              // width x (K+1)
  Eigen::MatrixXd rho;                  // width x K
  std::vector<Eigen::MatrixXd> z;       // per neighbor, width x (K+1), tick t-1
  std::vector<Eigen::MatrixXd> z_prev;  // per neighbor, tick t-2

  int width() const noexcept { return static_cast<int>(partial.rows()); }
  /// Team TD error of origin t-K once t >= K.
  Eigen::VectorXd readout(int n_agents) const { return partial.col(K) / n_agents; }
};

AcyclicState make_acyclic_state(std::vector<AgentId> neighbors, int K, int width = 1);

/// One tick of the acyclic protocol. `received_rho` maps a neighbor to the
/// rho it sent on the previous tick; missing neighbors count as zero.
AcyclicState acyclic_step(AcyclicState st, const Eigen::Ref<const Eigen::VectorXd>& delta,
                          const std::map<AgentId, Eigen::MatrixXd>& received_rho);

/// Recorded run of the acyclic protocol, one entry per tick from tick 0.
struct AcyclicTrace {
  int K = 1;
  std::vector<std::vector<AgentId>> neighbors;
  std::vector<Eigen::MatrixXd> deltas;                     // per tick, width x N
  std::vector<std::vector<Eigen::MatrixXd>> partial;       // per tick, per agent
  std::vector<std::vector<std::vector<Eigen::MatrixXd>>> z;  // per tick, agent, neighbor
};

struct InvariantReport {
  bool holds = true;
  double worst_error = 0.0;
  std::size_t checks = 0;
};

/// Checks, for every agent i, origin tick and age tau in [1, K], that the
/// partial aggregate equals the sum over agents within tau hops and that
/// z^{ij} equals the sum over agents at exactly tau hops from i that are not
/// at tau-1 hops from j.
InvariantReport partial_sum_invariant(const AcyclicTrace& trace, const GraphSchedule& graph,
                                     double tol = 1e-9);

/// Source of team TD errors for the actor updates.
class TeamAggregator {
public:
  virtual ~TeamAggregator() = default;
  /// Ticks between observing a TD error and using it.
  virtual int delay() const = 0;
  /// Feeds the local TD errors of tick t (width x N, one column per agent)
  /// and returns each agent's aggregate for origin t - delay() when t >= delay().
  virtual std::optional<Eigen::MatrixXd> exchange(Tick t, const Eigen::MatrixXd& local) = 0;
  /// Reals carried by the largest message sent so far.
  virtual std::size_t max_payload_values() const { return 0; }
};

/// Reads every local TD error directly and releases the mean after `delay` ticks.
class CentralizedAggregation : public TeamAggregator {
public:
  CentralizedAggregation(int n_agents, int delay);
  int delay() const override { return delay_; }
  std::optional<Eigen::MatrixXd> exchange(Tick t, const Eigen::MatrixXd& local) override;

private:
  int n_agents_;
  int delay_;
  std::deque<Eigen::MatrixXd> buffer_;
};

using GeneralPayload = std::vector<TdVector>;

/// Vector fill-in aggregation over a latent, lossy, time-varying graph.
class GeneralAggregation : public TeamAggregator {
public:
  GeneralAggregation(const GraphSchedule& graph, ChannelModel channel, int K, int width = 1);

  int delay() const override { return K_; }
  std::optional<Eigen::MatrixXd> exchange(Tick t, const Eigen::MatrixXd& local) override;
  std::size_t max_payload_values() const override { return max_payload_; }

  const TdHistory& history(AgentId i) const { return histories_.at(i); }
  const Channel<GeneralPayload>& channel() const noexcept { return channel_; }
  /// Rows tick,agent,tau,slot,value,known (agents and slots from 1).
  void set_trace_csv(std::ostream* out);

private:
  void deliver(Tick t);

  const GraphSchedule* graph_;
  int K_;
  int width_;
  Tick next_tick_ = 0;
  Channel<GeneralPayload> channel_;
  std::vector<TdHistory> histories_;
  std::size_t max_payload_ = 0;
  std::ostream* trace_csv_ = nullptr;
};

/// Differential aggregation on a static undirected tree with unit delay.
class AcyclicAggregation : public TeamAggregator {
public:
  /// Throws ConfigurationError unless the graph is static, acyclic and
  /// connected and the channel is lossless with fixed unit delay.
  AcyclicAggregation(const GraphSchedule& graph, ChannelModel channel, int K, int width = 1);

  int delay() const override { return K_; }
  std::optional<Eigen::MatrixXd> exchange(Tick t, const Eigen::MatrixXd& local) override;
  std::size_t max_payload_values() const override { return max_payload_; }

  const AcyclicState& state(AgentId i) const { return states_.at(i); }
  const Channel<Eigen::MatrixXd>& channel() const noexcept { return channel_; }

  void record_trace(bool on) { recording_ = on; }
  const AcyclicTrace& trace() const noexcept { return trace_; }
  /// Rows tick,agent,tau,delta_hat,rho (agents from 1, tau from 1, lane 0).
  void set_trace_csv(std::ostream* out);

private:
  const GraphSchedule* graph_;
  int K_;
  int width_;
  Tick next_tick_ = 0;
  Channel<Eigen::MatrixXd> channel_;
  std::vector<AcyclicState> states_;
  std::size_t max_payload_ = 0;
  bool recording_ = false;
  AcyclicTrace trace_;
  std::ostream* trace_csv_ = nullptr;
};

/// Requires a unit-delay lossless channel; used to build AcyclicAggregation
/// channels from (seed) alone.
ChannelModel unit_delay_channel(std::uint64_t seed = 0);

}  // namespace dactd
