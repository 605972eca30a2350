#pragma once

#include <Eigen/Dense>

#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dactd/common.hpp"
#include "dactd/envs.hpp"
#include "dactd/funcapprox.hpp"
#include "dactd/protocol.hpp"
#include "dactd/topology.hpp"
#include "dactd/transport.hpp"

namespace dactd {

struct StepSchedule {
  enum class Kind { constant, polynomial };
  Kind kind = Kind::constant;
  double base = 0.01;
  double exponent = 0.0;

  static StepSchedule constant(double value) { return {Kind::constant, value, 0.0}; }
  static StepSchedule polynomial(double base, double exponent) {
    return {Kind::polynomial, base, exponent};
  }

  /// Step size for tick t >= 0.
  double at(Tick t) const;
  void validate() const;
  std::string describe() const;
};

/// True when actor/critic is non-increasing from `burn_in` to `horizon`
/// (sampled geometrically) and falls below `ratio_tol` by the horizon.
bool ratio_vanishes(const StepSchedule& actor, const StepSchedule& critic, Tick burn_in = 100,
                    Tick horizon = 100'000'000, double ratio_tol = 0.1);

/// Per-coordinate constraint box for the actor parameters.
struct ParamBox {
  double lower = -10.0;
  double upper = 10.0;

  void validate() const;
  void project(Eigen::VectorXd& theta) const { theta = theta.cwiseMax(lower).cwiseMin(upper); }
};

/// State-value approximator over one agent's local state.
class Critic {
public:
  explicit Critic(LinearCritic<double> c) : impl_(std::move(c)) {}
  explicit Critic(MlpCritic<double> c) : impl_(std::move(c)) {}

  double value(int s) const;
  Eigen::VectorXd grad(int s) const;
  Eigen::VectorXd values(std::span<const int> states) const;
  /// sum_k w_k grad V(states_k).
  Eigen::VectorXd weighted_grad(std::span<const int> states, const Eigen::VectorXd& w) const;
  Eigen::VectorXd& params();
  const Eigen::VectorXd& params() const;
  Checkpoint checkpoint() const;

private:
  std::variant<LinearCritic<double>, MlpCritic<double>> impl_;
};

/// Score vectors of the last K+1 ticks, keyed by tick.
class EtaHistory {
public:
  explicit EtaHistory(int K = 0) : K_(K) {}
  void push(Tick t, Eigen::MatrixXd eta);  // columns: one score per lane
  const Eigen::MatrixXd* find(Tick t) const;
  std::size_t size() const noexcept { return buf_.size(); }
  int latency() const noexcept { return K_; }

private:
  int K_;
  std::deque<std::pair<Tick, Eigen::MatrixXd>> buf_;  // front = newest
};

struct AgentState {
  AgentId id = 0;
  SoftmaxPolicy<double> actor;
  Critic critic;
  EtaHistory etas;
  ParamBox box;
};

/// r + gamma V(s') - V(s). Throws NumericError on non-finite input.
double local_td_error(double r, double v_next, double v_now, double gamma);
double local_td_error(const Critic& critic, int s, double r, int s_next, double gamma);

/// v += beta * delta * grad. Throws NumericError on non-finite delta or grad.
void critic_update(Critic& critic, double delta, const Eigen::VectorXd& grad, double beta);

/// Full-batch regression of V(states) onto r + gamma V(next): `epochs` plain
/// gradient steps on the mean squared error with targets refreshed every
/// `refresh` epochs.
void train_critic_batch(Critic& critic, std::span<const int> states, std::span<const double> rewards,
                        std::span<const int> next_states, double gamma, int epochs, int refresh,
                        double lr);

/// theta <- clamp(theta + alpha * delta_k * eta_k) for each lane k in order,
/// with eta taken from the agent's history at `origin`. Returns false (and
/// leaves theta alone) when that origin is not stored.
bool actor_update(AgentState& agent, Tick origin, const Eigen::VectorXd& team_delta, double alpha);

/// Mean of the local TD errors over each agent's k-hop neighbourhood
/// (distance at most k, undirected), released after `delay` ticks.
class NeighborhoodAggregation : public TeamAggregator {
public:
  NeighborhoodAggregation(const GraphSchedule& graph, int hops, int delay);
  int delay() const override { return delay_; }
  std::optional<Eigen::MatrixXd> exchange(Tick t, const Eigen::MatrixXd& local) override;
  const std::vector<AgentId>& members(AgentId i) const { return members_.at(i); }

private:
  std::vector<std::vector<AgentId>> members_;
  int delay_;
  std::deque<Eigen::MatrixXd> buffer_;
};

enum class ProtocolKind { alg1, alg2, centralized };
enum class AlgorithmKind { dac_td, independent_ac, khop_sac };
enum class Regime { step, episode };
enum class Approximator { mlp, tabular };

struct AlgorithmSpec {
  AlgorithmKind kind = AlgorithmKind::dac_td;
  int hops = 0;

  std::string label() const;
  static AlgorithmSpec parse(const std::string& text);
  friend bool operator==(const AlgorithmSpec&, const AlgorithmSpec&) = default;
};

std::string to_string(ProtocolKind p);
std::string to_string(Regime r);
std::string to_string(Approximator a);

struct RunConfig {
  int n_agents = 5;
  double gamma = 0.9;
  GraphSchedule graph = line_graph(5);
  ChannelModel channel{};
  ProtocolKind protocol = ProtocolKind::alg1;
  AlgorithmSpec algorithm{};
  Regime regime = Regime::episode;
  Approximator approximator = Approximator::mlp;
  StepSchedule actor_step = StepSchedule::constant(0.01);
  StepSchedule critic_step = StepSchedule::constant(0.1);
  int episodes = 1000;
  int steps_per_episode = 100;
  int critic_epochs = 25;
  int target_refresh = 5;
  std::vector<int> actor_hidden{10, 10};
  std::vector<int> critic_hidden{5, 5};
  double leaky_slope = 0.3;
  ParamBox box{};
  std::uint64_t seed = 0;
  bool record_updates = false;

  /// Throws ConfigurationError on inconsistent settings.
  void validate() const;
};

struct EpisodeRecord {
  int episode = 0;
  double team_return = 0.0;
  std::vector<double> agent_returns;
  bool protocol_complete = false;
};

struct UpdateRecord {
  Tick tick = 0;
  AgentId agent = 0;
  Tick origin = 0;
  double team_delta = 0.0;  // first lane
};

struct RunMetrics {
  std::string algorithm;
  std::uint64_t seed = 0;
  int latency = 0;
  std::size_t max_payload_values = 0;
  std::vector<EpisodeRecord> episodes;
  std::vector<UpdateRecord> updates;
  std::vector<Eigen::VectorXd> final_actor_params;
  std::vector<Eigen::VectorXd> final_critic_params;

  /// Mean team return over the last `window` episodes (all if fewer).
  double final_mean(int window = 100) const;
};

/// Latency the configured algorithm waits before using a TD error.
int algorithm_delay(const RunConfig& config);

/// Builds the aggregator the configured algorithm uses.
std::unique_ptr<TeamAggregator> make_aggregator(const RunConfig& config, int width);

/// DAC-TD with the configured protocol.
RunMetrics run_dac_td(const RunConfig& config);
/// Independent AC or k-hop SAC (config.algorithm is overridden by `kind`).
RunMetrics run_baseline(const RunConfig& config, AlgorithmSpec kind);
/// Dispatches on config.algorithm.
RunMetrics run(const RunConfig& config);

/// episode,team_return,agent1_return..agentN_return,protocol_complete
void write_metrics_csv(std::ostream& out, const RunMetrics& metrics);

}  // namespace dactd
