#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "dactd/common.hpp"

namespace dactd {

/// Global states and joint actions are vectors of per-agent local indices.
using LocalIndices = std::vector<int>;

struct StepResult {
  LocalIndices next;
  Eigen::VectorXd rewards;  // one private reward per agent
};

/// Mixed-radix encoding of per-agent indices; agent 0 is the least
/// significant digit.
class ProductSpace {
public:
  ProductSpace() = default;
  explicit ProductSpace(std::vector<int> radices);

  int n_agents() const noexcept { return static_cast<int>(radices_.size()); }
  std::int64_t size() const noexcept { return size_; }
  int radix(AgentId i) const { return radices_.at(i); }

  std::int64_t encode(std::span<const int> local) const;
  LocalIndices decode(std::int64_t index) const;

private:
  std::vector<int> radices_;
  std::int64_t size_ = 1;
};

/// Jointly observable multi-agent MDP: the global state is the tuple of local
/// states and agent i observes only coordinate i.
class Jommdp {
public:
  virtual ~Jommdp() = default;

  virtual int n_agents() const = 0;
  virtual int n_local_states(AgentId i) const = 0;
  virtual int n_local_actions(AgentId i) const = 0;
  virtual double gamma() const = 0;
  virtual LocalIndices initial_state() const = 0;

  /// p(s' | s, a).
  virtual double transition_prob(std::span<const int> s, std::span<const int> a,
                                 std::span<const int> s_next) const = 0;
  /// Private rewards r^i(s, a, s').
  virtual Eigen::VectorXd rewards(std::span<const int> s, std::span<const int> a,
                                  std::span<const int> s_next) const = 0;
  virtual StepResult step(std::span<const int> s, std::span<const int> a, Rng& rng) const = 0;

  ProductSpace state_space() const;
  ProductSpace action_space() const;
};

/// Binary states and actions; every agent moves to 1 with probability
/// (1/2N) * sum_j (s^j + a^j), independently given (s, a). Agent 0 is paid
/// that same quantity and everyone else is paid nothing.
class CoupledLineEnv : public Jommdp {
public:
  explicit CoupledLineEnv(int n_agents = 5, double gamma = 0.9);

  int n_agents() const override { return n_; }
  int n_local_states(AgentId) const override { return 2; }
  int n_local_actions(AgentId) const override { return 2; }
  double gamma() const override { return gamma_; }
  LocalIndices initial_state() const override { return LocalIndices(n_, 0); }

  double coupling(std::span<const int> s, std::span<const int> a) const;

  double transition_prob(std::span<const int> s, std::span<const int> a,
                         std::span<const int> s_next) const override;
  Eigen::VectorXd rewards(std::span<const int> s, std::span<const int> a,
                          std::span<const int> s_next) const override;
  StepResult step(std::span<const int> s, std::span<const int> a, Rng& rng) const override;

private:
  void check(std::span<const int> x, const char* what) const;

  int n_;
  double gamma_;
};

/// Two-agent instance, small enough for exhaustive evaluation.
inline CoupledLineEnv micro_env(double gamma = 0.9) { return CoupledLineEnv(2, gamma); }

/// Per-agent policy tables: row = local state, column = local action.
using PolicyTables = std::vector<Eigen::MatrixXd>;

PolicyTables uniform_policy(const Jommdp& env);

/// Everything about the chain induced by a fixed joint policy.
struct ExactModel {
  double gamma = 0.9;
  ProductSpace states;
  ProductSpace actions;
  Eigen::MatrixXd P;             // P(s, s') = p_pi(s' | s)
  Eigen::VectorXd d;             // stationary distribution; empty if not computed
  Eigen::MatrixXd local_reward;  // column i: expected private reward of agent i
  Eigen::VectorXd team_reward;   // mean over agents

  int n_states() const { return static_cast<int>(P.rows()); }
  int n_agents() const { return static_cast<int>(local_reward.cols()); }
};

inline constexpr std::int64_t default_state_cap = 4096;

/// Transition matrix and expected rewards under the policy; d is left empty.
/// Throws CapacityError above `cap` global states.
ExactModel enumerate_kernel(const Jommdp& env, const PolicyTables& policy,
                            std::int64_t cap = default_state_cap);

/// As enumerate_kernel, plus the stationary distribution. Throws ModelError
/// when the induced chain is reducible.
ExactModel enumerate(const Jommdp& env, const PolicyTables& policy,
                     std::int64_t cap = default_state_cap);

/// pi(a | s) for a joint action under per-agent tables.
double joint_prob(const PolicyTables& policy, std::span<const int> s, std::span<const int> a);

}  // namespace dactd
