#include "dactd/envs.hpp"

#include <cmath>
#include <string>

#include "dactd/oracle.hpp"

namespace dactd {

ProductSpace::ProductSpace(std::vector<int> radices) : radices_(std::move(radices)) {
  for (int r : radices_) {
    if (r < 1) throw ArgumentError("empty local space");
    if (size_ > std::numeric_limits<std::int64_t>::max() / r)
      throw CapacityError("product space overflows");
    size_ *= r;
  }
}

std::int64_t ProductSpace::encode(std::span<const int> local) const {
  if (local.size() != radices_.size()) throw ArgumentError("wrong number of agents");
  std::int64_t index = 0;
  for (std::size_t k = radices_.size(); k-- > 0;) {
    if (local[k] < 0 || local[k] >= radices_[k]) throw ArgumentError("local index out of range");
    index = index * radices_[k] + local[k];
  }
  return index;
}

LocalIndices ProductSpace::decode(std::int64_t index) const {
  if (index < 0 || index >= size_) throw ArgumentError("global index out of range");
  LocalIndices local(radices_.size());
  for (std::size_t k = 0; k < radices_.size(); ++k) {
    local[k] = static_cast<int>(index % radices_[k]);
    index /= radices_[k];
  }
  return local;
}

ProductSpace Jommdp::state_space() const {
  std::vector<int> r(n_agents());
  for (int i = 0; i < n_agents(); ++i) r[i] = n_local_states(i);
  return ProductSpace(std::move(r));
}

ProductSpace Jommdp::action_space() const {
  std::vector<int> r(n_agents());
  for (int i = 0; i < n_agents(); ++i) r[i] = n_local_actions(i);
  return ProductSpace(std::move(r));
}

CoupledLineEnv::CoupledLineEnv(int n_agents, double gamma) : n_(n_agents), gamma_(gamma) {
  if (n_agents < 1) throw ConfigurationError("need at least one agent");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigurationError("gamma must lie in [0, 1)");
}

void CoupledLineEnv::check(std::span<const int> x, const char* what) const {
  if (static_cast<int>(x.size()) != n_)
    throw ArgumentError(std::string("malformed ") + what + ": expected " + std::to_string(n_) +
                        " entries");
  for (int v : x)
    if (v != 0 && v != 1) throw ArgumentError(std::string("malformed ") + what + ": entries must be 0 or 1");
}

double CoupledLineEnv::coupling(std::span<const int> s, std::span<const int> a) const {
  check(s, "state");
  check(a, "action");
  int total = 0;
  for (int i = 0; i < n_; ++i) total += s[i] + a[i];
  return static_cast<double>(total) / (2.0 * n_);
}

double CoupledLineEnv::transition_prob(std::span<const int> s, std::span<const int> a,
                                       std::span<const int> s_next) const {
  check(s_next, "next state");
  const double p = coupling(s, a);
  double prob = 1.0;
  for (int x : s_next) prob *= x ? p : 1.0 - p;
  return prob;
}

Eigen::VectorXd CoupledLineEnv::rewards(std::span<const int> s, std::span<const int> a,
                                        std::span<const int>) const {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n_);
  r[0] = coupling(s, a);
  return r;
}

StepResult CoupledLineEnv::step(std::span<const int> s, std::span<const int> a, Rng& rng) const {
  const double p = coupling(s, a);
  StepResult out{LocalIndices(n_), Eigen::VectorXd::Zero(n_)};
  for (int i = 0; i < n_; ++i) out.next[i] = uniform01(rng) < p ? 1 : 0;
  out.rewards[0] = p;
  return out;
}

PolicyTables uniform_policy(const Jommdp& env) {
  PolicyTables tables;
  for (int i = 0; i < env.n_agents(); ++i) {
    const int na = env.n_local_actions(i);
    tables.push_back(Eigen::MatrixXd::Constant(env.n_local_states(i), na, 1.0 / na));
  }
  return tables;
}

double joint_prob(const PolicyTables& policy, std::span<const int> s, std::span<const int> a) {
  double p = 1.0;
  for (std::size_t i = 0; i < policy.size(); ++i) p *= policy[i](s[i], a[i]);
  return p;
}

ExactModel enumerate_kernel(const Jommdp& env, const PolicyTables& policy, std::int64_t cap) {
  ExactModel m;
  m.gamma = env.gamma();
  m.states = env.state_space();
  m.actions = env.action_space();
  if (m.states.size() > cap)
    throw CapacityError("state space has " + std::to_string(m.states.size()) +
                        " global states, cap is " + std::to_string(cap));
  if (static_cast<int>(policy.size()) != env.n_agents())
    throw ArgumentError("policy must have one table per agent");
  for (int i = 0; i < env.n_agents(); ++i) {
    const auto& t = policy[i];
    if (t.rows() != env.n_local_states(i) || t.cols() != env.n_local_actions(i))
      throw ArgumentError("policy table " + std::to_string(i + 1) + " has the wrong shape");
    if ((t.array() < 0.0).any() || ((t.rowwise().sum().array() - 1.0).abs() > 1e-9).any())
      throw ArgumentError("policy table " + std::to_string(i + 1) + " is not row-stochastic");
  }

  const auto ns = static_cast<int>(m.states.size());
  const auto na = m.actions.size();
  const int n = env.n_agents();
  m.P = Eigen::MatrixXd::Zero(ns, ns);
  m.local_reward = Eigen::MatrixXd::Zero(ns, n);
  std::vector<LocalIndices> decoded(ns);
  for (int x = 0; x < ns; ++x) decoded[x] = m.states.decode(x);

  for (int x = 0; x < ns; ++x) {
    const auto& s = decoded[x];
    for (std::int64_t ai = 0; ai < na; ++ai) {
      const auto a = m.actions.decode(ai);
      const double pa = joint_prob(policy, s, a);
      if (pa == 0.0) continue;
      for (int y = 0; y < ns; ++y) {
        const double pt = env.transition_prob(s, a, decoded[y]);
        if (pt == 0.0) continue;
        m.P(x, y) += pa * pt;
        m.local_reward.row(x) += pa * pt * env.rewards(s, a, decoded[y]).transpose();
      }
    }
  }
  m.team_reward = m.local_reward.rowwise().mean();
  return m;
}

ExactModel enumerate(const Jommdp& env, const PolicyTables& policy, std::int64_t cap) {
  ExactModel m = enumerate_kernel(env, policy, cap);
  m.d = stationary_distribution(m.P);
  return m;
}

}  // namespace dactd
