#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

#include "dactd/envs.hpp"
#include "dactd/funcapprox.hpp"

namespace dactd {

/// Unique d with d P = d and sum(d) = 1. Throws ModelError for reducible
/// chains (unit eigenvalue of multiplicity above one).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P);

/// Row s = phi(s^i), the local features agent i sees in global state s.
Eigen::MatrixXd local_feature_matrix(const ExactModel& model, AgentId i,
                                     const FeatureMap<double>& features);

/// Solves Phi' D (gamma P - I) Phi v = -Phi' D R^i. Throws RankError when the
/// system is singular (Phi rank-deficient or d not positive).
Eigen::VectorXd critic_fixed_point(const ExactModel& model, AgentId i, const Eigen::MatrixXd& Phi);

/// Max-norm residual of the fixed-point equations at v.
double fixed_point_residual(const ExactModel& model, AgentId i, const Eigen::MatrixXd& Phi,
                            const Eigen::VectorXd& v);

/// V_pi^i = (I - gamma P)^{-1} R^i over global states.
Eigen::VectorXd true_values(const ExactModel& model, AgentId i);

/// Eigenvalues of D (gamma P - I).
Eigen::VectorXcd critic_ode_eigenvalues(const ExactModel& model);

/// Critic values per global state, one column per agent.
using CriticValues = Eigen::MatrixXd;

/// Columns V_pi^i.
CriticValues true_critic_values(const ExactModel& model);

/// Columns Phi^i v_pi^i for tabular features over each agent's local state.
CriticValues local_critic_values(const Jommdp& env, const ExactModel& model);

using Policies = std::vector<SoftmaxPolicy<double>>;

PolicyTables policy_tables(const Policies& policies);

/// E_{d, pi, P}[delta * grad log pi^i] per agent, where delta is the team mean
/// of r^i + gamma V^i(s') - V^i(s) under the given critic values.
std::vector<Eigen::VectorXd> exact_policy_gradient(const Jommdp& env, const ExactModel& model,
                                                   const Policies& policies,
                                                   const CriticValues& values);

/// E_{d, pi}[(Q_pi(s, a) - V_pi(s)) grad log pi^i] for the team reward, with
/// Q and V from the exact linear solve.
std::vector<Eigen::VectorXd> advantage_gradient(const Jommdp& env, const ExactModel& model,
                                                const Policies& policies);

/// The two correction terms separating the critic-based gradient from the
/// exact one: E[gamma (V(s'; v) - V_pi(s')) grad log pi^i] and
/// E[-(V(s; v) - V_pi(s)) grad log pi^i], both averaged over agents.
struct BiasTerms {
  std::vector<Eigen::VectorXd> next_state;
  std::vector<Eigen::VectorXd> current_state;
  std::vector<Eigen::VectorXd> total() const;
};

BiasTerms gradient_bias(const Jommdp& env, const ExactModel& model, const Policies& policies,
                        const CriticValues& values);

/// J'(theta): the expected team TD error under the policies, with the
/// stationary distribution and critic values of `model`/`values` held fixed.
/// Its gradient is exact_policy_gradient.
double surrogate_objective(const Jommdp& env, const ExactModel& model, const Policies& policies,
                           const CriticValues& values);

/// Long-run average team reward d' R.
double average_team_reward(const ExactModel& model);

/// Rows state,d,team_reward,r1..rN,v1..vN (states and agents from 1).
void write_model_csv(std::ostream& out, const ExactModel& model, const CriticValues& values);

}  // namespace dactd
