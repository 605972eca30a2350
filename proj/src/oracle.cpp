#include "dactd/oracle.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <ostream>

namespace dactd {

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P) {
  const Eigen::Index n = P.rows();
  if (n == 0 || P.cols() != n) throw ArgumentError("transition matrix must be square and non-empty");
  if ((P.array() < -1e-15).any() || ((P.rowwise().sum().array() - 1.0).abs() > 1e-9).any())
    throw ModelError("transition matrix is not row-stochastic");

  const Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(1e-10);
  if (lu.rank() < n - 1) throw ModelError("chain is reducible: stationary distribution is not unique");

  Eigen::MatrixXd B = A;
  B.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[n - 1] = 1.0;
  Eigen::VectorXd d = B.fullPivLu().solve(rhs);

  // power-iteration polish when the direct solve is poorly conditioned
  auto residual = [&](const Eigen::VectorXd& x) { return (P.transpose() * x - x).cwiseAbs().maxCoeff(); };
  for (int it = 0; it < 10000 && residual(d) > 1e-13; ++it) {
    d = (P.transpose() * d).eval();
    d = d.cwiseMax(0.0);
    d /= d.sum();
  }
  if (!d.allFinite() || residual(d) > 1e-12) throw ModelError("stationary distribution did not converge");
  d = d.cwiseMax(0.0);
  return d / d.sum();
}

Eigen::MatrixXd local_feature_matrix(const ExactModel& model, AgentId i,
                                     const FeatureMap<double>& features) {
  Eigen::MatrixXd Phi(model.n_states(), features.dim());
  for (int x = 0; x < model.n_states(); ++x)
    Phi.row(x) = features.eval(model.states.decode(x).at(i)).transpose();
  return Phi;
}

namespace {

void require_distribution(const ExactModel& model) {
  if (model.d.size() != model.n_states())
    throw ModelError("model has no stationary distribution");
}

Eigen::MatrixXd fixed_point_system(const ExactModel& model, const Eigen::MatrixXd& Phi) {
  const auto n = model.n_states();
  return Phi.transpose() * model.d.asDiagonal() *
         (model.gamma * model.P - Eigen::MatrixXd::Identity(n, n)) * Phi;
}

}  // namespace

Eigen::VectorXd critic_fixed_point(const ExactModel& model, AgentId i, const Eigen::MatrixXd& Phi) {
  require_distribution(model);
  if (Phi.rows() != model.n_states()) throw ArgumentError("feature matrix needs one row per state");
  if (i < 0 || i >= model.n_agents()) throw ArgumentError("agent out of range");
  const Eigen::MatrixXd A = fixed_point_system(model, Phi);
  const Eigen::VectorXd b = -Phi.transpose() * model.d.asDiagonal() * model.local_reward.col(i);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) throw RankError("critic fixed-point system is singular");
  return lu.solve(b);
}

double fixed_point_residual(const ExactModel& model, AgentId i, const Eigen::MatrixXd& Phi,
                            const Eigen::VectorXd& v) {
  require_distribution(model);
  const Eigen::VectorXd r = fixed_point_system(model, Phi) * v +
                            Phi.transpose() * model.d.asDiagonal() * model.local_reward.col(i);
  return r.cwiseAbs().maxCoeff();
}

Eigen::VectorXd true_values(const ExactModel& model, AgentId i) {
  const auto n = model.n_states();
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - model.gamma * model.P;
  return A.partialPivLu().solve(model.local_reward.col(i));
}

Eigen::VectorXcd critic_ode_eigenvalues(const ExactModel& model) {
  require_distribution(model);
  const auto n = model.n_states();
  const Eigen::MatrixXd M =
      model.d.asDiagonal() * (model.gamma * model.P - Eigen::MatrixXd::Identity(n, n));
  return Eigen::EigenSolver<Eigen::MatrixXd>(M, false).eigenvalues();
}

CriticValues true_critic_values(const ExactModel& model) {
  CriticValues V(model.n_states(), model.n_agents());
  for (int i = 0; i < model.n_agents(); ++i) V.col(i) = true_values(model, i);
  return V;
}

CriticValues local_critic_values(const Jommdp& env, const ExactModel& model) {
  CriticValues V(model.n_states(), model.n_agents());
  for (int i = 0; i < model.n_agents(); ++i) {
    const auto Phi =
        local_feature_matrix(model, i, FeatureMap<double>::tabular(env.n_local_states(i)));
    V.col(i) = Phi * critic_fixed_point(model, i, Phi);
  }
  return V;
}

PolicyTables policy_tables(const Policies& policies) {
  PolicyTables t;
  t.reserve(policies.size());
  for (const auto& p : policies) t.push_back(p.table());
  return t;
}

namespace {

/// Exhaustive walk over (s, a, s') with precomputed policy quantities.
struct Walk {
  const Jommdp& env;
  const ExactModel& model;
  PolicyTables tables;
  std::vector<LocalIndices> states;
  std::vector<LocalIndices> actions;
  // scores[i][s^i][a^i]
  std::vector<std::vector<std::vector<Eigen::VectorXd>>> scores;

  Walk(const Jommdp& e, const ExactModel& m, const Policies& policies)
      : env(e), model(m), tables(policy_tables(policies)) {
    if (static_cast<int>(policies.size()) != env.n_agents())
      throw ArgumentError("need one policy per agent");
    require_distribution(model);
    for (int x = 0; x < model.n_states(); ++x) states.push_back(model.states.decode(x));
    for (std::int64_t a = 0; a < model.actions.size(); ++a) actions.push_back(model.actions.decode(a));
    scores.resize(policies.size());
    for (std::size_t i = 0; i < policies.size(); ++i) {
      const int ns = env.n_local_states(static_cast<int>(i));
      const int na = env.n_local_actions(static_cast<int>(i));
      scores[i].assign(ns, std::vector<Eigen::VectorXd>(na));
      for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a) scores[i][s][a] = policies[i].score(s, a);
    }
  }

  std::vector<Eigen::VectorXd> zeros() const {
    std::vector<Eigen::VectorXd> g;
    for (const auto& per_agent : scores) g.push_back(Eigen::VectorXd::Zero(per_agent[0][0].size()));
    return g;
  }

  /// Calls f(x, weight d(x) pi(a|x), a, E_{s'}[g(x, a, s')]) for every (x, a)
  /// with g(x, a, y, rewards) -> double.
  template <typename G, typename F>
  void for_each(G&& g, F&& f) const {
    const int ns = model.n_states();
    for (int x = 0; x < ns; ++x) {
      if (model.d[x] == 0.0) continue;
      for (const auto& a : actions) {
        const double pa = joint_prob(tables, states[x], a);
        if (pa == 0.0) continue;
        double expect = 0.0;
        for (int y = 0; y < ns; ++y) {
          const double pt = env.transition_prob(states[x], a, states[y]);
          if (pt == 0.0) continue;
          expect += pt * g(x, a, y, env.rewards(states[x], a, states[y]));
        }
        f(x, model.d[x] * pa, a, expect);
      }
    }
  }

  void accumulate(std::vector<Eigen::VectorXd>& grad, int x, const LocalIndices& a,
                  double weight) const {
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += weight * scores[i][states[x][i]][a[i]];
  }
};

double team_td(const Eigen::VectorXd& r, const CriticValues& V, int x, int y, double gamma) {
  return (r.array() + gamma * V.row(y).transpose().array() - V.row(x).transpose().array()).mean();
}

}  // namespace

std::vector<Eigen::VectorXd> exact_policy_gradient(const Jommdp& env, const ExactModel& model,
                                                   const Policies& policies,
                                                   const CriticValues& values) {
  Walk w(env, model, policies);
  auto grad = w.zeros();
  w.for_each(
      [&](int x, const LocalIndices&, int y, const Eigen::VectorXd& r) {
        return team_td(r, values, x, y, model.gamma);
      },
      [&](int x, double weight, const LocalIndices& a, double delta) {
        w.accumulate(grad, x, a, weight * delta);
      });
  return grad;
}

std::vector<Eigen::VectorXd> advantage_gradient(const Jommdp& env, const ExactModel& model,
                                                const Policies& policies) {
  Walk w(env, model, policies);
  const Eigen::VectorXd V = true_critic_values(model).rowwise().mean();
  auto grad = w.zeros();
  w.for_each(
      [&](int, const LocalIndices&, int y, const Eigen::VectorXd& r) {
        return r.mean() + model.gamma * V[y];
      },
      [&](int x, double weight, const LocalIndices& a, double q) {
        w.accumulate(grad, x, a, weight * (q - V[x]));
      });
  return grad;
}

std::vector<Eigen::VectorXd> BiasTerms::total() const {
  auto t = next_state;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += current_state[i];
  return t;
}

BiasTerms gradient_bias(const Jommdp& env, const ExactModel& model, const Policies& policies,
                        const CriticValues& values) {
  Walk w(env, model, policies);
  const Eigen::VectorXd gap = (values - true_critic_values(model)).rowwise().mean();
  BiasTerms b{w.zeros(), w.zeros()};
  w.for_each(
      [&](int, const LocalIndices&, int y, const Eigen::VectorXd&) { return model.gamma * gap[y]; },
      [&](int x, double weight, const LocalIndices& a, double next) {
        w.accumulate(b.next_state, x, a, weight * next);
        w.accumulate(b.current_state, x, a, -weight * gap[x]);
      });
  return b;
}

double surrogate_objective(const Jommdp& env, const ExactModel& model, const Policies& policies,
                           const CriticValues& values) {
  Walk w(env, model, policies);
  double j = 0.0;
  w.for_each(
      [&](int x, const LocalIndices&, int y, const Eigen::VectorXd& r) {
        return team_td(r, values, x, y, model.gamma);
      },
      [&](int, double weight, const LocalIndices&, double delta) { j += weight * delta; });
  return j;
}

double average_team_reward(const ExactModel& model) {
  require_distribution(model);
  return model.d.dot(model.team_reward);
}

void write_model_csv(std::ostream& out, const ExactModel& model, const CriticValues& values) {
  const int n = model.n_agents();
  out << "state,d,team_reward";
  for (int i = 1; i <= n; ++i) out << ",r" << i;
  for (int i = 1; i <= n; ++i) out << ",v" << i;
  out << '\n';
  const auto old = out.precision(17);
  for (int x = 0; x < model.n_states(); ++x) {
    out << x + 1 << ',' << (model.d.size() ? model.d[x] : std::nan("")) << ','
        << model.team_reward[x];
    for (int i = 0; i < n; ++i) out << ',' << model.local_reward(x, i);
    for (int i = 0; i < n; ++i) out << ',' << values(x, i);
    out << '\n';
  }
  out.precision(old);
}

}  // namespace dactd
