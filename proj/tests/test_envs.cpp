#include <doctest.h>

#include "dactd/envs.hpp"
#include "dactd/oracle.hpp"

using namespace dactd;

namespace {

// Probability that one agent moves to state 1, straight from the formula.
double coupled_p(const LocalIndices& s, const LocalIndices& a) {
  double sum = 0;
  for (std::size_t j = 0; j < s.size(); ++j) sum += s[j] + a[j];
  return sum / (2.0 * static_cast<double>(s.size()));
}

}  // namespace

TEST_CASE("coupled line step examples") {
  const CoupledLineEnv env;
  Rng rng(1);
  const LocalIndices ones(5, 1), zeros(5, 0);

  CHECK(env.coupling(ones, ones) == 1.0);
  for (int k = 0; k < 50; ++k) {
    const auto r = env.step(ones, ones, rng);
    CHECK(r.next == ones);
    CHECK(r.rewards[0] == 1.0);
    CHECK(r.rewards.tail(4).isZero());
  }
  for (int k = 0; k < 50; ++k) {
    const auto r = env.step(zeros, zeros, rng);
    CHECK(r.next == zeros);
    CHECK(r.rewards.isZero());
  }
  const LocalIndices e1{1, 0, 0, 0, 0};
  CHECK(env.coupling(e1, e1) == doctest::Approx(0.2));
  CHECK(env.rewards(e1, e1, zeros)[0] == doctest::Approx(0.2));
  CHECK(env.transition_prob(e1, e1, LocalIndices{1, 0, 0, 0, 0}) == doctest::Approx(0.2 * std::pow(0.8, 4)));
  CHECK(env.initial_state() == zeros);
}

TEST_CASE("malformed input is rejected") {
  const CoupledLineEnv env;
  Rng rng(1);
  const LocalIndices ok(5, 0);
  CHECK_THROWS_AS(env.step(LocalIndices(4, 0), ok, rng), ArgumentError);
  CHECK_THROWS_AS(env.step(ok, LocalIndices{0, 0, 2, 0, 0}, rng), ArgumentError);
  CHECK_THROWS_AS(env.step(LocalIndices{0, -1, 0, 0, 0}, ok, rng), ArgumentError);
  CHECK_THROWS_AS(CoupledLineEnv(0), ConfigurationError);
  CHECK_THROWS_AS(CoupledLineEnv(2, 1.0), ConfigurationError);
}

TEST_CASE("transition kernel rows sum to one and rewards are bounded") {
  const CoupledLineEnv env(4);
  const auto S = env.state_space();
  const auto A = env.action_space();
  for (std::int64_t x = 0; x < S.size(); ++x)
    for (std::int64_t u = 0; u < A.size(); ++u) {
      const auto s = S.decode(x), a = A.decode(u);
      double total = 0;
      for (std::int64_t y = 0; y < S.size(); ++y) {
        const auto sn = S.decode(y);
        total += env.transition_prob(s, a, sn);
        const auto r = env.rewards(s, a, sn);
        CHECK(r[0] >= 0.0);
        CHECK(r[0] <= 1.0);
        CHECK(r.tail(3).isZero());
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
}

TEST_CASE("sampled transitions match the per-agent probability") {
  const CoupledLineEnv env;
  Rng rng(17);
  const LocalIndices s{1, 0, 1, 0, 0}, a{0, 1, 1, 0, 1};
  const double p = coupled_p(s, a);
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(5);
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto r = env.step(s, a, rng);
    for (int i = 0; i < 5; ++i) hits[i] += r.next[i];
  }
  for (int i = 0; i < 5; ++i) CHECK(std::abs(hits[i] / n - p) <= 0.01);
}

TEST_CASE("product space encoding") {
  const ProductSpace sp({2, 3, 2});
  CHECK(sp.size() == 12);
  CHECK(sp.encode(LocalIndices{1, 0, 0}) == 1);
  CHECK(sp.encode(LocalIndices{0, 1, 0}) == 2);
  for (std::int64_t k = 0; k < sp.size(); ++k) CHECK(sp.encode(sp.decode(k)) == k);
}

TEST_CASE("enumeration of the micro environment") {
  const auto env = micro_env();
  const auto model = enumerate(env, uniform_policy(env));
  CHECK(model.n_states() == 4);
  CHECK((model.P.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);

  // expected reward of agent 1: mean of the coupling over the 4 joint actions
  for (int x = 0; x < 4; ++x) {
    const auto s = model.states.decode(x);
    double brute = 0;
    for (int u = 0; u < 4; ++u) brute += coupled_p(s, model.actions.decode(u)) / 4.0;
    CHECK(model.local_reward(x, 0) == doctest::Approx(brute).epsilon(1e-14));
    CHECK(model.local_reward(x, 1) == 0.0);
    CHECK(model.team_reward[x] == doctest::Approx(brute / 2));
  }

  // a = all 1 from s = all 1 keeps the chain there
  PolicyTables all_one(2, Eigen::MatrixXd{{0.0, 1.0}, {0.0, 1.0}});
  const auto forced = enumerate_kernel(env, all_one);
  const auto top = forced.states.encode(LocalIndices{1, 1});
  CHECK(forced.P(top, top) == 1.0);

  CHECK_THROWS_AS(enumerate_kernel(CoupledLineEnv(13), uniform_policy(CoupledLineEnv(13))), CapacityError);
  CHECK_NOTHROW(enumerate_kernel(CoupledLineEnv(3), uniform_policy(CoupledLineEnv(3)), 8));
  CHECK_THROWS_AS(enumerate_kernel(CoupledLineEnv(3), uniform_policy(CoupledLineEnv(3)), 7), CapacityError);
  CHECK_THROWS_AS(enumerate_kernel(env, PolicyTables(1, Eigen::MatrixXd::Constant(2, 2, 0.5))), ArgumentError);
  CHECK_THROWS_AS(enumerate_kernel(env, PolicyTables(2, Eigen::MatrixXd::Constant(2, 2, 0.7))), ArgumentError);
}

TEST_CASE("always acting 1 is the best deterministic policy of the micro environment") {
  const auto env = micro_env();
  auto table = [](int code) {
    // bit s of code is the action taken in local state s
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(2, 2);
    for (int s = 0; s < 2; ++s) t(s, (code >> s) & 1) = 1.0;
    return t;
  };
  const int best_code = 3;
  const Eigen::VectorXd best = true_values(enumerate_kernel(env, {table(best_code), table(best_code)}), 0);
  for (int c0 = 0; c0 < 4; ++c0)
    for (int c1 = 0; c1 < 4; ++c1) {
      if (c0 == best_code && c1 == best_code) continue;
      const Eigen::VectorXd v = true_values(enumerate_kernel(env, {table(c0), table(c1)}), 0);
      CHECK((best - v).minCoeff() >= 0.0);
      CHECK((best - v).maxCoeff() > 1e-6);
    }
}
