#include <doctest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include "dactd/learner.hpp"

using namespace dactd;

namespace {

RunConfig small_config(int episodes = 30) {
  RunConfig c;
  c.episodes = episodes;
  c.steps_per_episode = 20;
  return c;
}

bool same_trajectory(const RunMetrics& a, const RunMetrics& b) {
  if (a.episodes.size() != b.episodes.size()) return false;
  for (std::size_t k = 0; k < a.episodes.size(); ++k)
    if (a.episodes[k].agent_returns != b.episodes[k].agent_returns) return false;
  for (std::size_t i = 0; i < a.final_actor_params.size(); ++i) {
    if (a.final_actor_params[i] != b.final_actor_params[i]) return false;
    if (a.final_critic_params[i] != b.final_critic_params[i]) return false;
  }
  return true;
}

double max_param_gap(const RunMetrics& a, const RunMetrics& b) {
  double gap = 0.0;
  for (std::size_t i = 0; i < a.final_actor_params.size(); ++i)
    gap = std::max(gap, (a.final_actor_params[i] - b.final_actor_params[i]).cwiseAbs().maxCoeff());
  return gap;
}

}  // namespace

TEST_CASE("local TD error") {
  CHECK(local_td_error(1.0, 0.0, 0.0, 0.9) == 1.0);
  CHECK(local_td_error(0.0, 1.0, 1.0, 0.9) == doctest::Approx(-0.1));
  CHECK(local_td_error(0.0, 2.0, 2.0, 0.5) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(local_td_error(std::nan(""), 0.0, 0.0, 0.9), NumericError);
  CHECK_THROWS_AS(local_td_error(0.0, INFINITY, 0.0, 0.9), NumericError);
}

TEST_CASE("critic update") {
  Critic c(LinearCritic<double>(FeatureMap<double>::tabular(2)));
  critic_update(c, 1.0, Eigen::Vector2d(1, 0), 0.0);
  CHECK(c.params().isZero());
  critic_update(c, 1.0, Eigen::Vector2d(1, 0), 0.1);
  CHECK(c.params() == Eigen::Vector2d(0.1, 0.0));
  CHECK_THROWS_AS(critic_update(c, std::nan(""), Eigen::Vector2d(1, 0), 0.1), NumericError);
  CHECK_THROWS_AS(critic_update(c, 1.0, Eigen::Vector2d(NAN, 0), 0.1), NumericError);
  CHECK_THROWS_AS(critic_update(c, 1.0, Eigen::Vector3d(1, 0, 0), 0.1), ArgumentError);
}

TEST_CASE("batch critic regression fits a constant reward") {
  Critic c(LinearCritic<double>(FeatureMap<double>::tabular(2)));
  const std::vector<int> s{0, 1, 0, 1}, next{1, 0, 1, 0};
  const std::vector<double> r{1, 1, 1, 1};
  for (int k = 0; k < 200; ++k) train_critic_batch(c, s, r, next, 0.5, 25, 5, 0.5);
  CHECK(c.params()[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(c.params()[1] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK_THROWS_AS(train_critic_batch(c, s, r, std::vector<int>{0}, 0.5, 1, 1, 0.1), ArgumentError);
}

TEST_CASE("actor update") {
  AgentState ag{0, SoftmaxPolicy<double>(FeatureMap<double>::tabular(2), {}, 2),
                Critic(LinearCritic<double>(FeatureMap<double>::tabular(2))), EtaHistory(2), ParamBox{}};
  ag.actor.params() << 1.0, 2.0, 3.0, 4.0, 0.0, 0.0;
  const Eigen::VectorXd start = ag.actor.params();
  Eigen::MatrixXd eta(6, 1);
  eta << 1, 1, 1, 1, 1, 1;
  ag.etas.push(0, eta);

  CHECK(actor_update(ag, 0, Eigen::VectorXd::Zero(1), 0.5));
  CHECK(ag.actor.params() == start);
  CHECK_FALSE(actor_update(ag, 1, Eigen::VectorXd::Ones(1), 0.5));
  CHECK(ag.actor.params() == start);

  ag.actor.params()[0] = 10.0;
  ag.actor.params()[1] = -10.0;
  eta(1, 0) = -1.0;
  ag.etas.push(1, eta);
  CHECK(actor_update(ag, 1, Eigen::VectorXd::Constant(1, 2.0), 0.5));
  CHECK(ag.actor.params()[0] == 10.0);
  CHECK(ag.actor.params()[1] == -10.0);
  CHECK(ag.actor.params()[2] == 4.0);

  // the history keeps exactly K + 1 ticks
  for (Tick t = 2; t < 6; ++t) ag.etas.push(t, eta);
  CHECK(ag.etas.size() == 3);
  CHECK(ag.etas.find(3) != nullptr);
  CHECK(ag.etas.find(2) == nullptr);
  CHECK_THROWS_AS(ag.etas.push(5, eta), ArgumentError);
}

TEST_CASE("sequential lanes are clamped one at a time") {
  AgentState ag{0, SoftmaxPolicy<double>(FeatureMap<double>::tabular(1), {}, 1),
                Critic(LinearCritic<double>(FeatureMap<double>::tabular(1))), EtaHistory(0), ParamBox{-1.0, 1.0}};
  ag.actor.params().setZero();
  Eigen::MatrixXd eta = Eigen::MatrixXd::Ones(2, 2);
  ag.etas.push(0, eta);
  // +3 is clamped to 1 before -1.5 is applied
  CHECK(actor_update(ag, 0, Eigen::Vector2d(3.0, -1.5), 1.0));
  CHECK(ag.actor.params()[0] == doctest::Approx(-0.5));
}

TEST_CASE("step schedules") {
  CHECK(StepSchedule::constant(0.01).at(1000) == 0.01);
  CHECK(StepSchedule::polynomial(0.5, 0.6).at(0) == 0.5);
  CHECK(StepSchedule::polynomial(1.0, 1.0).at(3) == 0.25);
  CHECK_THROWS_AS(StepSchedule::constant(-1.0).validate(), ConfigurationError);
  CHECK_THROWS_AS(StepSchedule::polynomial(0.1, -0.5).validate(), ConfigurationError);

  CHECK(ratio_vanishes(StepSchedule::polynomial(0.01, 0.9), StepSchedule::polynomial(0.1, 0.6)));
  CHECK(ratio_vanishes(StepSchedule::polynomial(0.5, 1.0), StepSchedule::polynomial(0.5, 0.55)));
  CHECK_FALSE(ratio_vanishes(StepSchedule::constant(0.01), StepSchedule::constant(0.1)));
  CHECK_FALSE(ratio_vanishes(StepSchedule::polynomial(0.01, 0.6), StepSchedule::polynomial(0.1, 0.9)));
}

TEST_CASE("parameter box") {
  ParamBox box{-1.0, 2.0};
  Eigen::VectorXd th(3);
  th << -5.0, 0.5, 7.0;
  box.project(th);
  CHECK(th == Eigen::Vector3d(-1.0, 0.5, 2.0));
  CHECK_THROWS_AS((ParamBox{1.0, 1.0}.validate()), ConfigurationError);
}

TEST_CASE("neighbourhood aggregation") {
  NeighborhoodAggregation agg(line_graph(4), 1, 1);
  CHECK(agg.members(0) == std::vector<AgentId>{0, 1});
  CHECK(agg.members(2) == std::vector<AgentId>{1, 2, 3});
  Eigen::MatrixXd local(1, 4);
  local << 1.0, 2.0, 3.0, 6.0;
  CHECK_FALSE(agg.exchange(0, local).has_value());
  const auto out = agg.exchange(1, Eigen::MatrixXd::Zero(1, 4));
  REQUIRE(out);
  CHECK((*out)(0, 0) == 1.5);
  CHECK((*out)(0, 2) == doctest::Approx(11.0 / 3));
  CHECK((*out)(0, 3) == 4.5);
}

TEST_CASE("algorithm labels and delays") {
  CHECK(AlgorithmSpec::parse("dac_td") == AlgorithmSpec{AlgorithmKind::dac_td, 0});
  CHECK(AlgorithmSpec::parse("khop_sac:2").hops == 2);
  CHECK(AlgorithmSpec::parse("independent_ac").label() == "independent_ac");
  CHECK_THROWS(AlgorithmSpec::parse("khop_sac:x"));
  CHECK_THROWS(AlgorithmSpec::parse("sarsa"));

  RunConfig c;
  CHECK(algorithm_delay(c) == 4);
  c.channel.T1 = 1;
  CHECK(algorithm_delay(c) == 8);
  c.algorithm = {AlgorithmKind::khop_sac, 2};
  CHECK(algorithm_delay(c) == 2);
  c.algorithm = {AlgorithmKind::independent_ac, 0};
  CHECK(algorithm_delay(c) == 0);
}

TEST_CASE("configuration validation") {
  auto bad = [](auto edit) {
    RunConfig c = small_config();
    edit(c);
    return c;
  };
  CHECK_NOTHROW(small_config().validate());
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.n_agents = 4; }).validate(), ConfigurationError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.gamma = 1.0; }).validate(), ConfigurationError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.steps_per_episode = 0; }).validate(), ConfigurationError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.channel.drop_prob = 1.0; }).validate(), ConfigurationError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.algorithm = {AlgorithmKind::khop_sac, 5}; }).validate(),
                  ConfigurationError);
  CHECK_THROWS_AS(bad([](RunConfig& c) {
                    c.n_agents = 4;
                    c.graph = undirected_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
                    c.protocol = ProtocolKind::alg2;
                  }).validate(),
                  ConfigurationError);
  CHECK_THROWS_AS(bad([](RunConfig& c) {
                    c.protocol = ProtocolKind::alg2;
                    c.channel.T1 = 1;
                  }).validate(),
                  ConfigurationError);
  CHECK_THROWS_AS(bad([](RunConfig& c) { c.regime = Regime::step; }).validate(), ConfigurationError);
  CHECK_THROWS_AS(bad([](RunConfig& c) {
                    c.regime = Regime::step;
                    c.critic_step = StepSchedule::polynomial(0.1, 0.6);
                    c.actor_step = StepSchedule::polynomial(0.01, 0.5);
                  }).validate(),
                  ConfigurationError);
  CHECK_NOTHROW(bad([](RunConfig& c) {
                  c.regime = Regime::step;
                  c.critic_step = StepSchedule::polynomial(0.1, 0.6);
                  c.actor_step = StepSchedule::polynomial(0.01, 0.9);
                }).validate());
}

TEST_CASE("runs are deterministic in the seed") {
  const auto a = run(small_config());
  const auto b = run(small_config());
  CHECK(same_trajectory(a, b));
  auto c = small_config();
  c.seed = 1;
  CHECK_FALSE(same_trajectory(a, run(c)));
}

TEST_CASE("delayed updates use the team TD error of tick t - K") {
  for (Regime regime : {Regime::episode, Regime::step}) {
    RunConfig c = small_config(12);
    c.regime = regime;
    c.actor_step = StepSchedule::constant(0.0);  // identical TD streams across algorithms
    c.critic_step = regime == Regime::step ? StepSchedule::polynomial(0.1, 0.6) : StepSchedule::constant(0.1);
    c.record_updates = true;
    const auto dac = run(c);
    const auto shadow = run_baseline(c, {AlgorithmKind::independent_ac, 0});
    const int K = dac.latency;
    REQUIRE(K == 4);
    REQUIRE(shadow.latency == 0);

    std::map<std::pair<Tick, AgentId>, double> own;
    for (const auto& u : shadow.updates) {
      CHECK(u.origin == u.tick);
      own[{u.tick, u.agent}] = u.team_delta;
    }
    const Tick ticks = regime == Regime::step ? c.episodes * c.steps_per_episode : c.episodes;
    CHECK(dac.updates.size() == static_cast<std::size_t>((ticks - K) * c.n_agents));
    for (const auto& u : dac.updates) {
      CHECK(u.origin == u.tick - K);
      double sum = 0.0;
      for (AgentId j = 0; j < c.n_agents; ++j) sum += own.at({u.origin, j});
      CHECK(u.team_delta == doctest::Approx(sum / c.n_agents).epsilon(1e-14));
    }
    for (const auto& e : dac.episodes) CHECK(e.protocol_complete == (e.episode >= (regime == Regime::step ? 1 : K)));
  }
}

TEST_CASE("a single agent runs independent AC one tick late") {
  RunConfig c = small_config(10);
  c.n_agents = 1;
  c.graph = line_graph(1);
  c.actor_step = StepSchedule::constant(0.0);
  c.record_updates = true;
  const auto dac = run(c);
  const auto ind = run_baseline(c, {AlgorithmKind::independent_ac, 0});
  CHECK(dac.latency == 1);
  REQUIRE(dac.updates.size() == ind.updates.size() - 1);
  for (std::size_t k = 0; k < dac.updates.size(); ++k) {
    CHECK(dac.updates[k].origin == ind.updates[k].tick);
    CHECK(dac.updates[k].team_delta == ind.updates[k].team_delta);
  }
}

TEST_CASE("baseline equivalences") {
  const auto c = small_config(40);
  const auto dac = run(c);
  const auto four_hop = run_baseline(c, {AlgorithmKind::khop_sac, 4});
  CHECK(same_trajectory(dac, four_hop));
  CHECK(four_hop.latency == dac.latency);

  const auto zero_hop = run_baseline(c, {AlgorithmKind::khop_sac, 0});
  const auto ind = run_baseline(c, {AlgorithmKind::independent_ac, 0});
  CHECK(same_trajectory(zero_hop, ind));
  CHECK_THROWS_AS(run_baseline(c, {AlgorithmKind::dac_td, 0}), ArgumentError);

  for (const auto& e : ind.episodes)
    for (std::size_t i = 1; i < e.agent_returns.size(); ++i) CHECK(e.agent_returns[i] == 0.0);
}

TEST_CASE("all three aggregation protocols drive the same learning") {
  auto c = small_config(40);
  const auto alg1 = run(c);
  c.protocol = ProtocolKind::centralized;
  const auto central = run(c);
  c.protocol = ProtocolKind::alg2;
  const auto alg2 = run(c);
  CHECK(same_trajectory(alg1, central));
  CHECK(max_param_gap(alg1, alg2) <= 1e-9);
  CHECK(alg1.max_payload_values == static_cast<std::size_t>(4 * 5 * 20));
  CHECK(alg2.max_payload_values == static_cast<std::size_t>(4 * 20));
}

TEST_CASE("lossy channels do not change learning when the latency bound is shared") {
  auto c = small_config(40);
  c.channel.T1 = 2;
  const auto lossless = run(c);
  c.channel.drop_prob = 0.3;
  c.channel.seed = 17;
  const auto lossy = run(c);
  CHECK(lossless.latency == 12);
  CHECK(same_trajectory(lossless, lossy));
}

TEST_CASE("metrics CSV") {
  const auto m = run(small_config(3));
  std::ostringstream out;
  write_metrics_csv(out, m);
  const std::string text = out.str();
  CHECK(text.rfind("episode,team_return,agent1_return,agent2_return,agent3_return,agent4_return,agent5_return,"
                   "protocol_complete\n1,",
                   0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK(m.final_mean(2) == doctest::Approx((m.episodes[1].team_return + m.episodes[2].team_return) / 2));
}
