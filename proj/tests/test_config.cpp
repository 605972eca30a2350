#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dactd/config.hpp"

using namespace dactd;

namespace {

ExperimentConfig parse(const std::string& text, const std::string& dir = ".") {
  std::istringstream in(text);
  return parse_experiment_config(in, dir);
}

}  // namespace

TEST_CASE("defaults reproduce the five-agent line experiment") {
  const auto cfg = parse("");
  CHECK(cfg.base.n_agents == 5);
  CHECK(cfg.base.gamma == 0.9);
  CHECK(cfg.base.graph.edges_at(0) == line_graph(5).edges_at(0));
  CHECK(cfg.base.episodes == 1000);
  CHECK(cfg.base.steps_per_episode == 100);
  CHECK(cfg.base.actor_step.at(7) == 0.01);
  CHECK(cfg.base.critic_step.at(7) == 0.1);
  CHECK(cfg.algorithms == std::vector<AlgorithmSpec>{{AlgorithmKind::dac_td, 0}});
  CHECK(algorithm_delay(cfg.run_config(cfg.algorithms[0], 0)) == 4);
}

TEST_CASE("full config") {
  const auto cfg = parse(R"(
; comment
[env]
agents = 4
gamma = 0.8
[graph]
kind = star
[channel]
T1 = 2
T2 = 3
drop_prob = 0.25
delay_law = fixed
seed = 9
[algorithms]
list = dac_td, khop_sac:2, independent_ac
[schedule]
actor = polynomial 0.01 0.9
critic = polynomial 0.5 0.6
[training]
regime = step
episodes = 3
steps_per_episode = 7
approximator = tabular
actor_hidden = 4 3
[run]
seeds = 3 5
out = results
)");
  CHECK(cfg.base.n_agents == 4);
  CHECK(cfg.base.gamma == 0.8);
  CHECK(cfg.base.graph.has_edge({0, 3}, 0));
  CHECK_FALSE(cfg.base.graph.has_edge({1, 2}, 0));
  CHECK(cfg.base.channel.T1 == 2);
  CHECK(cfg.base.channel.T2 == 3);
  CHECK(cfg.base.channel.drop_prob == 0.25);
  CHECK(cfg.base.channel.delay_law == DelayLaw::fixed);
  CHECK(cfg.algorithms.size() == 3);
  CHECK(cfg.algorithms[1].hops == 2);
  CHECK(cfg.base.regime == Regime::step);
  CHECK(cfg.base.approximator == Approximator::tabular);
  CHECK(cfg.base.actor_hidden == std::vector<int>{4, 3});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 5});
  CHECK(cfg.out_dir == "results");
  const auto rc = cfg.run_config(cfg.algorithms[1], 5);
  CHECK(rc.seed == 5);
  CHECK(rc.algorithm.hops == 2);
  CHECK(algorithm_delay(cfg.run_config(cfg.algorithms[0], 5)) == 2 * 5);
}

TEST_CASE("invalid configs are rejected") {
  CHECK_THROWS_AS(parse("[env]\nagent = 3\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[envs]\nagents = 3\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("agents = 3\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[env]\nagents = three\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[env]\nname = gridworld\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[env]\nname = micro\nagents = 3\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[graph]\nkind = torus\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[env]\nagents = 4\n[graph]\nkind = ring\n[protocol]\nkind = alg2\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[algorithms]\nlist = khop_sac:5\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[algorithms]\nlist = khop_sac:-1\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[channel]\ndrop_prob = 1.5\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[channel]\ndelay_law = poisson\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[schedule]\nactor = cosine 0.1\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[training]\nregime = step\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[run]\nseeds = 1 x\n"), ConfigurationError);
  CHECK_THROWS_AS(parse("[run]\nseeds =\n"), ConfigurationError);
  CHECK_NOTHROW(parse("[env]\nagents = 5\n[graph]\nkind = line\n[protocol]\nkind = alg2\n"));
}

TEST_CASE("step schedule text") {
  const auto c = parse_step_schedule("constant 0.01");
  CHECK(c.kind == StepSchedule::Kind::constant);
  CHECK(c.base == 0.01);
  const auto p = parse_step_schedule("polynomial 0.5 0.6");
  CHECK(p.kind == StepSchedule::Kind::polynomial);
  CHECK(p.exponent == 0.6);
  CHECK_THROWS_AS(parse_step_schedule("polynomial 0.5"), ConfigurationError);
  CHECK_THROWS_AS(parse_step_schedule("constant"), ConfigurationError);
  CHECK_THROWS_AS(parse_step_schedule("constant 0.1 7"), ConfigurationError);
}

TEST_CASE("written configs parse back to the same runs") {
  const auto cfg = parse("[env]\nagents = 3\n[channel]\nT1 = 1\ndrop_prob = 0.1\n[algorithms]\nlist = dac_td, khop_sac:1\n"
                         "[schedule]\nactor = constant 0.003\n[run]\nseeds = 4 2\n");
  std::ostringstream out;
  write_experiment_config(out, cfg);
  const auto back = parse(out.str());
  std::ostringstream again;
  write_experiment_config(again, back);
  CHECK(out.str() == again.str());
  CHECK(back.algorithms == cfg.algorithms);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.base.actor_step.base == 0.003);
  CHECK(back.base.channel.drop_prob == 0.1);
}

TEST_CASE("graph files resolve against the config directory") {
  const auto dir = std::filesystem::temp_directory_path() / "dactd_config_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream g(dir / "tri.graph");
    g << "agents 3\nstatic\n1 - 2\n2 - 3\n";
    std::ofstream c(dir / "exp.ini");
    c << "[env]\nagents = 3\n[graph]\nkind = file\nfile = tri.graph\n";
  }
  const auto cfg = load_experiment_config((dir / "exp.ini").string());
  CHECK(cfg.base.graph.has_edge({0, 1}, 0));
  CHECK(cfg.base.graph.has_edge({2, 1}, 0));
  CHECK_FALSE(cfg.base.graph.has_edge({0, 2}, 0));
  CHECK_THROWS_AS(load_experiment_config((dir / "missing.ini").string()), ConfigurationError);
  std::filesystem::remove_all(dir);
}
