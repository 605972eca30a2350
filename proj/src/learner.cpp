#include "dactd/learner.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

namespace dactd {

// ------------------------------------------------------------ schedules

double StepSchedule::at(Tick t) const {
  if (t < 0) throw ArgumentError("step size requested for a negative tick");
  if (kind == Kind::constant) return base;
  return base / std::pow(static_cast<double>(t) + 1.0, exponent);
}

void StepSchedule::validate() const {
  if (!(std::isfinite(base) && base >= 0.0)) throw ConfigurationError("step size must be non-negative");
  if (kind == Kind::polynomial && !(std::isfinite(exponent) && exponent >= 0.0))
    throw ConfigurationError("step exponent must be non-negative");
}

std::string StepSchedule::describe() const {
  std::ostringstream os;
  os.precision(17);
  if (kind == Kind::constant)
    os << "constant " << base;
  else
    os << "polynomial " << base << ' ' << exponent;
  return os.str();
}

bool ratio_vanishes(const StepSchedule& actor, const StepSchedule& critic, Tick burn_in,
                    Tick horizon, double ratio_tol) {
  double prev = std::numeric_limits<double>::infinity();
  for (Tick t = burn_in; t <= horizon; t = t * 2 + 1) {
    const double b = critic.at(t);
    if (b <= 0.0) return false;
    const double r = actor.at(t) / b;
    if (r > prev) return false;
    prev = r;
  }
  return prev < ratio_tol * (actor.at(burn_in) / critic.at(burn_in));
}

void ParamBox::validate() const {
  if (!(lower < upper)) throw ConfigurationError("parameter box needs lower < upper");
}

// ------------------------------------------------------------ critic

double Critic::value(int s) const {
  return std::visit([&](const auto& c) { return c.value(s); }, impl_);
}

Eigen::VectorXd Critic::grad(int s) const {
  return std::visit([&](const auto& c) -> Eigen::VectorXd { return c.grad(s); }, impl_);
}

Eigen::VectorXd Critic::values(std::span<const int> states) const {
  return std::visit([&](const auto& c) -> Eigen::VectorXd { return c.values(states); }, impl_);
}

Eigen::VectorXd Critic::weighted_grad(std::span<const int> states, const Eigen::VectorXd& w) const {
  return std::visit([&](const auto& c) -> Eigen::VectorXd { return c.weighted_grad(states, w); },
                    impl_);
}

Eigen::VectorXd& Critic::params() {
  return std::visit([](auto& c) -> Eigen::VectorXd& { return c.params(); }, impl_);
}

const Eigen::VectorXd& Critic::params() const {
  return std::visit([](const auto& c) -> const Eigen::VectorXd& { return c.params(); }, impl_);
}

Checkpoint Critic::checkpoint() const {
  if (const auto* lin = std::get_if<LinearCritic<double>>(&impl_)) return checkpoint_of(*lin);
  return checkpoint_of(std::get<MlpCritic<double>>(impl_).net());
}

// ------------------------------------------------------------ score history

void EtaHistory::push(Tick t, Eigen::MatrixXd eta) {
  if (!buf_.empty() && t <= buf_.front().first) throw ArgumentError("score ticks must increase");
  buf_.emplace_front(t, std::move(eta));
  while (static_cast<int>(buf_.size()) > K_ + 1) buf_.pop_back();
}

const Eigen::MatrixXd* EtaHistory::find(Tick t) const {
  for (const auto& [tick, eta] : buf_)
    if (tick == t) return &eta;
  return nullptr;
}

// ------------------------------------------------------------ updates

double local_td_error(double r, double v_next, double v_now, double gamma) {
  const double delta = r + gamma * v_next - v_now;
  if (!std::isfinite(delta)) throw NumericError("non-finite TD error");
  return delta;
}

double local_td_error(const Critic& critic, int s, double r, int s_next, double gamma) {
  return local_td_error(r, critic.value(s_next), critic.value(s), gamma);
}

void critic_update(Critic& critic, double delta, const Eigen::VectorXd& grad, double beta) {
  if (!std::isfinite(delta)) throw NumericError("non-finite TD error in critic update");
  if (!grad.allFinite()) throw NumericError("non-finite critic gradient");
  if (grad.size() != critic.params().size()) throw ArgumentError("critic gradient has the wrong size");
  critic.params() += (beta * delta) * grad;
}

void train_critic_batch(Critic& critic, std::span<const int> states, std::span<const double> rewards,
                        std::span<const int> next_states, double gamma, int epochs, int refresh,
                        double lr) {
  const auto m = static_cast<Eigen::Index>(states.size());
  if (rewards.size() != states.size() || next_states.size() != states.size())
    throw ArgumentError("batch arrays differ in length");
  if (m == 0 || epochs == 0) return;
  if (refresh < 1) throw ArgumentError("target refresh interval must be positive");
  const Eigen::Map<const Eigen::VectorXd> r(rewards.data(), m);
  Eigen::VectorXd targets;
  for (int ep = 0; ep < epochs; ++ep) {
    if (ep % refresh == 0) targets = r + gamma * critic.values(next_states);
    const Eigen::VectorXd resid = (critic.values(states) - targets) / static_cast<double>(m);
    const Eigen::VectorXd g = critic.weighted_grad(states, resid);
    if (!g.allFinite()) throw NumericError("non-finite critic gradient in batch training");
    critic.params() -= lr * g;
  }
}

bool actor_update(AgentState& agent, Tick origin, const Eigen::VectorXd& team_delta, double alpha) {
  const Eigen::MatrixXd* eta = agent.etas.find(origin);
  if (eta == nullptr) return false;
  if (eta->cols() != team_delta.size()) throw ArgumentError("TD lanes and score lanes differ");
  if (!team_delta.allFinite()) throw NumericError("non-finite team TD error");
  auto& theta = agent.actor.params();
  for (Eigen::Index k = 0; k < team_delta.size(); ++k) {
    theta += (alpha * team_delta[k]) * eta->col(k);
    agent.box.project(theta);
  }
  return true;
}

// ------------------------------------------------------------ neighbourhood baseline

NeighborhoodAggregation::NeighborhoodAggregation(const GraphSchedule& graph, int hops, int delay)
    : delay_(delay) {
  if (hops < 0) throw ConfigurationError("hop count must be non-negative");
  if (delay < 0) throw ConfigurationError("delay must be non-negative");
  for (AgentId i = 0; i < graph.n_agents(); ++i) members_.push_back(within_hops(graph, i, hops));
}

std::optional<Eigen::MatrixXd> NeighborhoodAggregation::exchange(Tick, const Eigen::MatrixXd& local) {
  if (local.cols() != static_cast<Eigen::Index>(members_.size()))
    throw ArgumentError("expected one TD column per agent");
  buffer_.push_back(local);
  if (static_cast<int>(buffer_.size()) <= delay_) return std::nullopt;
  const Eigen::MatrixXd& old = buffer_.front();
  Eigen::MatrixXd out(old.rows(), old.cols());
  for (std::size_t i = 0; i < members_.size(); ++i) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(old.rows());
    for (AgentId j : members_[i]) sum += old.col(j);
    out.col(static_cast<Eigen::Index>(i)) = sum / static_cast<double>(members_[i].size());
  }
  buffer_.pop_front();
  return out;
}

// ------------------------------------------------------------ configuration

std::string AlgorithmSpec::label() const {
  switch (kind) {
    case AlgorithmKind::dac_td: return "dac_td";
    case AlgorithmKind::independent_ac: return "independent_ac";
    case AlgorithmKind::khop_sac: return "khop_sac:" + std::to_string(hops);
  }
  return "?";
}

AlgorithmSpec AlgorithmSpec::parse(const std::string& text) {
  if (text == "dac_td") return {AlgorithmKind::dac_td, 0};
  if (text == "independent_ac") return {AlgorithmKind::independent_ac, 0};
  const std::string prefix = "khop_sac:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string k = text.substr(prefix.size());
    std::size_t used = 0;
    int hops = -1;
    try {
      hops = std::stoi(k, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == k.size() && !k.empty() && hops >= 0) return {AlgorithmKind::khop_sac, hops};
  }
  throw ConfigurationError("unknown algorithm '" + text +
                           "' (expected dac_td, independent_ac or khop_sac:<k>)");
}

std::string to_string(ProtocolKind p) {
  switch (p) {
    case ProtocolKind::alg1: return "alg1";
    case ProtocolKind::alg2: return "alg2";
    case ProtocolKind::centralized: return "centralized";
  }
  return "?";
}

std::string to_string(Regime r) { return r == Regime::step ? "step" : "episode"; }
std::string to_string(Approximator a) { return a == Approximator::mlp ? "mlp" : "tabular"; }

void RunConfig::validate() const {
  if (n_agents < 1) throw ConfigurationError("need at least one agent");
  if (graph.n_agents() != n_agents)
    throw ConfigurationError("graph has " + std::to_string(graph.n_agents()) +
                             " agents but the environment has " + std::to_string(n_agents));
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigurationError("gamma must lie in [0, 1)");
  channel.validate();
  actor_step.validate();
  critic_step.validate();
  box.validate();
  if (episodes < 0) throw ConfigurationError("episode count must be non-negative");
  if (steps_per_episode < 1) throw ConfigurationError("episodes need at least one step");
  if (critic_epochs < 0) throw ConfigurationError("critic epochs must be non-negative");
  if (target_refresh < 1) throw ConfigurationError("target refresh interval must be positive");
  for (int h : actor_hidden)
    if (h < 1) throw ConfigurationError("hidden layer sizes must be positive");
  for (int h : critic_hidden)
    if (h < 1) throw ConfigurationError("hidden layer sizes must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
    throw ConfigurationError("leaky slope must lie in [0, 1)");

  if (regime == Regime::step) {
    using K = StepSchedule::Kind;
    if (critic_step.kind != K::polynomial || !(critic_step.exponent > 0.5 && critic_step.exponent <= 1.0))
      throw ConfigurationError("step regime needs a polynomial critic step with exponent in (0.5, 1]");
    const bool frozen = actor_step.kind == K::constant && actor_step.base == 0.0;
    if (!frozen && (actor_step.kind != K::polynomial || !(actor_step.exponent > critic_step.exponent)))
      throw ConfigurationError("step regime needs a polynomial actor step decaying faster than the critic's");
  }

  if (algorithm.kind == AlgorithmKind::dac_td && protocol == ProtocolKind::alg2 && n_agents > 1) {
    const auto cls = graph.is_static() ? classify(graph) : GraphClass{};
    if (!cls.acyclic_undirected)
      throw ConfigurationError("alg2 requires a static acyclic undirected graph");
    if (channel.T1 != 0 || channel.T2 != 1 || channel.drop_prob != 0.0)
      throw ConfigurationError("alg2 requires a lossless unit-delay channel (T1 = 0, T2 = 1)");
  }
  if (algorithm.kind == AlgorithmKind::khop_sac) {
    if (!graph.is_static()) throw ConfigurationError("khop_sac needs a static graph");
    const auto cls = classify(graph);
    const int diam = n_agents == 1 ? 0 : cls.diameter;
    if (diam < 0) throw ConfigurationError("khop_sac needs a strongly connected graph");
    if (algorithm.hops < 0 || algorithm.hops > diam)
      throw ConfigurationError("khop_sac hop count must lie in [0, " + std::to_string(diam) + "]");
  }
}

// ------------------------------------------------------------ runs

double RunMetrics::final_mean(int window) const {
  if (episodes.empty()) return std::nan("");
  const std::size_t n = std::min(episodes.size(), static_cast<std::size_t>(std::max(window, 1)));
  double sum = 0.0;
  for (std::size_t k = episodes.size() - n; k < episodes.size(); ++k) sum += episodes[k].team_return;
  return sum / static_cast<double>(n);
}

int algorithm_delay(const RunConfig& config) {
  switch (config.algorithm.kind) {
    case AlgorithmKind::dac_td:
      return latency_bound(config.graph, config.channel.T1, config.channel.T2);
    case AlgorithmKind::independent_ac: return 0;
    case AlgorithmKind::khop_sac: return config.algorithm.hops;
  }
  return 0;
}

namespace {

ChannelModel run_channel(const RunConfig& config) {
  ChannelModel ch = config.channel;
  ch.seed = derive_seed(derive_seed(config.seed, 3), config.channel.seed);
  return ch;
}

}  // namespace

std::unique_ptr<TeamAggregator> make_aggregator(const RunConfig& config, int width) {
  const int delay = algorithm_delay(config);
  switch (config.algorithm.kind) {
    case AlgorithmKind::dac_td:
      switch (config.protocol) {
        case ProtocolKind::centralized:
          return std::make_unique<CentralizedAggregation>(config.n_agents, delay);
        case ProtocolKind::alg1:
          return std::make_unique<GeneralAggregation>(config.graph, run_channel(config), delay, width);
        case ProtocolKind::alg2:
          if (config.n_agents == 1) return std::make_unique<CentralizedAggregation>(1, delay);
          return std::make_unique<AcyclicAggregation>(config.graph, unit_delay_channel(run_channel(config).seed),
                                                      delay, width);
      }
      break;
    case AlgorithmKind::independent_ac:
      return std::make_unique<NeighborhoodAggregation>(config.graph, 0, 0);
    case AlgorithmKind::khop_sac:
      return std::make_unique<NeighborhoodAggregation>(config.graph, config.algorithm.hops, delay);
  }
  throw ConfigurationError("unsupported algorithm");
}

namespace {

std::vector<AgentState> make_agents(const RunConfig& config, const Jommdp& env) {
  std::vector<AgentState> agents;
  for (AgentId i = 0; i < config.n_agents; ++i) {
    Rng init(derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(i)));
    const auto features = FeatureMap<double>::tabular(env.n_local_states(i));
    const bool mlp = config.approximator == Approximator::mlp;
    SoftmaxPolicy<double> actor(features, mlp ? config.actor_hidden : std::vector<int>{},
                                env.n_local_actions(i), config.leaky_slope);
    if (mlp) actor.net().init_uniform(init);
    std::optional<Critic> critic;
    if (mlp) {
      MlpCritic<double> c(features, config.critic_hidden, config.leaky_slope);
      c.net().init_uniform(init);
      critic.emplace(std::move(c));
    } else {
      critic.emplace(LinearCritic<double>(features));
    }
    config.box.project(actor.params());
    agents.push_back(AgentState{i, std::move(actor), std::move(*critic), EtaHistory{}, config.box});
  }
  return agents;
}

struct Runner {
  const RunConfig& cfg;
  CoupledLineEnv env;
  std::vector<AgentState> agents;
  std::unique_ptr<TeamAggregator> agg;
  Rng env_rng;
  std::vector<Rng> action_rngs;
  RunMetrics metrics;
  int n;
  int K;

  explicit Runner(const RunConfig& c)
      : cfg(c), env(c.n_agents, c.gamma), agents(make_agents(c, env)),
        env_rng(derive_seed(c.seed, 1)), n(c.n_agents) {
    const int width = cfg.regime == Regime::episode ? cfg.steps_per_episode : 1;
    agg = make_aggregator(cfg, width);
    K = agg->delay();
    for (auto& a : agents) a.etas = EtaHistory(K);
    for (AgentId i = 0; i < n; ++i)
      action_rngs.emplace_back(derive_seed(c.seed, 100 + static_cast<std::uint64_t>(i)));
    metrics.algorithm = cfg.algorithm.label();
    metrics.seed = cfg.seed;
    metrics.latency = K;
  }

  bool apply(Tick t, const std::optional<Eigen::MatrixXd>& team) {
    if (!team) return false;
    const Tick origin = t - K;
    const double alpha = cfg.actor_step.at(origin);
    for (AgentId i = 0; i < n; ++i) {
      const bool done = actor_update(agents[i], origin, team->col(i), alpha);
      if (done && cfg.record_updates) metrics.updates.push_back({t, i, origin, (*team)(0, i)});
    }
    return true;
  }

  void record(int episode, const Eigen::VectorXd& returns, bool complete) {
    EpisodeRecord rec;
    rec.episode = episode;
    rec.agent_returns.assign(returns.data(), returns.data() + returns.size());
    rec.team_return = returns.mean();
    rec.protocol_complete = complete;
    metrics.episodes.push_back(std::move(rec));
  }

  void run_episodes() {
    const int T = cfg.steps_per_episode;
    std::vector<std::vector<int>> st(n, std::vector<int>(T)), nx(n, std::vector<int>(T));
    std::vector<std::vector<double>> rw(n, std::vector<double>(T));
    std::vector<Eigen::MatrixXd> eta(n);
    LocalIndices a(n);
    for (int e = 0; e < cfg.episodes; ++e) {
      // the policy is fixed within an episode, so probabilities and scores are cached
      std::vector<std::vector<Eigen::VectorXd>> probs(n);
      std::vector<std::vector<std::vector<Eigen::VectorXd>>> scores(n);
      for (AgentId i = 0; i < n; ++i) {
        const int ns = env.n_local_states(i);
        probs[i].resize(ns);
        scores[i].assign(ns, std::vector<Eigen::VectorXd>(env.n_local_actions(i)));
        for (int s = 0; s < ns; ++s) probs[i][s] = agents[i].actor.probabilities(s);
        eta[i].resize(agents[i].actor.params().size(), T);
      }
      LocalIndices s = env.initial_state();
      Eigen::VectorXd returns = Eigen::VectorXd::Zero(n);
      for (int k = 0; k < T; ++k) {
        for (AgentId i = 0; i < n; ++i) {
          a[i] = sample_categorical(probs[i][s[i]], action_rngs[i]);
          auto& sc = scores[i][s[i]][a[i]];
          if (sc.size() == 0) sc = agents[i].actor.score(s[i], a[i]);
          eta[i].col(k) = sc;
        }
        StepResult res = env.step(s, a, env_rng);
        for (AgentId i = 0; i < n; ++i) {
          st[i][k] = s[i];
          nx[i][k] = res.next[i];
          rw[i][k] = res.rewards[i];
        }
        returns += res.rewards;
        s = std::move(res.next);
      }
      Eigen::MatrixXd local(T, n);
      for (AgentId i = 0; i < n; ++i) {
        auto& critic = agents[i].critic;
        train_critic_batch(critic, st[i], rw[i], nx[i], cfg.gamma, cfg.critic_epochs,
                           cfg.target_refresh, cfg.critic_step.at(e));
        const Eigen::Map<const Eigen::VectorXd> r(rw[i].data(), T);
        local.col(i) = r + cfg.gamma * critic.values(nx[i]) - critic.values(st[i]);
        if (!local.col(i).allFinite()) throw NumericError("non-finite TD error in episode " + std::to_string(e));
        agents[i].etas.push(e, eta[i]);
      }
      const bool complete = apply(e, agg->exchange(e, local));
      record(e, returns, complete);
    }
  }

  void run_steps() {
    const int T = cfg.steps_per_episode;
    LocalIndices a(n);
    Eigen::MatrixXd local(1, n);
    Tick t = 0;
    for (int e = 0; e < cfg.episodes; ++e) {
      LocalIndices s = env.initial_state();
      Eigen::VectorXd returns = Eigen::VectorXd::Zero(n);
      bool complete = true;
      for (int k = 0; k < T; ++k, ++t) {
        std::vector<Eigen::MatrixXd> eta(n);
        for (AgentId i = 0; i < n; ++i) {
          a[i] = agents[i].actor.sample(s[i], action_rngs[i]);
          eta[i] = agents[i].actor.score(s[i], a[i]);
        }
        StepResult res = env.step(s, a, env_rng);
        const double beta = cfg.critic_step.at(t);
        for (AgentId i = 0; i < n; ++i) {
          auto& critic = agents[i].critic;
          const double delta = local_td_error(critic, s[i], res.rewards[i], res.next[i], cfg.gamma);
          critic_update(critic, delta, critic.grad(s[i]), beta);
          local(0, i) = delta;
          agents[i].etas.push(t, std::move(eta[i]));
        }
        complete = apply(t, agg->exchange(t, local)) && complete;
        returns += res.rewards;
        s = std::move(res.next);
      }
      record(e, returns, complete);
    }
  }

  RunMetrics finish() {
    metrics.max_payload_values = agg->max_payload_values();
    for (const auto& ag : agents) {
      metrics.final_actor_params.push_back(ag.actor.params());
      metrics.final_critic_params.push_back(ag.critic.params());
    }
    return std::move(metrics);
  }
};

}  // namespace

RunMetrics run(const RunConfig& config) {
  config.validate();
  Runner r(config);
  if (config.regime == Regime::episode)
    r.run_episodes();
  else
    r.run_steps();
  return r.finish();
}

RunMetrics run_dac_td(const RunConfig& config) {
  RunConfig c = config;
  c.algorithm = {AlgorithmKind::dac_td, 0};
  return run(c);
}

RunMetrics run_baseline(const RunConfig& config, AlgorithmSpec kind) {
  if (kind.kind == AlgorithmKind::dac_td) throw ArgumentError("dac_td is not a baseline");
  RunConfig c = config;
  c.algorithm = kind;
  return run(c);
}

void write_metrics_csv(std::ostream& out, const RunMetrics& m) {
  const std::size_t n = m.episodes.empty() ? 0 : m.episodes.front().agent_returns.size();
  out << "episode,team_return";
  for (std::size_t i = 1; i <= n; ++i) out << ",agent" << i << "_return";
  out << ",protocol_complete\n";
  const auto old = out.precision(17);
  for (const auto& e : m.episodes) {
    out << e.episode + 1 << ',' << e.team_return;
    for (double r : e.agent_returns) out << ',' << r;
    out << ',' << (e.protocol_complete ? 1 : 0) << '\n';
  }
  out.precision(old);
}

}  // namespace dactd
