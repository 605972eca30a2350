#include "dactd/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dactd/learner.hpp"
#include "dactd/protocol.hpp"

namespace dactd {

GraphSchedule random_connected_schedule(int n, Rng& rng) {
  const int period = static_cast<int>(uniform_int(rng, 1, 3));
  const double extra = 0.3 * uniform01(rng);
  std::vector<EdgeSet> slots(period);
  std::vector<AgentId> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int k = n - 1; k > 0; --k) std::swap(order[k], order[uniform_int(rng, 0, k)]);
  for (int k = 0; k < n && n > 1; ++k) slots[0].push_back({order[k], order[(k + 1) % n]});
  for (auto& slot : slots)
    for (AgentId a = 0; a < n; ++a)
      for (AgentId b = 0; b < n; ++b)
        if (a != b && uniform01(rng) < extra) slot.push_back({a, b});
  for (auto& slot : slots) {
    std::sort(slot.begin(), slot.end());
    slot.erase(std::unique(slot.begin(), slot.end()), slot.end());
  }
  if (period == 1) return GraphSchedule::make_static(n, std::move(slots[0]));
  return GraphSchedule::make_periodic(n, std::move(slots));
}

GraphSchedule random_tree(int n, Rng& rng) {
  std::vector<AgentId> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int k = n - 1; k > 0; --k) std::swap(order[k], order[uniform_int(rng, 0, k)]);
  std::vector<std::pair<AgentId, AgentId>> links;
  for (int k = 1; k < n; ++k)
    links.emplace_back(order[k], order[static_cast<std::size_t>(uniform_int(rng, 0, k - 1))]);
  return undirected_graph(n, links);
}

ChannelModel random_channel(Rng& rng) {
  ChannelModel ch;
  ch.T1 = static_cast<int>(uniform_int(rng, 0, 3));
  ch.T2 = static_cast<int>(uniform_int(rng, 1, 3));
  ch.drop_prob = 0.5 * uniform01(rng);
  ch.delay_law = uniform01(rng) < 0.5 ? DelayLaw::uniform : DelayLaw::fixed;
  ch.seed = rng();
  return ch;
}

Eigen::MatrixXd random_td_stream(int ticks, int n, Rng& rng) {
  Eigen::MatrixXd d(ticks, n);
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    const double mag = std::pow(10.0, static_cast<double>(uniform_int(rng, -3, 2)));
    d.data()[k] = (2.0 * uniform01(rng) - 1.0) * mag;
  }
  return d;
}

bool SuiteReport::pass() const {
  return std::all_of(properties.begin(), properties.end(), [](const auto& p) { return p.pass; });
}

void print_report(std::ostream& out, const SuiteReport& report) {
  for (const auto& p : report.properties) {
    out << (p.pass ? "PASS " : "FAIL ") << report.suite << '.' << p.name << "  worst=" << p.observed
        << "  tol=" << p.tolerance;
    if (!p.detail.empty()) out << "  (" << p.detail << ')';
    out << '\n';
  }
  out << report.suite << ": " << (report.pass() ? "pass" : "FAIL") << " (seed " << report.seed
      << ")\n";
}

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

PropertyResult at_most(std::string name, double observed, double tol, std::string detail = {}) {
  return {std::move(name), observed <= tol, observed, tol, std::move(detail)};
}

}  // namespace

SuiteReport verify_protocol(std::uint64_t seed, int cases) {
  SuiteReport rep{"protocol", seed, {}};
  double worst = 0.0;
  long mismatches = 0;
  long checked = 0;
  bool guarantee = true;
  std::string first_failure;
  for (int c = 0; c < cases; ++c) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    const int n = static_cast<int>(uniform_int(rng, 2, 10));
    const auto graph = random_connected_schedule(n, rng);
    const auto channel = random_channel(rng);
    const int K = latency_bound(graph, channel.T1, channel.T2);
    const int ticks = 2 * K + 8;
    const auto deltas = random_td_stream(ticks, n, rng);
    GeneralAggregation agg(graph, channel, K);
    for (int t = 0; t < ticks; ++t) {
      const auto out = agg.exchange(t, deltas.row(t));
      if (t < K) continue;
      const double expect = centralized_team_td(deltas.row(t - K))[0];
      for (AgentId i = 0; i < n; ++i) {
        ++checked;
        const double got = (*out)(0, i);
        worst = std::max(worst, std::abs(got - expect));
        if (!same_bits(got, expect)) {
          ++mismatches;
          if (first_failure.empty())
            first_failure = "case " + std::to_string(c) + " tick " + std::to_string(t);
        }
      }
    }
    guarantee = guarantee && check_delivery_guarantee(agg.channel().trace(), channel.T1, channel.T2);
  }
  rep.properties.push_back(
      {"bitwise_team_td", mismatches == 0, worst, 0.0,
       std::to_string(checked) + " reads over " + std::to_string(cases) + " cases" +
           (first_failure.empty() ? "" : ", first mismatch at " + first_failure)});
  rep.properties.push_back({"delivery_guarantee", guarantee, 0.0, 0.0, "T1/T2 bounds on every edge"});
  return rep;
}

SuiteReport verify_acyclic(std::uint64_t seed, int trees) {
  SuiteReport rep{"acyclic", seed, {}};
  double worst_readout = 0.0;
  double worst_invariant = 0.0;
  bool invariant = true;
  for (int c = 0; c < trees; ++c) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    const int n = static_cast<int>(uniform_int(rng, 2, 12));
    const auto tree = random_tree(n, rng);
    const int K = latency_bound(tree, 0, 1);
    const int ticks = 2 * K + 6;
    const auto deltas = random_td_stream(ticks, n, rng);
    AcyclicAggregation agg(tree, unit_delay_channel(rng()), K);
    agg.record_trace(true);
    for (int t = 0; t < ticks; ++t) {
      const auto out = agg.exchange(t, deltas.row(t));
      if (t < K) continue;
      const double expect = centralized_team_td(deltas.row(t - K))[0];
      for (AgentId i = 0; i < n; ++i)
        worst_readout = std::max(worst_readout, std::abs((*out)(0, i) - expect));
    }
    const auto inv = partial_sum_invariant(agg.trace(), tree, 1e-9);
    invariant = invariant && inv.holds;
    worst_invariant = std::max(worst_invariant, inv.worst_error);
  }
  rep.properties.push_back(at_most("readout_matches_mean", worst_readout, 1e-9,
                                   std::to_string(trees) + " trees"));
  rep.properties.push_back(
      {"partial_sum_invariant", invariant && worst_invariant <= 1e-9, worst_invariant, 1e-9, ""});
  return rep;
}

SuiteReport verify_equivalence(std::uint64_t seed, int trees) {
  SuiteReport rep{"equivalence", seed, {}};
  double worst = 0.0;
  bool payload = true;
  std::string payload_detail;
  for (int c = 0; c < trees; ++c) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    const int n = static_cast<int>(uniform_int(rng, 2, 12));
    const auto tree = random_tree(n, rng);
    const int K = latency_bound(tree, 0, 1);
    const int ticks = 2 * K + 6;
    const auto deltas = random_td_stream(ticks, n, rng);
    const auto channel = unit_delay_channel(rng());
    GeneralAggregation general(tree, channel, K);
    AcyclicAggregation acyclic(tree, channel, K);
    for (int t = 0; t < ticks; ++t) {
      const auto a = general.exchange(t, deltas.row(t));
      const auto b = acyclic.exchange(t, deltas.row(t));
      if (a.has_value() != b.has_value()) {
        worst = std::numeric_limits<double>::infinity();
        continue;
      }
      if (a) worst = std::max(worst, (*a - *b).cwiseAbs().maxCoeff());
    }
    const auto p1 = general.max_payload_values();
    const auto p2 = acyclic.max_payload_values();
    if (p1 != static_cast<std::size_t>(K * n) || p2 != static_cast<std::size_t>(K)) {
      payload = false;
      if (payload_detail.empty())
        payload_detail = "tree " + std::to_string(c) + ": alg1 " + std::to_string(p1) + ", alg2 " +
                         std::to_string(p2) + ", K " + std::to_string(K) + ", N " + std::to_string(n);
    }
  }
  rep.properties.push_back(at_most("alg1_equals_alg2", worst, 1e-9, std::to_string(trees) + " trees"));
  rep.properties.push_back({"payload_K_N_vs_K", payload, 0.0, 0.0, payload_detail});
  return rep;
}

SuiteReport verify_critic(std::uint64_t seed, Tick steps) {
  SuiteReport rep{"critic", seed, {}};
  const auto env = micro_env();
  RunConfig cfg;
  cfg.n_agents = 2;
  cfg.graph = line_graph(2);
  cfg.algorithm = {AlgorithmKind::independent_ac, 0};
  cfg.regime = Regime::step;
  cfg.approximator = Approximator::tabular;
  cfg.actor_step = StepSchedule::constant(0.0);
  cfg.critic_step = StepSchedule::polynomial(0.5, 0.6);
  cfg.episodes = 1;
  cfg.steps_per_episode = static_cast<int>(steps);
  cfg.seed = seed;
  const auto metrics = run(cfg);

  const auto model = enumerate(env, uniform_policy(env));
  double gap = 0.0;
  for (AgentId i = 0; i < 2; ++i) {
    const auto Phi = local_feature_matrix(model, i, FeatureMap<double>::tabular(2));
    const auto v = critic_fixed_point(model, i, Phi);
    gap = std::max(gap, (metrics.final_critic_params[i] - v).cwiseAbs().maxCoeff());
  }
  rep.properties.push_back(at_most("td0_reaches_fixed_point", gap, 1e-2,
                                   std::to_string(steps) + " steps, beta = 0.5/(t+1)^0.6"));
  const double top = critic_ode_eigenvalues(model).real().maxCoeff();
  rep.properties.push_back(at_most("ode_eigenvalues_negative", top, -1e-6, "max real part"));
  return rep;
}

SuiteReport verify_gradient(std::uint64_t seed, int draws, const std::vector<int>& actor_hidden,
                            const std::vector<int>& critic_hidden, double leaky_slope) {
  SuiteReport rep{"gradient", seed, {}};
  Rng rng(derive_seed(seed, 17));
  double worst_actor = 0.0;
  double worst_critic = 0.0;
  const auto features = FeatureMap<double>::tabular(2);
  for (int k = 0; k < draws; ++k) {
    SoftmaxPolicy<double> actor(features, actor_hidden, 2, leaky_slope);
    MlpCritic<double> critic(features, critic_hidden, leaky_slope);
    actor.net().init_uniform(rng);
    critic.net().init_uniform(rng);
    // non-zero biases so every unit is exercised
    for (auto* p : {&actor.params(), &critic.params()})
      for (Eigen::Index j = 0; j < p->size(); ++j) (*p)[j] += 0.2 * (2.0 * uniform01(rng) - 1.0);
    const int s = static_cast<int>(uniform_int(rng, 0, 1));
    const int a = static_cast<int>(uniform_int(rng, 0, 1));

    auto lp = [&](const Eigen::VectorXd& th) {
      auto copy = actor;
      copy.params() = th;
      return copy.log_prob(s, a);
    };
    const auto fd_a = finite_difference_gradient<double>(lp, actor.params(), 1e-5);
    worst_actor = std::max(worst_actor, relative_error<double>(actor.score(s, a), fd_a));

    auto val = [&](const Eigen::VectorXd& v) {
      auto copy = critic;
      copy.params() = v;
      return copy.value(s);
    };
    const auto fd_c = finite_difference_gradient<double>(val, critic.params(), 1e-5);
    worst_critic = std::max(worst_critic, relative_error<double>(critic.grad(s), fd_c));
  }
  rep.properties.push_back(at_most("actor_score_vs_fd", worst_actor, 1e-4, std::to_string(draws) + " draws"));
  rep.properties.push_back(at_most("critic_grad_vs_fd", worst_critic, 1e-4, std::to_string(draws) + " draws"));
  return rep;
}

std::vector<Eigen::VectorXd> sampled_actor_direction(const Jommdp& env, const ExactModel& model,
                                                     const Policies& policies,
                                                     const CriticValues& values,
                                                     std::int64_t samples, Rng& rng,
                                                     std::int64_t burn_in) {
  const int n = env.n_agents();
  std::vector<std::vector<Eigen::VectorXd>> probs(n);
  std::vector<std::vector<std::vector<Eigen::VectorXd>>> scores(n);
  for (AgentId i = 0; i < n; ++i) {
    for (int s = 0; s < env.n_local_states(i); ++s) {
      probs[i].push_back(policies[i].probabilities(s));
      scores[i].emplace_back();
      for (int a = 0; a < env.n_local_actions(i); ++a) scores[i][s].push_back(policies[i].score(s, a));
    }
  }
  std::vector<Eigen::VectorXd> acc;
  for (AgentId i = 0; i < n; ++i) acc.push_back(Eigen::VectorXd::Zero(scores[i][0][0].size()));

  LocalIndices s = env.initial_state();
  LocalIndices a(n);
  for (std::int64_t t = 0; t < burn_in + samples; ++t) {
    for (AgentId i = 0; i < n; ++i) a[i] = sample_categorical(probs[i][s[i]], rng);
    StepResult res = env.step(s, a, rng);
    if (t >= burn_in) {
      const auto x = model.states.encode(s);
      const auto y = model.states.encode(res.next);
      const double delta =
          (res.rewards.array() + model.gamma * values.row(y).transpose().array() -
           values.row(x).transpose().array())
              .mean();
      for (AgentId i = 0; i < n; ++i) acc[i] += delta * scores[i][s[i]][a[i]];
    }
    s = std::move(res.next);
  }
  for (auto& g : acc) g /= static_cast<double>(samples);
  return acc;
}

double relative_gap(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]).squaredNorm();
    den += b[i].squaredNorm();
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

SuiteReport verify_bias(std::uint64_t seed, std::int64_t samples) {
  SuiteReport rep{"bias", seed, {}};
  const auto env = micro_env();
  Rng rng(derive_seed(seed, 23));
  Policies policies;
  for (AgentId i = 0; i < env.n_agents(); ++i) {
    policies.emplace_back(FeatureMap<double>::tabular(2), std::vector<int>{}, 2);
    for (Eigen::Index j = 0; j < policies.back().params().size(); ++j)
      policies.back().params()[j] = 2.0 * uniform01(rng) - 1.0;
  }
  const auto model = enumerate(env, policy_tables(policies));
  const auto exact = advantage_gradient(env, model, policies);

  CriticValues full(model.n_states(), env.n_agents());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(model.n_states(), model.n_states());
  for (AgentId i = 0; i < env.n_agents(); ++i) full.col(i) = critic_fixed_point(model, i, I);

  const auto sampled_full = sampled_actor_direction(env, model, policies, full, samples, rng);
  rep.properties.push_back(at_most("full_state_direction_vs_exact", relative_gap(sampled_full, exact),
                                   0.02, std::to_string(samples) + " samples"));

  const auto residual = gradient_bias(env, model, policies, full).total();
  double worst_zero = 0.0;
  for (const auto& r : residual) worst_zero = std::max(worst_zero, r.cwiseAbs().maxCoeff());
  rep.properties.push_back(at_most("full_state_bias_zero", worst_zero, 1e-10));

  const auto local = local_critic_values(env, model);
  const auto sampled_local = sampled_actor_direction(env, model, policies, local, samples, rng);
  std::vector<Eigen::VectorXd> measured;
  for (std::size_t i = 0; i < exact.size(); ++i) measured.push_back(sampled_local[i] - exact[i]);
  const auto computed = gradient_bias(env, model, policies, local).total();
  rep.properties.push_back(at_most("local_bias_vs_exhaustive", relative_gap(measured, computed), 0.05,
                                   std::to_string(samples) + " samples"));
  return rep;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"protocol", "acyclic", "equivalence",
                                              "critic",   "gradient", "bias"};
  return names;
}

SuiteReport run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "protocol") return verify_protocol(seed);
  if (name == "acyclic") return verify_acyclic(seed);
  if (name == "equivalence") return verify_equivalence(seed);
  if (name == "critic") return verify_critic(seed);
  if (name == "gradient") return verify_gradient(seed);
  if (name == "bias") return verify_bias(seed);
  throw ArgumentError("unknown suite '" + name + "'");
}

}  // namespace dactd
