// dactd: run experiments, property suites and exact-oracle dumps.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "dactd/config.hpp"
#include "dactd/learner.hpp"
#include "dactd/oracle.hpp"
#include "dactd/verify.hpp"

namespace fs = std::filesystem;
using namespace dactd;

namespace {

enum Exit { ok = 0, validation = 1, protocol_violation = 2, property_failure = 3 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool dry_run = false;
  unsigned jobs = 1;
  std::string suite = "all";
  std::string policy = "uniform";
  int draws = 100;
};

ExperimentConfig resolve(const Options& opt) {
  ExperimentConfig cfg = opt.config.empty() ? ExperimentConfig{} : load_experiment_config(opt.config);
  if (opt.seed) cfg.seeds = {*opt.seed};
  if (opt.out) cfg.out_dir = *opt.out;
  cfg.validate();
  return cfg;
}

std::string file_label(const AlgorithmSpec& a) {
  std::string s = a.label();
  std::replace(s.begin(), s.end(), ':', '-');
  return s;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw ConfigurationError("cannot write " + p.string());
  return f;
}

int cmd_run(const Options& opt) {
  const auto cfg = resolve(opt);
  if (opt.dry_run) {
    write_experiment_config(std::cout, cfg);
    return ok;
  }
  fs::create_directories(cfg.out_dir);

  struct Job {
    AlgorithmSpec algorithm;
    std::uint64_t seed;
    double final_mean = 0.0;
  };
  std::vector<Job> jobs;
  for (const auto& a : cfg.algorithms)
    for (auto s : cfg.seeds) jobs.push_back({a, s});

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t k; (k = next++) < jobs.size();) {
      {
        std::lock_guard lk(err_mu);
        if (first_error) return;
      }
      try {
        auto& job = jobs[k];
        const auto metrics = run(cfg.run_config(job.algorithm, job.seed));
        job.final_mean = metrics.final_mean(100);
        auto f = open_out(fs::path(cfg.out_dir) /
                          (file_label(job.algorithm) + "_seed" + std::to_string(job.seed) + ".csv"));
        write_metrics_csv(f, metrics);
        std::lock_guard lk(log_mu);
        std::cout << job.algorithm.label() << " seed " << job.seed << ": final mean team return "
                  << job.final_mean << '\n';
      } catch (...) {
        std::lock_guard lk(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(opt.jobs, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  auto f = open_out(fs::path(cfg.out_dir) / "summary.csv");
  f << "algorithm,seed,final_mean_team_return\n";
  f.precision(17);
  for (const auto& job : jobs) f << job.algorithm.label() << ',' << job.seed << ',' << job.final_mean << '\n';
  std::cout << "wrote " << (fs::path(cfg.out_dir) / "summary.csv").string() << '\n';
  return ok;
}

int cmd_verify(const Options& opt) {
  std::vector<std::string> suites;
  if (opt.suite == "all") {
    suites = suite_names();
  } else {
    if (std::find(suite_names().begin(), suite_names().end(), opt.suite) == suite_names().end())
      throw ArgumentError("unknown suite '" + opt.suite + "'");
    suites = {opt.suite};
  }
  const std::uint64_t seed = opt.seed.value_or(0);
  if (opt.out) fs::create_directories(*opt.out);
  bool pass = true;
  for (const auto& name : suites) {
    const auto rep = run_suite(name, seed);
    print_report(std::cout, rep);
    pass = pass && rep.pass();
    if (opt.out) {
      auto f = open_out(fs::path(*opt.out) / ("verify_" + name + ".csv"));
      f << "suite,property,pass,observed,tolerance,seed\n";
      f.precision(17);
      for (const auto& p : rep.properties)
        f << name << ',' << p.name << ',' << (p.pass ? 1 : 0) << ',' << p.observed << ',' << p.tolerance
          << ',' << seed << '\n';
    }
  }
  return pass ? ok : property_failure;
}

int cmd_oracle(const Options& opt) {
  const auto cfg = resolve(opt);
  const CoupledLineEnv env(cfg.base.n_agents, cfg.base.gamma);
  PolicyTables tables;
  if (opt.policy == "uniform") {
    tables = uniform_policy(env);
  } else if (opt.policy == "initial") {
    RunConfig rc = cfg.run_config({AlgorithmKind::independent_ac, 0}, cfg.seeds.front());
    rc.episodes = 0;
    const auto m = run(rc);
    for (AgentId i = 0; i < env.n_agents(); ++i) {
      SoftmaxPolicy<double> p(FeatureMap<double>::tabular(2),
                              rc.approximator == Approximator::mlp ? rc.actor_hidden : std::vector<int>{},
                              2, rc.leaky_slope);
      p.params() = m.final_actor_params[i];
      tables.push_back(p.table());
    }
  } else {
    throw ArgumentError("--policy must be uniform or initial");
  }
  const auto model = enumerate(env, tables);
  const auto values = true_critic_values(model);
  const auto local = local_critic_values(env, model);
  const auto eig = critic_ode_eigenvalues(model);

  std::cout.precision(10);
  std::cout << "states " << model.n_states() << ", average team reward " << average_team_reward(model)
            << ", max eigenvalue real part of D(gamma P - I) " << eig.real().maxCoeff() << '\n';
  for (AgentId i = 0; i < env.n_agents(); ++i) {
    const auto Phi = local_feature_matrix(model, i, FeatureMap<double>::tabular(2));
    const auto v = critic_fixed_point(model, i, Phi);
    std::cout << "agent " << i + 1 << " local critic fixed point " << v.transpose()
              << "  residual " << fixed_point_residual(model, i, Phi, v) << '\n';
  }
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "oracle_model.csv");
    write_model_csv(f, model, values);
  }
  {
    auto f = open_out(dir / "oracle_local_critic.csv");
    write_model_csv(f, model, local);
  }
  {
    auto f = open_out(dir / "oracle_transition.csv");
    f.precision(17);
    for (int x = 0; x < model.n_states(); ++x)
      for (int y = 0; y < model.n_states(); ++y) f << model.P(x, y) << (y + 1 < model.n_states() ? ',' : '\n');
  }
  std::cout << "wrote oracle_model.csv, oracle_local_critic.csv, oracle_transition.csv to " << dir.string() << '\n';
  return ok;
}

int cmd_grad_check(const Options& opt) {
  const auto cfg = resolve(opt);
  const auto rep = verify_gradient(opt.seed.value_or(cfg.seeds.front()), opt.draws, cfg.base.actor_hidden,
                                   cfg.base.critic_hidden, cfg.base.leaky_slope);
  print_report(std::cout, rep);
  return rep.pass() ? ok : property_failure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized actor-critic with TD error aggregation"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  std::string out;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Override the seed list with one seed");
    sub->add_option("--out", out, "Output directory");
  };

  auto* run_cmd = app.add_subcommand("run", "Run every (algorithm, seed) pair of a config");
  run_cmd->add_option("--config", opt.config, "Experiment config (INI)")->required()->check(CLI::ExistingFile);
  run_cmd->add_flag("--dry-run", opt.dry_run, "Validate and print the resolved config");
  run_cmd->add_option("--jobs", opt.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  add_common(run_cmd);

  auto* verify_cmd = app.add_subcommand("verify", "Run a property suite");
  verify_cmd->add_option("suite", opt.suite, "protocol, acyclic, equivalence, critic, gradient, bias or all");
  add_common(verify_cmd);

  auto* oracle_cmd = app.add_subcommand("oracle", "Dump exact quantities for a config's environment");
  oracle_cmd->add_option("--config", opt.config, "Experiment config (INI)")->check(CLI::ExistingFile);
  oracle_cmd->add_option("--policy", opt.policy, "uniform or initial");
  add_common(oracle_cmd);

  auto* grad_cmd = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients");
  grad_cmd->add_option("--config", opt.config, "Experiment config (INI)")->check(CLI::ExistingFile);
  grad_cmd->add_option("--draws", opt.draws, "Random draws")->check(CLI::PositiveNumber);
  add_common(grad_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : validation;
  }

  for (auto* sub : {run_cmd, verify_cmd, oracle_cmd, grad_cmd}) {
    if (sub->count("--seed")) opt.seed = seed;
    if (sub->count("--out")) opt.out = out;
  }

  try {
    if (*run_cmd) return cmd_run(opt);
    if (*verify_cmd) return cmd_verify(opt);
    if (*oracle_cmd) return cmd_oracle(opt);
    if (*grad_cmd) return cmd_grad_check(opt);
  } catch (const IncompleteAggregationError& e) {
    std::cerr << "error: protocol incomplete at tick " << e.tick() << ": " << e.what() << '\n';
    return protocol_violation;
  } catch (const ProtocolCorruptionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return protocol_violation;
  } catch (const TransportError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return protocol_violation;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return protocol_violation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return validation;
  }
  return ok;
}
