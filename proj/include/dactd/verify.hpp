#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dactd/common.hpp"
#include "dactd/oracle.hpp"
#include "dactd/topology.hpp"
#include "dactd/transport.hpp"

namespace dactd {

// Random instances shared by the property suites and the tests.

/// Periodic schedule (period 1..3) on n agents whose first slot contains a
/// random directed Hamiltonian cycle plus random extra edges.
GraphSchedule random_connected_schedule(int n, Rng& rng);

/// Uniformly labelled random tree, as a bidirectional static graph.
GraphSchedule random_tree(int n, Rng& rng);

/// Random channel: T1 in [0, 3], T2 in [1, 3], drop probability in [0, 0.5].
ChannelModel random_channel(Rng& rng);

/// TD errors of varied sign and magnitude, ticks x agents.
Eigen::MatrixXd random_td_stream(int ticks, int n, Rng& rng);

struct PropertyResult {
  std::string name;
  bool pass = false;
  double observed = 0.0;   // worst case seen
  double tolerance = 0.0;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::uint64_t seed = 0;
  std::vector<PropertyResult> properties;
  bool pass() const;
};

void print_report(std::ostream& out, const SuiteReport& report);

SuiteReport verify_protocol(std::uint64_t seed, int cases = 1000);
SuiteReport verify_acyclic(std::uint64_t seed, int trees = 200);
SuiteReport verify_equivalence(std::uint64_t seed, int trees = 200);
SuiteReport verify_critic(std::uint64_t seed, Tick steps = 200'000);
SuiteReport verify_gradient(std::uint64_t seed, int draws = 100,
                            const std::vector<int>& actor_hidden = {10, 10},
                            const std::vector<int>& critic_hidden = {5, 5}, double leaky_slope = 0.3);
SuiteReport verify_bias(std::uint64_t seed, std::int64_t samples = 1'000'000);

const std::vector<std::string>& suite_names();
SuiteReport run_suite(const std::string& name, std::uint64_t seed);

/// Monte Carlo estimate of E[delta * grad log pi^i] along one trajectory of
/// the chain (after `burn_in` steps), with delta the team mean of
/// r^i + gamma V^i(s') - V^i(s) for the given critic values.
std::vector<Eigen::VectorXd> sampled_actor_direction(const Jommdp& env, const ExactModel& model,
                                                     const Policies& policies,
                                                     const CriticValues& values,
                                                     std::int64_t samples, Rng& rng,
                                                     std::int64_t burn_in = 1000);

/// ||a - b||_2 / ||b||_2 over the concatenation of all agents' vectors.
double relative_gap(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b);

}  // namespace dactd
