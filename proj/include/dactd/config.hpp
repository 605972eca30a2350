#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dactd/learner.hpp"

namespace dactd {

/// A batch of runs: every algorithm under every seed, sharing `base`.
struct ExperimentConfig {
  std::string env_name = "coupled_line";
  std::string graph_spec = "line";  // line | complete | star | ring | file:<path>
  RunConfig base;
  std::vector<AlgorithmSpec> algorithms{{AlgorithmKind::dac_td, 0}};
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "out";

  /// Validates `base` under every algorithm.
  void validate() const;
  /// The run for one (algorithm, seed) pair.
  RunConfig run_config(const AlgorithmSpec& algorithm, std::uint64_t seed) const;
};

/// Parses the INI experiment format (sections env, graph, channel, protocol,
/// algorithms, schedule, training, run). Relative graph file paths resolve
/// against `base_dir`. Throws ConfigurationError.
ExperimentConfig parse_experiment_config(std::istream& in, const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);

/// Writes the resolved configuration back in the same format.
void write_experiment_config(std::ostream& out, const ExperimentConfig& config);

/// "constant 0.01" or "polynomial 0.5 0.6".
StepSchedule parse_step_schedule(const std::string& text);

}  // namespace dactd
