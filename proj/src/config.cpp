#include "dactd/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace dactd {

namespace pt = boost::property_tree;

StepSchedule parse_step_schedule(const std::string& text) {
  std::istringstream in(text);
  std::string kind;
  double base = 0.0;
  double exponent = 0.0;
  in >> kind;
  StepSchedule s;
  if (kind == "constant" && (in >> base)) {
    s = StepSchedule::constant(base);
  } else if (kind == "polynomial" && (in >> base >> exponent)) {
    s = StepSchedule::polynomial(base, exponent);
  } else {
    throw ConfigurationError("bad step schedule '" + text +
                             "' (expected 'constant <a>' or 'polynomial <base> <exponent>')");
  }
  std::string rest;
  if (in >> rest) throw ConfigurationError("trailing text in step schedule '" + text + "'");
  s.validate();
  return s;
}

namespace {

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"env", {"name", "agents", "gamma"}},
      {"graph", {"kind", "file"}},
      {"channel", {"T1", "T2", "drop_prob", "delay_law", "seed"}},
      {"protocol", {"kind"}},
      {"algorithms", {"list"}},
      {"schedule", {"actor", "critic"}},
      {"training",
       {"regime", "episodes", "steps_per_episode", "critic_epochs", "target_refresh", "approximator",
        "actor_hidden", "critic_hidden", "leaky_slope", "theta_lower", "theta_upper"}},
      {"run", {"seeds", "out"}},
  };
  return keys;
}

template <typename T>
T get(const pt::ptree& tree, const std::string& path, T fallback) {
  const auto node = tree.get_optional<std::string>(path);
  if (!node) return fallback;
  std::istringstream in(*node);
  T value{};
  std::string rest;
  if (!(in >> value) || (in >> rest)) throw ConfigurationError("bad value for " + path + ": '" + *node + "'");
  return value;
}

std::string get_string(const pt::ptree& tree, const std::string& path, const std::string& fallback) {
  return tree.get<std::string>(path, fallback);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
    cur.clear();
  };
  for (char c : text) {
    if (c == sep || (sep == ' ' && c == '\t')) {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

std::vector<int> parse_sizes(const std::string& text, const std::string& what) {
  std::vector<int> sizes;
  for (const auto& tok : split(text, ' ')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || v < 1) throw ConfigurationError("bad layer size '" + tok + "' in " + what);
    sizes.push_back(v);
  }
  return sizes;
}

GraphSchedule build_graph(const std::string& spec, int n, const std::string& base_dir) {
  if (spec == "line") return line_graph(n);
  if (spec == "complete") return complete_graph(n);
  if (spec == "star") return star_graph(n, 0);
  if (spec == "ring") {
    std::vector<std::pair<AgentId, AgentId>> pairs;
    for (int i = 0; i + 1 < n; ++i) pairs.emplace_back(i, i + 1);
    if (n > 2) pairs.emplace_back(n - 1, 0);
    return undirected_graph(n, pairs);
  }
  const std::string prefix = "file:";
  if (spec.rfind(prefix, 0) == 0) {
    std::filesystem::path p = spec.substr(prefix.size());
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    return load_graph_schedule(p.string());
  }
  throw ConfigurationError("unknown graph kind '" + spec + "' (line, complete, star, ring or a file)");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (env_name != "coupled_line" && env_name != "micro")
    throw ConfigurationError("unknown environment '" + env_name + "'");
  if (algorithms.empty()) throw ConfigurationError("no algorithms selected");
  if (seeds.empty()) throw ConfigurationError("no seeds selected");
  for (const auto& a : algorithms) run_config(a, seeds.front()).validate();
}

RunConfig ExperimentConfig::run_config(const AlgorithmSpec& algorithm, std::uint64_t seed) const {
  RunConfig c = base;
  c.algorithm = algorithm;
  c.seed = seed;
  return c;
}

ExperimentConfig parse_experiment_config(std::istream& in, const std::string& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigurationError(std::string("config syntax: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = allowed_keys().find(section);
    if (it == allowed_keys().end()) throw ConfigurationError("unknown config section [" + section + "]");
    if (body.empty() && !body.data().empty())
      throw ConfigurationError("key '" + section + "' outside any section");
    for (const auto& [key, value] : body)
      if (!it->second.count(key)) throw ConfigurationError("unknown key '" + key + "' in [" + section + "]");
  }

  ExperimentConfig cfg;
  RunConfig& b = cfg.base;
  cfg.env_name = get_string(tree, "env.name", cfg.env_name);
  b.n_agents = get<int>(tree, "env.agents", cfg.env_name == "micro" ? 2 : b.n_agents);
  if (cfg.env_name == "micro" && b.n_agents != 2) throw ConfigurationError("the micro environment has 2 agents");
  b.gamma = get<double>(tree, "env.gamma", b.gamma);
  if (b.n_agents < 1) throw ConfigurationError("env.agents must be positive");

  cfg.graph_spec = get_string(tree, "graph.kind", "line");
  if (cfg.graph_spec == "file") {
    const auto file = tree.get_optional<std::string>("graph.file");
    if (!file) throw ConfigurationError("graph.kind = file needs graph.file");
    cfg.graph_spec = "file:" + *file;
  }
  b.graph = build_graph(cfg.graph_spec, b.n_agents, base_dir);

  b.channel.T1 = get<int>(tree, "channel.T1", b.channel.T1);
  b.channel.T2 = get<int>(tree, "channel.T2", b.channel.T2);
  b.channel.drop_prob = get<double>(tree, "channel.drop_prob", b.channel.drop_prob);
  b.channel.seed = get<std::uint64_t>(tree, "channel.seed", b.channel.seed);
  const auto law = get_string(tree, "channel.delay_law", "uniform");
  if (law == "uniform")
    b.channel.delay_law = DelayLaw::uniform;
  else if (law == "fixed")
    b.channel.delay_law = DelayLaw::fixed;
  else
    throw ConfigurationError("channel.delay_law must be uniform or fixed");

  const auto proto = get_string(tree, "protocol.kind", "alg1");
  if (proto == "alg1")
    b.protocol = ProtocolKind::alg1;
  else if (proto == "alg2")
    b.protocol = ProtocolKind::alg2;
  else if (proto == "centralized")
    b.protocol = ProtocolKind::centralized;
  else
    throw ConfigurationError("protocol.kind must be alg1, alg2 or centralized");

  if (const auto list = tree.get_optional<std::string>("algorithms.list")) {
    cfg.algorithms.clear();
    for (const auto& a : split(*list, ',')) cfg.algorithms.push_back(AlgorithmSpec::parse(a));
  }

  if (const auto s = tree.get_optional<std::string>("schedule.actor")) b.actor_step = parse_step_schedule(*s);
  if (const auto s = tree.get_optional<std::string>("schedule.critic")) b.critic_step = parse_step_schedule(*s);

  const auto regime = get_string(tree, "training.regime", "episode");
  if (regime == "episode")
    b.regime = Regime::episode;
  else if (regime == "step")
    b.regime = Regime::step;
  else
    throw ConfigurationError("training.regime must be episode or step");
  const auto approx = get_string(tree, "training.approximator", "mlp");
  if (approx == "mlp")
    b.approximator = Approximator::mlp;
  else if (approx == "tabular")
    b.approximator = Approximator::tabular;
  else
    throw ConfigurationError("training.approximator must be mlp or tabular");
  b.episodes = get<int>(tree, "training.episodes", b.episodes);
  b.steps_per_episode = get<int>(tree, "training.steps_per_episode", b.steps_per_episode);
  b.critic_epochs = get<int>(tree, "training.critic_epochs", b.critic_epochs);
  b.target_refresh = get<int>(tree, "training.target_refresh", b.target_refresh);
  if (const auto s = tree.get_optional<std::string>("training.actor_hidden"))
    b.actor_hidden = parse_sizes(*s, "training.actor_hidden");
  if (const auto s = tree.get_optional<std::string>("training.critic_hidden"))
    b.critic_hidden = parse_sizes(*s, "training.critic_hidden");
  b.leaky_slope = get<double>(tree, "training.leaky_slope", b.leaky_slope);
  b.box.lower = get<double>(tree, "training.theta_lower", b.box.lower);
  b.box.upper = get<double>(tree, "training.theta_upper", b.box.upper);

  if (const auto s = tree.get_optional<std::string>("run.seeds")) {
    cfg.seeds.clear();
    for (const auto& tok : split(*s, ' ')) {
      std::istringstream v(tok);
      std::uint64_t seed = 0;
      std::string rest;
      if (!(v >> seed) || (v >> rest)) throw ConfigurationError("bad seed '" + tok + "'");
      cfg.seeds.push_back(seed);
    }
  }
  cfg.out_dir = get_string(tree, "run.out", cfg.out_dir);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open config '" + path + "'");
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_experiment_config(in, dir.empty() ? "." : dir.string());
}

void write_experiment_config(std::ostream& out, const ExperimentConfig& c) {
  const RunConfig& b = c.base;
  auto sizes = [](const std::vector<int>& v) {
    std::string s;
    for (int x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
    return s;
  };
  const auto old = out.precision(17);
  out << "[env]\nname = " << c.env_name << "\nagents = " << b.n_agents << "\ngamma = " << b.gamma
      << "\n\n[graph]\n";
  if (c.graph_spec.rfind("file:", 0) == 0)
    out << "kind = file\nfile = " << c.graph_spec.substr(5) << '\n';
  else
    out << "kind = " << c.graph_spec << '\n';
  out << "\n[channel]\nT1 = " << b.channel.T1 << "\nT2 = " << b.channel.T2
      << "\ndrop_prob = " << b.channel.drop_prob
      << "\ndelay_law = " << (b.channel.delay_law == DelayLaw::uniform ? "uniform" : "fixed")
      << "\nseed = " << b.channel.seed << "\n\n[protocol]\nkind = " << to_string(b.protocol)
      << "\n\n[algorithms]\nlist = ";
  for (std::size_t k = 0; k < c.algorithms.size(); ++k) out << (k ? ", " : "") << c.algorithms[k].label();
  out << "\n\n[schedule]\nactor = " << b.actor_step.describe() << "\ncritic = " << b.critic_step.describe()
      << "\n\n[training]\nregime = " << to_string(b.regime) << "\nepisodes = " << b.episodes
      << "\nsteps_per_episode = " << b.steps_per_episode << "\ncritic_epochs = " << b.critic_epochs
      << "\ntarget_refresh = " << b.target_refresh << "\napproximator = " << to_string(b.approximator)
      << "\nactor_hidden = " << sizes(b.actor_hidden) << "\ncritic_hidden = " << sizes(b.critic_hidden)
      << "\nleaky_slope = " << b.leaky_slope << "\ntheta_lower = " << b.box.lower
      << "\ntheta_upper = " << b.box.upper << "\n\n[run]\nseeds =";
  for (auto s : c.seeds) out << ' ' << s;
  out << "\nout = " << c.out_dir << '\n';
  out.precision(old);
}

}  // namespace dactd
