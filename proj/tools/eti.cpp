#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eti/io.hpp"

namespace fs = std::filesystem;
using eti::json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::string spec_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_flag;
  int threads = 1;

  std::int64_t n = 100000;
  int reps = 100;
  std::int64_t checkpoint_every = 0;

  std::string policy = "markov";
  std::vector<double> p1;
  int xr = 0;
  double pr = 0.5;
  std::int64_t block = 100;
  int chain = 1;
  bool strict_start = false;

  std::string algo = "eti";
  std::string resolve = "power2";
  double beta = 0.5;
  double epsilon = 1e-6;
  std::optional<int> regenerative;
  bool clt = false;

  std::vector<int> s_values;
  double q1 = 0.5;
  double q2 = 0.5;
  bool no_isolation = false;

  std::uint64_t seed = 0;
  json config = json::object();
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    json doc = json::parse(in);
    if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
    return doc;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

bool given(const CLI::App& app, const char* flag) {
  const CLI::Option* opt = app.get_option_no_throw(std::string("--") + flag);
  return opt != nullptr && opt->count() > 0;
}

// Fills `target` from the config document unless the flag was given.
template <class T>
void fill(const CLI::App& app, const char* flag, T& target, const json& config, const char* key) {
  if (given(app, flag) || !config.contains(key)) return;
  try {
    target = config.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key \"") + key + "\": " + e.what());
  }
}

template <class T>
void fill_optional(const CLI::App& app, const char* flag, std::optional<T>& target, const json& config,
                   const char* key) {
  if (given(app, flag) || !config.contains(key)) return;
  T value{};
  fill(app, flag, value, config, key);
  target = value;
}

void merge_config(const CLI::App& app, Options& o) {
  const json& c = o.config;
  fill(app, "spec", o.spec_path, c, "spec");
  fill(app, "out", o.out_dir, c, "out");
  fill(app, "threads", o.threads, c, "threads");
  fill(app, "n", o.n, c, "n");
  fill(app, "reps", o.reps, c, "reps");
  fill(app, "checkpoint-every", o.checkpoint_every, c, "checkpoint_every");
  fill(app, "policy", o.policy, c, "policy");
  fill(app, "p1", o.p1, c, "p1");
  fill(app, "xr", o.xr, c, "xr");
  fill(app, "pr", o.pr, c, "pr");
  fill(app, "block", o.block, c, "block");
  fill(app, "chain", o.chain, c, "chain");
  fill(app, "algo", o.algo, c, "algo");
  fill(app, "resolve", o.resolve, c, "resolve");
  fill(app, "beta", o.beta, c, "beta");
  fill(app, "epsilon", o.epsilon, c, "epsilon");
  fill_optional(app, "regenerative", o.regenerative, c, "regenerative");
  fill(app, "s", o.s_values, c, "s");
  fill(app, "q1", o.q1, c, "q1");
  fill(app, "q2", o.q2, c, "q2");

  // Seed precedence: flag, then ETI_SEED, then config, then 0.
  if (o.seed_flag) {
    o.seed = *o.seed_flag;
  } else if (const char* env = std::getenv("ETI_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      o.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("ETI_SEED is not an unsigned integer: ") + env);
    }
  } else if (c.contains("seed")) {
    try {
      o.seed = c.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key \"seed\": ") + e.what());
    }
  }
  if (o.threads < 1) throw ConfigError("--threads must be >= 1");
}

eti::ChainSpec load(const Options& o) {
  if (o.spec_path.empty()) throw ConfigError("--spec is required");
  if (!fs::exists(o.spec_path)) throw ConfigError("spec file does not exist: " + o.spec_path);
  return eti::load_spec(o.spec_path);
}

eti::ResolveSchedule parse_resolve(const std::string& s) {
  if (s == "power2") return eti::ResolveSchedule::power_of_two;
  if (s == "every-step") return eti::ResolveSchedule::every_step;
  throw ConfigError("--resolve must be power2 or every-step");
}

eti::Chain parse_chain(int c) {
  if (c != 1 && c != 2) throw ConfigError("--chain must be 1 or 2");
  return c == 1 ? eti::Chain::first : eti::Chain::second;
}

struct BuiltDesign {
  eti::SamplingDesign design;
  json description;
};

BuiltDesign build_design(const Options& o, const eti::ChainSpec& spec) {
  const int n = spec.n_states();
  auto check_xr = [&] {
    if (o.xr < 0 || o.xr >= n) throw ConfigError("--xr out of range");
  };
  if (o.policy == "markov") {
    if (static_cast<int>(o.p1.size()) != n) throw ConfigError("--p1 needs one probability per state");
    return {eti::PolicyConfig{eti::StationaryMarkov{o.p1}}, {{"policy", "markov"}, {"p1", o.p1}}};
  }
  if (o.policy == "optimal") {
    const eti::ChainAnalysis a = eti::analyze(spec);
    eti::DesignOptions options;
    options.epsilon = o.epsilon;
    const auto sol = eti::solve_optimal_kappa(a.pi, a.sigma2, spec.P(eti::Chain::first),
                                              spec.P(eti::Chain::second), options);
    return {eti::PolicyConfig{eti::StationaryMarkov{sol.p_star}},
            {{"policy", "optimal"}, {"p1", sol.p_star}, {"epsilon", o.epsilon}}};
  }
  if (o.policy == "regenerative") {
    check_xr();
    return {eti::PolicyConfig{eti::Regenerative{o.xr, o.pr, o.strict_start}},
            {{"policy", "regenerative"}, {"xr", o.xr}, {"pr", o.pr}}};
  }
  if (o.policy == "regenerative-optimal") {
    check_xr();
    const auto d = eti::optimal_regenerative(eti::analyze(spec), o.xr);
    return {eti::PolicyConfig{eti::Regenerative{o.xr, d.p_star, o.strict_start}},
            {{"policy", "regenerative-optimal"}, {"xr", o.xr}, {"pr", d.p_star}}};
  }
  if (o.policy == "switchback") {
    return {eti::PolicyConfig{eti::Switchback{o.block}}, {{"policy", "switchback"}, {"block", o.block}}};
  }
  if (o.policy == "single") {
    return {eti::PolicyConfig{eti::SingleChain{parse_chain(o.chain)}}, {{"policy", "single"}, {"chain", o.chain}}};
  }
  if (o.policy == "coop") {
    return {eti::PolicyConfig{eti::CoopAlternating{}}, {{"policy", "coop"}}};
  }
  if (o.policy == "eti") {
    eti::OnlineEtiConfig c{parse_resolve(o.resolve), o.beta, o.epsilon};
    return {c, {{"policy", "eti"}, {"resolve", o.resolve}, {"beta", o.beta}, {"epsilon", o.epsilon}}};
  }
  if (o.policy == "eti2") {
    check_xr();
    return {eti::OnlineEti2Config{o.xr, o.beta}, {{"policy", "eti2"}, {"xr", o.xr}, {"beta", o.beta}}};
  }
  throw ConfigError("unknown --policy " + o.policy);
}

json provenance(const json& config, std::uint64_t seed) {
  return {{"config_hash", eti::config_hash(config)}, {"seed", seed}, {"config", config}};
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

// Writes `doc` to out_dir/name, or to stdout when no directory was given.
void emit(const Options& o, const std::string& name, const json& doc) {
  const std::string text = doc.dump(2) + "\n";
  if (o.out_dir.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(o.out_dir);
  write_file(fs::path(o.out_dir) / name, text);
}

json spec_config(const Options& o, const std::string& command) {
  return {{"command", command}, {"spec", o.spec_path}};
}

int cmd_analyze(const Options& o) {
  const eti::ChainSpec spec = load(o);
  json cfg = spec_config(o, "analyze");
  json doc = provenance(cfg, o.seed);
  doc["analysis"] = eti::analysis_to_json(eti::analyze(spec));
  emit(o, "analysis.json", doc);
  return 0;
}

int cmd_design(const Options& o) {
  const eti::ChainSpec spec = load(o);
  const eti::ChainAnalysis a = eti::analyze(spec);
  json cfg = spec_config(o, "design");
  cfg["epsilon"] = o.epsilon;
  if (o.regenerative) cfg["regenerative"] = *o.regenerative;
  eti::DesignOptions options;
  options.epsilon = o.epsilon;
  const auto sol =
      eti::solve_optimal_kappa(a.pi, a.sigma2, spec.P(eti::Chain::first), spec.P(eti::Chain::second), options);
  json doc = provenance(cfg, o.seed);
  doc["design"] = eti::design_to_json(sol);
  if (sol.regularized) doc["flags"] = {"REGULARIZED"};
  if (o.regenerative) {
    if (*o.regenerative < 0 || *o.regenerative >= spec.n_states()) throw ConfigError("--regenerative out of range");
    const auto regen = eti::optimal_regenerative(a, *o.regenerative);
    doc["regenerative"] = eti::regenerative_to_json(regen);
    doc["variance_gap"] = eti::gap_to_json(eti::variance_gap_report(spec, a, *o.regenerative, options));
  }
  emit(o, "design.json", doc);
  return 0;
}

int run_single(const Options& o, const std::string& command, const BuiltDesign& built, const eti::ChainSpec& spec) {
  if (o.n < 1) throw ConfigError("--n must be >= 1");
  if (o.checkpoint_every < 0) throw ConfigError("--checkpoint-every must be >= 0");
  json cfg = spec_config(o, command);
  cfg["n"] = o.n;
  cfg["checkpoint_every"] = o.checkpoint_every;
  cfg["design"] = built.description;
  eti::RunOptions options;
  options.n = o.n;
  options.checkpoint_every = o.checkpoint_every;
  options.known_pi = eti::analyze(spec).pi;
  const eti::RunResult result = eti::run(spec, built.design, options, eti::replication_seed(o.seed, 0));
  json doc = provenance(cfg, o.seed);
  doc["result"] = eti::run_result_to_json(result);
  emit(o, "run.json", doc);
  if (!o.out_dir.empty()) {
    std::ostringstream csv;
    eti::write_checkpoint_csv(csv, result);
    write_file(fs::path(o.out_dir) / "checkpoints.csv", csv.str());
    if (!std::holds_alternative<eti::PolicyConfig>(built.design)) {
      std::ostringstream trace;
      eti::write_policy_trace_csv(trace, result);
      write_file(fs::path(o.out_dir) / "policy_trace.csv", trace.str());
    }
  }
  return 0;
}

int cmd_simulate(const Options& o) {
  const eti::ChainSpec spec = load(o);
  return run_single(o, "simulate", build_design(o, spec), spec);
}

int cmd_online(const Options& o) {
  const eti::ChainSpec spec = load(o);
  if (o.algo != "eti" && o.algo != "eti2") throw ConfigError("--algo must be eti or eti2");
  Options local = o;
  local.policy = o.algo;
  return run_single(local, "online", build_design(local, spec), spec);
}

int cmd_mc(const Options& o) {
  const eti::ChainSpec spec = load(o);
  const BuiltDesign built = build_design(o, spec);
  if (o.n < 1) throw ConfigError("--n must be >= 1");
  if (o.reps < 2) throw ConfigError("--reps must be >= 2");
  json cfg = spec_config(o, "mc");
  cfg["n"] = o.n;
  cfg["reps"] = o.reps;
  cfg["design"] = built.description;
  cfg["clt"] = o.clt;
  eti::McOptions options;
  options.n = o.n;
  options.reps = o.reps;
  options.base_seed = o.seed;
  options.threads = o.threads;
  options.known_pi = true;
  json doc = provenance(cfg, o.seed);
  doc["summary"] = eti::mc_summary_to_json(eti::monte_carlo(spec, built.design, options));
  if (o.clt) {
    const auto* policy = std::get_if<eti::PolicyConfig>(&built.design);
    if (policy == nullptr) throw ConfigError("--clt needs a stationary Markov or regenerative policy");
    try {
      doc["clt"] = eti::clt_report_to_json(eti::clt_report(spec, *policy, options));
    } catch (const eti::InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  emit(o, "summary.json", doc);
  return 0;
}

int cmd_coop(const Options& o) {
  std::vector<int> s_values = o.s_values.empty() ? std::vector<int>{8, 16, 32} : o.s_values;
  json cfg{{"command", "coop"}, {"s", s_values}, {"q1", o.q1}, {"q2", o.q2},
           {"n", o.n}, {"reps", o.reps}, {"isolation", !o.no_isolation}};
  eti::CoopOptions options;
  options.n = o.n;
  options.reps = o.reps;
  options.base_seed = o.seed;
  options.threads = o.threads;
  options.q1 = o.q1;
  options.q2 = o.q2;
  options.isolation = !o.no_isolation;
  json rows = json::array();
  for (int s : s_values) {
    if (s < 2) throw ConfigError("--s must be >= 2");
    rows.push_back(eti::coop_row_to_json(eti::coop_experiment(s, options)));
  }
  json doc = provenance(cfg, o.seed);
  doc["rows"] = std::move(rows);
  emit(o, "coop.json", doc);
  return 0;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "JSON file with default option values");
  cmd->add_option("--out", o.out_dir, "Output directory (stdout when omitted)");
  cmd->add_option("--seed", o.seed_flag, "Base seed (overrides ETI_SEED and the config file)");
}

void add_spec(CLI::App* cmd, Options& o) { cmd->add_option("--spec", o.spec_path, "Chain spec JSON file"); }

void add_policy(CLI::App* cmd, Options& o) {
  cmd->add_option("--policy", o.policy,
                  "markov | optimal | regenerative | regenerative-optimal | switchback | single | coop | eti | eti2");
  cmd->add_option("--p1", o.p1, "Chain-1 probabilities per state (markov)")->delimiter(',');
  cmd->add_option("--xr", o.xr, "Regeneration state (0-based)");
  cmd->add_option("--pr", o.pr, "Latch probability for chain 1 (regenerative)");
  cmd->add_option("--block", o.block, "Switchback block length");
  cmd->add_option("--chain", o.chain, "Chain for --policy single");
  cmd->add_option("--resolve", o.resolve, "power2 | every-step (eti)");
  cmd->add_option("--beta", o.beta, "Exploration exponent");
  cmd->add_option("--epsilon", o.epsilon, "sigma2 floor for the design solver");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experiment design and simulation for two Markov chains under temporal interference"};
  app.require_subcommand(1);
  Options o;

  auto* analyze = app.add_subcommand("analyze", "Stationary distributions, Poisson solutions and variances");
  add_common(analyze, o);
  add_spec(analyze, o);

  auto* design = app.add_subcommand("design", "Optimal Markov design and optional optimal regenerative design");
  add_common(design, o);
  add_spec(design, o);
  design->add_option("--regenerative", o.regenerative, "Also report the optimal regenerative design at this state");
  design->add_option("--epsilon", o.epsilon, "sigma2 floor for the design solver");

  auto* simulate = app.add_subcommand("simulate", "Single trajectory");
  add_common(simulate, o);
  add_spec(simulate, o);
  add_policy(simulate, o);
  simulate->add_option("--n", o.n, "Steps");
  simulate->add_option("--checkpoint-every", o.checkpoint_every, "Checkpoint interval (0 = none)");

  auto* mc = app.add_subcommand("mc", "Monte Carlo replications");
  add_common(mc, o);
  add_spec(mc, o);
  add_policy(mc, o);
  mc->add_option("--n", o.n, "Steps per replication");
  mc->add_option("--reps", o.reps, "Replications");
  mc->add_option("--threads", o.threads, "Worker threads");
  mc->add_flag("--clt", o.clt, "Add the CLT report");

  auto* online = app.add_subcommand("online", "Adaptive designs");
  add_common(online, o);
  add_spec(online, o);
  online->add_option("--algo", o.algo, "eti | eti2");
  online->add_option("--xr", o.xr, "Regeneration state for eti2 (0-based)");
  online->add_option("--resolve", o.resolve, "power2 | every-step");
  online->add_option("--beta", o.beta, "Exploration exponent");
  online->add_option("--epsilon", o.epsilon, "sigma2 floor for the design solver");
  online->add_option("--n", o.n, "Steps");
  online->add_option("--checkpoint-every", o.checkpoint_every, "Checkpoint interval (0 = none)");

  auto* coop = app.add_subcommand("coop", "Cooperative exploration example");
  add_common(coop, o);
  coop->add_option("--s", o.s_values, "Cycle lengths (repeatable)");
  coop->add_option("--q1", o.q1, "Bernoulli parameter of chain 1");
  coop->add_option("--q2", o.q2, "Bernoulli parameter of chain 2");
  coop->add_option("--n", o.n, "Steps per replication");
  coop->add_option("--reps", o.reps, "Replications");
  coop->add_option("--threads", o.threads, "Worker threads");
  coop->add_flag("--no-isolation", o.no_isolation, "Skip the isolation baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    CLI::App* active = app.get_subcommands().front();
    o.config = load_config(o.config_path);
    merge_config(*active, o);
    const std::string name = active->get_name();
    if (name == "analyze") return cmd_analyze(o);
    if (name == "design") return cmd_design(o);
    if (name == "simulate") return cmd_simulate(o);
    if (name == "mc") return cmd_mc(o);
    if (name == "online") return cmd_online(o);
    return cmd_coop(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const eti::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const eti::SpecValidationError& e) {
    std::cerr << e.what() << "\n";
    return kExitValidation;
  } catch (const eti::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
