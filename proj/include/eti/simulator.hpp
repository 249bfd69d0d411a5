#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "eti/chain_model.hpp"
#include "eti/design.hpp"
#include "eti/estimators.hpp"
#include "eti/online.hpp"
#include "eti/policies.hpp"

namespace eti {

/// splitmix64 finalizer; the stream-derivation function for all seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

enum class Stream : std::uint64_t { transition = 1, reward = 2, policy = 3 };

/// Seed of replication `rep` derived from a base seed: split(base, rep).
std::uint64_t replication_seed(std::uint64_t base, std::uint64_t rep) noexcept;
/// Seed of a named sub-stream of one replication.
std::uint64_t stream_seed(std::uint64_t replication, Stream s) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

struct Streams {
  Rng transition;
  Rng reward;
  Rng policy;

  explicit Streams(std::uint64_t replication);
};

/// Inverse-CDF tables for drawing transitions and rewards from a ChainSpec.
class Sampler {
 public:
  explicit Sampler(const ChainSpec& spec);

  int n_states() const noexcept { return n_; }
  int next_state(Chain c, int x, double u) const noexcept;
  double reward(Chain c, int x, int y, double v) const noexcept;

 private:
  enum class Kind : std::uint8_t { constant, bernoulli, uniform, discrete };
  struct Law {
    Kind kind = Kind::constant;
    double a = 0.0;
    double b = 0.0;
    std::uint32_t offset = 0;
    std::uint32_t size = 0;
  };

  int n_;
  std::vector<double> cdf_;  // [(c * n + x) * n + y]
  std::vector<int> last_;    // last positive entry per row
  std::vector<Law> laws_;
  std::vector<double> discrete_values_;
  std::vector<double> discrete_cdf_;
};

struct StepOutcome {
  int next_state = 0;
  double reward = 0.0;
};

/// One transition under chain c from x: next state from the transition stream,
/// reward from the reward stream.  A reward uniform is drawn on every step.
StepOutcome sample_step(const Sampler& sampler, Chain c, int x, Streams& streams);

using SamplingDesign = std::variant<PolicyConfig, OnlineEtiConfig, OnlineEti2Config>;

/// Throws InvalidArgument when the design does not fit the state space.
void validate_design(const SamplingDesign& design, int n_states);

/// Default initial state: the regeneration state for OnlineEti2, else 0.
int default_initial_state(const SamplingDesign& design);

/// A single trajectory driven step by step.
class Simulation {
 public:
  Simulation(const ChainSpec& spec, const SamplingDesign& design, std::uint64_t replication_seed,
             std::optional<int> initial_state = std::nullopt);

  /// Advances one step and returns what happened.
  StepRecord step() { return step_with_decision().first; }
  std::pair<StepRecord, PolicyDecision> step_with_decision();
  void advance(std::int64_t steps);

  int state() const noexcept { return state_; }
  std::int64_t steps() const noexcept { return stats().steps(); }
  std::int64_t switches() const noexcept { return switches_; }
  const SufficientStats& stats() const noexcept;
  const OnlineEti* eti() const noexcept { return std::get_if<OnlineEti>(&controller_); }
  const OnlineEti2* eti2() const noexcept { return std::get_if<OnlineEti2>(&controller_); }
  /// Current chain-1 probabilities per state for adaptive designs.
  std::optional<std::vector<double>> p_snapshot() const;

 private:
  using Controller = std::variant<PolicyState, OnlineEti, OnlineEti2>;

  Sampler sampler_;
  Streams streams_;
  Controller controller_;
  std::optional<SufficientStats> own_stats_;
  int state_;
  std::optional<Chain> last_action_;
  std::int64_t switches_ = 0;
};

struct Checkpoint {
  std::int64_t n = 0;
  double alpha_mle = 0.0;
  double alpha_sae = 0.0;
  KappaVector gamma;
  std::optional<std::vector<double>> p_hat;
};

struct RunOptions {
  std::int64_t n = 0;
  std::optional<int> initial_state;
  /// 0 disables checkpoints.
  std::int64_t checkpoint_every = 0;
  /// When set, the known-pi plug-in estimate is reported too.
  std::optional<PerChain> known_pi;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::int64_t n = 0;
  double alpha_mle = 0.0;
  double alpha_sae = 0.0;
  std::optional<double> alpha_known;
  std::optional<double> alpha_cycle;
  bool mle_pre_j = true;
  std::vector<Checkpoint> checkpoints;
  KappaVector gamma_hat;
  std::int64_t j_step = -1;
  std::int64_t solver_failures = 0;
  std::int64_t switches = 0;
  std::optional<std::vector<double>> p_hat;
  std::optional<double> p_regen;
  std::optional<std::int64_t> arrivals;
};

/// Simulates options.n steps; `seed` is the replication seed.
RunResult run(const ChainSpec& spec, const SamplingDesign& design, const RunOptions& options, std::uint64_t seed);

struct EstimatorSummary {
  double mean = 0.0;
  double bias = 0.0;
  /// n times the unbiased sample variance across replications.
  double scaled_var = 0.0;
  /// 95% normal-theory half-width for scaled_var.
  double scaled_var_ci = 0.0;
};

struct McOptions {
  std::int64_t n = 0;
  int reps = 2;
  std::uint64_t base_seed = 0;
  int threads = 1;
  std::optional<int> initial_state;
  bool known_pi = false;
};

struct McSummary {
  int reps = 0;
  std::int64_t n = 0;
  double alpha = 0.0;
  EstimatorSummary mle;
  EstimatorSummary sae;
  std::optional<EstimatorSummary> known;
  std::optional<EstimatorSummary> cycle;
  KappaVector gamma_mean;
  double mean_solver_failures = 0.0;
};

/// Per-replication results in replication order.  Independent of `threads`.
std::vector<RunResult> replicate(const ChainSpec& spec, const SamplingDesign& design, const McOptions& options);

EstimatorSummary summarize_estimates(const std::vector<double>& values, double truth, std::int64_t n);

McSummary summarize(const std::vector<RunResult>& runs, double alpha, std::int64_t n);

McSummary monte_carlo(const ChainSpec& spec, const SamplingDesign& design, const McOptions& options);

/// Two opposite deterministic s-cycles; Bernoulli(q) rewards only on transitions out of state 0.
ChainSpec coop_example_spec(int s, double q1, double q2);
PolicyConfig coop_designed_policy(int s);

struct CoopRow {
  int s = 0;
  /// n Var(s alpha_hat) under the designed policy.
  double designed_var = 0.0;
  double designed_ci = 0.0;
  /// n Var(s alpha_hat) from two isolated single-chain runs of n steps each.
  std::optional<double> isolation_var;
  std::optional<double> isolation_ci;
  std::optional<double> ratio;
  /// Unnormalized n Var(alpha_hat) under the designed policy.
  double designed_raw_var = 0.0;
  double designed_raw_ci = 0.0;
};

struct CoopOptions {
  std::int64_t n = 100000;
  int reps = 2000;
  std::uint64_t base_seed = 0;
  int threads = 1;
  double q1 = 0.5;
  double q2 = 0.5;
  bool isolation = true;
};

/// Both estimates use the known stationary distribution (uniform).
CoopRow coop_experiment(int s, const CoopOptions& options);

/// 5% critical value of the Anderson-Darling statistic for a fully specified normal.
inline constexpr double kAndersonDarling5 = 2.492;

/// Anderson-Darling A^2 of the sample against N(0, 1).
double anderson_darling(std::vector<double> z);

enum class CltEstimator { mle, sae };

struct CltReport {
  CltEstimator estimator = CltEstimator::mle;
  double predicted_var = 0.0;
  double empirical_var = 0.0;
  double variance_ratio = 0.0;
  double ad_statistic = 0.0;
  bool ad_pass = false;
};

/// Stationary Markov policies are judged with the MLE, stationary regenerative
/// ones with the SAE.  Other designs raise InvalidArgument.
CltReport clt_report(const ChainSpec& spec, const PolicyConfig& policy, const McOptions& options);

}  // namespace eti
