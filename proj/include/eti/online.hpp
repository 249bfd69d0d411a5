#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "eti/design.hpp"
#include "eti/estimators.hpp"
#include "eti/policies.hpp"

namespace eti {

enum class ResolveSchedule {
  /// Re-solve at J and whenever a state's visit count reaches a power of two.
  power_of_two,
  /// Re-solve after every post-J observation.
  every_step,
};

/// Chain-1 sampling probability at a state with design limits (k1, k2) on its
/// m-th visit: (1 - m^-beta) k1 / (k1 + k2) + m^-beta / 2, or 0.5 without mass.
double exploration_probability(double k1, double k2, std::int64_t m, double beta);

struct OnlineEtiConfig {
  ResolveSchedule resolve = ResolveSchedule::power_of_two;
  /// Exploration exponent: the sampling floor is M(x)^-beta / 2.
  double beta = 0.5;
  /// sigma2 floor handed to the design solver.
  double epsilon = 1e-6;
};

/// Adaptive Markov design: samples chain 1 at x with probability
/// (1 - M^-beta) kappa_hat(1,x) / (kappa_hat(1,x) + kappa_hat(2,x)) + M^-beta / 2,
/// where kappa_hat solves the design problem at the current plug-in estimates.
class OnlineEti {
 public:
  OnlineEti(int n_states, OnlineEtiConfig config = {});

  PolicyDecision step(int x, double u);
  void observe(const StepRecord& rec);
  /// Unchecked variant of observe for the simulator loop.
  void observe(int x, Chain a, double reward, int y);

  /// Chain-1 probability the next step at x would use.
  double p_first(int x) const;
  /// Lower bound min(p, 1 - p) guaranteed at x.
  double exploration_floor(int x) const;

  const SufficientStats& stats() const noexcept { return stats_; }
  const OnlineEtiConfig& config() const noexcept { return config_; }
  std::int64_t visits(int x) const { return visits_[static_cast<std::size_t>(x)]; }
  const std::optional<KappaVector>& kappa_hat() const noexcept { return kappa_hat_; }
  std::int64_t resolves() const noexcept { return resolves_; }
  std::int64_t solver_failures() const noexcept { return solver_failures_; }
  std::vector<double> p_snapshot() const;

  /// Recomputes the full MLE from the current statistics.
  MleEstimate estimate() const { return mle_alpha(stats_); }

 private:
  void resolve();

  OnlineEtiConfig config_;
  SufficientStats stats_;
  std::vector<std::int64_t> visits_;
  std::optional<KappaVector> kappa_hat_;
  std::int64_t resolves_ = 0;
  std::int64_t solver_failures_ = 0;
};

struct OnlineEti2Config {
  int regen_state = 0;
  double beta = 0.5;
};

/// Running sums over completed regeneration cycles of one chain.
struct CycleSums {
  std::int64_t count = 0;
  double y = 0.0;
  double eta = 0.0;
  double yy = 0.0;
  double y_eta = 0.0;
  double eta_eta = 0.0;

  void add(double cycle_reward, double cycle_length);
  /// Sum Y / sum eta; 0 with no cycles.
  double alpha() const;
  /// Mean cycle length; 0 with no cycles.
  double eta_mean() const;
  /// sqrt(sum (Y - alpha eta)^2 / sum eta).
  double sigma_bar() const;
};

/// Adaptive regenerative design: the latch drawn at each visit to regen_state
/// targets the optimal regenerative probability at the current cycle estimates.
class OnlineEti2 {
 public:
  explicit OnlineEti2(int n_states, OnlineEti2Config config = {});

  PolicyDecision step(int x, double u);
  void observe(const StepRecord& rec);
  void observe(int x, Chain a, double reward, int y);

  const OnlineEti2Config& config() const noexcept { return config_; }
  const SufficientStats& stats() const noexcept { return stats_; }
  /// Arrivals at the regeneration state so far.
  std::int64_t arrivals() const noexcept { return arrivals_; }
  const CycleSums& cycles(Chain c) const noexcept { return sums_[static_cast<std::size_t>(index_of(c))]; }
  /// Latch probability used at the most recent arrival.
  double p_regen() const noexcept { return p_regen_; }
  /// Difference of per-chain cycle ratio estimates, chain 2 minus chain 1.
  double cycle_alpha() const;
  /// Steps that belong to a completed cycle.
  double completed_cycle_steps() const;

 private:
  void commit_cycle();
  double next_p() const;

  OnlineEti2Config config_;
  SufficientStats stats_;
  std::array<CycleSums, 2> sums_{};
  std::int64_t arrivals_ = 0;
  double p_regen_ = 0.5;
  std::optional<Chain> latch_;
  bool in_cycle_ = false;
  double cycle_reward_ = 0.0;
  double cycle_length_ = 0.0;
};

}  // namespace eti
