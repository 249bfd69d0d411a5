#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "eti/chain_model.hpp"

namespace eti {

/// One observed transition: at step n the experimenter was in prev_state,
/// ran `action`, received `reward` and landed in next_state.
struct StepRecord {
  std::int64_t step = 0;
  int prev_state = 0;
  Chain action = Chain::first;
  double reward = 0.0;
  int next_state = 0;
};

class OutOfOrderStep : public Error {
 public:
  using Error::Error;
};

/// Online counts and reward moments of a single trajectory.
///
///   gamma(c, x)      visits to x while running c
///   phi(c, x, y)     transitions x -> y under c
///   theta(c, x)      reward sum for (c, x)
///   psi(c, x, y)     reward sum per transition
///   upsilon(c, x, y) squared reward sum per transition
///
/// Also tracks the first step J at which both empirical transition matrices
/// became irreducible.  Once reached, the check is never repeated; before it,
/// the check only runs when a transition is seen for the first time.
class SufficientStats {
 public:
  explicit SufficientStats(int n_states);

  /// Checked update; rec.step must equal steps() + 1.
  void update(const StepRecord& rec);
  /// Unchecked hot-path update used by the simulator.
  void record(int x, Chain a, double reward, int y) noexcept;

  int n_states() const noexcept { return n_; }
  std::int64_t steps() const noexcept { return steps_; }
  bool j_reached() const noexcept { return j_step_ >= 0; }
  /// Step at which J occurred, -1 before.
  std::int64_t j_step() const noexcept { return j_step_; }

  std::int64_t gamma(Chain c, int x) const noexcept { return gamma_[gi(c, x)]; }
  std::int64_t phi(Chain c, int x, int y) const noexcept { return phi_[ti(c, x, y)]; }
  double theta(Chain c, int x) const noexcept { return theta_[gi(c, x)]; }
  double psi(Chain c, int x, int y) const noexcept { return psi_[ti(c, x, y)]; }
  double upsilon(Chain c, int x, int y) const noexcept { return upsilon_[ti(c, x, y)]; }

  std::int64_t chain_samples(Chain c) const noexcept { return chain_samples_[index_of(c)]; }
  double chain_reward_sum(Chain c) const noexcept { return chain_reward_[index_of(c)]; }

  friend bool operator==(const SufficientStats&, const SufficientStats&) = default;

 private:
  std::size_t gi(Chain c, int x) const noexcept {
    return static_cast<std::size_t>(index_of(c) * n_ + x);
  }
  std::size_t ti(Chain c, int x, int y) const noexcept {
    return static_cast<std::size_t>((index_of(c) * n_ + x) * n_ + y);
  }
  void check_j();

  int n_;
  std::int64_t steps_ = 0;
  std::int64_t j_step_ = -1;
  std::vector<std::int64_t> gamma_;
  std::vector<std::int64_t> phi_;
  std::vector<double> theta_;
  std::vector<double> psi_;
  std::vector<double> upsilon_;
  std::array<std::int64_t, 2> chain_samples_{};
  std::array<double, 2> chain_reward_{};
};

/// Nonparametric plug-in estimates of every model quantity.
struct MleEstimate {
  std::array<Matrix, 2> P_hat;
  PerChain pi_hat;
  PerChain r_hat;
  std::array<Matrix, 2> s_hat;  ///< per-transition reward mean
  std::array<Matrix, 2> t_hat;  ///< per-transition reward second moment
  PerChain gtilde_hat;
  PerChain sigma2_hat;
  double alpha_hat = 0.0;
  bool pre_j = true;
};

struct StationaryEstimate {
  std::array<Vector, 2> pi;
  bool pre_j = true;
};

/// Phi(c, x, y) / max(Gamma(c, x), 1); unvisited rows stay zero.
std::array<Matrix, 2> mle_transition(const SufficientStats& stats);

/// Stationary distributions of both estimated matrices, or the uniform
/// sentinel (pre_j = true) unless both are irreducible.
StationaryEstimate mle_stationary(const std::array<Matrix, 2>& P_hat);

/// Full MLE assembly.  Before J returns pi_hat uniform, r_hat = 0, alpha_hat = 0.
/// Throws SingularSystem if the fundamental matrix cannot be inverted.
MleEstimate mle_alpha(const SufficientStats& stats);

/// Difference of raw per-chain reward averages, chain 2 minus chain 1.
double sae_alpha(const SufficientStats& stats);

/// Theta(c, x) / max(Gamma(c, x), 1).
PerChain empirical_mean_reward(const SufficientStats& stats);

/// Plug-in estimate with known stationary distributions:
/// pi(2) r_hat(2) - pi(1) r_hat(1).
double plugin_alpha(const SufficientStats& stats, const PerChain& pi);

/// pi(c) r_hat(c) for a single chain with known stationary distribution.
double plugin_chain_alpha(const SufficientStats& stats, Chain c, const PerChain& pi);

}  // namespace eti
