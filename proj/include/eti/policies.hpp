#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "eti/chain_model.hpp"
#include "eti/estimators.hpp"

namespace eti {

/// Visit-fraction vector kappa(c, x); row 0 is chain 1, row 1 chain 2.
using KappaVector = Eigen::Matrix2Xd;

struct PolicyDecision {
  Chain action = Chain::first;
  /// Probability with which chain 1 was selected at this step.
  double p_first = 0.5;
};

/// Run chain 1 at state x with probability p_first[x].
struct StationaryMarkov {
  std::vector<double> p_first;
};

/// Switch chains only when the trajectory sits at regen_state; there, chain 1
/// is latched with probability p_regen.
struct Regenerative {
  int regen_state = 0;
  double p_regen = 0.5;
  /// When false, a trajectory that does not start at regen_state draws its
  /// first latch as if it had just regenerated.  When true, that situation
  /// raises UninitializedLatch instead.
  bool strict_start = false;
};

/// Alternate chains every block_length steps, starting with chain 1.
struct Switchback {
  std::int64_t block_length = 100;
};

struct SingleChain {
  Chain chain = Chain::first;
};

/// Cooperative exploration on the opposite-cycle example: chain 1 in the last
/// state, chain 2 in the interior states, alternating 1, 2, 1, ... on
/// successive visits to state 0.
struct CoopAlternating {};

using PolicyConfig = std::variant<StationaryMarkov, Regenerative, Switchback, SingleChain, CoopAlternating>;

class UninitializedLatch : public Error {
 public:
  using Error::Error;
};

class ZeroMass : public Error {
 public:
  ZeroMass(int state);
  int state;
};

class MixtureReducible : public Error {
 public:
  using Error::Error;
};

/// Throws InvalidArgument when probabilities, states or block lengths are out of range.
void validate_policy(const PolicyConfig& config, int n_states);

/// Per-run mutable state for one of the non-adaptive policies.
class PolicyState {
 public:
  PolicyState(PolicyConfig config, int n_states);

  /// u is the policy stream's uniform draw for this step.
  PolicyDecision decide(int x, double u);

  const PolicyConfig& config() const noexcept { return config_; }

 private:
  PolicyConfig config_;
  int n_states_;
  std::int64_t step_ = 0;
  std::optional<Chain> latch_;
  bool coop_next_first_ = true;
};

/// p(c, x) = kappa(c, x) / (kappa(1, x) + kappa(2, x)), returned as the chain-1 column.
std::vector<double> markov_from_kappa(const KappaVector& kappa);

/// Policy limits of the stationary Markov policy p_first: kappa(c, x) = zeta(x) p(c, x)
/// with zeta stationary for the mixture kernel.
KappaVector kappa_from_markov(const std::vector<double>& p_first, const Matrix& P1, const Matrix& P2);

/// Markov policy with the same limits as a regenerative policy with chain-1 share q.
std::vector<double> regenerative_markov_equivalent(double q, const Vector& pi1, const Vector& pi2);

/// Long-run chain-1 share q of a stationary regenerative policy with latch probability p.
double q_from_p(double p, double eta1, double eta2);
/// Inverse of q_from_p.
double p_from_q(double q, double eta1, double eta2);

/// kappa(1, .) = q pi(1), kappa(2, .) = (1 - q) pi(2).
KappaVector regenerative_limits(double q, const Vector& pi1, const Vector& pi2);

struct KappaMembership {
  double balance_residual = 0.0;  ///< max_y |kappa(1,y)+kappa(2,y) - sum kappa P|
  double mass_error = 0.0;        ///< |sum kappa - 1|
  double min_entry = 0.0;
  bool balance_ok = false;
  bool mass_ok = false;
  bool nonnegative_ok = false;
  bool passed() const noexcept { return balance_ok && mass_ok && nonnegative_ok; }
};

inline constexpr double kBalanceTol = 1e-9;
inline constexpr double kMassTol = 1e-12;
inline constexpr double kNonnegTol = -1e-12;

KappaMembership kappa_membership(const KappaVector& kappa, const Matrix& P1, const Matrix& P2);

/// gamma_hat(c, x) = Gamma_n(c, x) / n.
KappaVector empirical_limits(const SufficientStats& stats);

}  // namespace eti
