#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "eti/errors.hpp"

namespace eti {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Row 0 holds chain 1, row 1 holds chain 2; one column per state.
using PerChain = Eigen::Matrix2Xd;

enum class Chain : std::uint8_t { first = 1, second = 2 };

constexpr int index_of(Chain c) noexcept { return static_cast<int>(c) - 1; }
constexpr Chain chain_at(int index) noexcept { return index == 0 ? Chain::first : Chain::second; }
constexpr Chain other(Chain c) noexcept { return c == Chain::first ? Chain::second : Chain::first; }
inline constexpr std::array<Chain, 2> kChains{Chain::first, Chain::second};

inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kPoissonTol = 1e-10;

struct ConstantReward {
  double value = 0.0;
};
struct BernoulliReward {
  double p = 0.5;
};
struct UniformReward {
  double lo = 0.0;
  double hi = 1.0;
};
struct DiscreteReward {
  std::vector<double> values;
  std::vector<double> probs;
};

/// Bounded reward law for one transition (chain, x, y).  Only families with
/// closed-form mean and variance are representable.
class RewardDist {
 public:
  using Law = std::variant<ConstantReward, BernoulliReward, UniformReward, DiscreteReward>;

  RewardDist() = default;
  RewardDist(Law law) : law_(std::move(law)) {}  // NOLINT(google-explicit-constructor)

  static RewardDist constant(double c) { return RewardDist(ConstantReward{c}); }
  static RewardDist bernoulli(double p) { return RewardDist(BernoulliReward{p}); }
  static RewardDist uniform(double lo, double hi) { return RewardDist(UniformReward{lo, hi}); }
  static RewardDist discrete(std::vector<double> values, std::vector<double> probs);

  const Law& law() const noexcept { return law_; }

  /// Empty when the parameters describe a proper bounded law, else the reason.
  std::optional<std::string> check() const;

  double mean() const;
  double variance() const;
  double second_moment() const { return variance() + mean() * mean(); }
  double lower_bound() const;
  double upper_bound() const;
  bool is_deterministic() const { return variance() == 0.0; }

  /// Generalized inverse CDF, v in [0, 1).
  double quantile(double v) const;

 private:
  Law law_{ConstantReward{0.0}};
};

/// Unvalidated two-chain description as it arrives from a parser or caller.
struct RawChainSpec {
  int n_states = 0;
  std::array<std::vector<std::vector<double>>, 2> transition;
  /// rewards[c][x * n_states + y]; nullopt means "not provided".
  std::array<std::vector<std::optional<RewardDist>>, 2> rewards;
  std::array<std::string, 2> chain_names{"chain 1", "chain 2"};
  std::vector<std::string> state_names;
};

/// The validated experiment universe: two irreducible row-stochastic matrices
/// on a shared state space plus a bounded reward law for every transition.
class ChainSpec {
 public:
  int n_states() const noexcept { return n_states_; }
  const Matrix& P(Chain c) const noexcept { return transition_[index_of(c)]; }
  const RewardDist& reward(Chain c, int x, int y) const {
    return rewards_[index_of(c)][static_cast<std::size_t>(x * n_states_ + y)];
  }
  const std::string& chain_name(Chain c) const noexcept { return chain_names_[index_of(c)]; }
  const std::vector<std::string>& state_names() const noexcept { return state_names_; }

  /// Mean reward per transition, s(c, x, y).
  Matrix transition_mean(Chain c) const;
  /// Reward variance per transition, Var(R | c, x, y).
  Matrix transition_variance(Chain c) const;
  /// r(c, x) = sum_y P(c,x,y) s(c,x,y).
  Vector mean_reward(Chain c) const;

  RawChainSpec to_raw() const;

 private:
  friend ChainSpec validate_spec(const RawChainSpec& raw);

  int n_states_ = 0;
  std::array<Matrix, 2> transition_;
  std::array<std::vector<RewardDist>, 2> rewards_;
  std::array<std::string, 2> chain_names_;
  std::vector<std::string> state_names_;
};

/// Closed-form ground truth derived from a ChainSpec.
struct ChainAnalysis {
  PerChain pi;
  PerChain mean_reward;
  PerChain gtilde;
  PerChain sigma2;
  PerChain eta;
  std::array<double, 2> sigma2_bar{};
  std::array<double, 2> alpha{};
  double treatment_effect = 0.0;

  int n_states() const noexcept { return static_cast<int>(pi.cols()); }
  double sigma_bar(Chain c) const;
};

/// Throws SpecValidationError listing every violated requirement.
ChainSpec validate_spec(const RawChainSpec& raw);

/// Strong connectivity of the graph {(x, y) : m(x, y) > 0}.
bool is_irreducible(const Matrix& m);

/// Solves pi (P - I) = 0, sum pi = 1 by LU on the transposed system with the
/// last balance equation replaced by the normalization row.
Vector stationary_distribution(const Matrix& P);

/// Centered Poisson solution gtilde = (I - P + e pi)^{-1} r, the unique solution
/// of (I - P) g = r - (pi r) e with pi g = pi r.
Vector poisson_solve(const Matrix& P, const Vector& r);
Vector poisson_solve(const Matrix& P, const Vector& pi, const Vector& r);

/// Per-state conditional variance Var(g(X1) + R1 | X0 = x) given transition
/// probabilities, the Poisson solution, per-transition reward means and
/// per-transition reward variances.
Vector conditional_variance(const Matrix& P, const Vector& g, const Matrix& transition_mean,
                            const Matrix& transition_var);

Vector state_variance(const ChainSpec& spec, Chain c);

ChainAnalysis analyze(const ChainSpec& spec);

/// Asymptotic variance of sqrt(n) (mean of r(X_j) - pi r) for one chain:
/// pi g^2 - pi (P g)^2.
double single_chain_clt_variance(const Matrix& P, const Vector& r);

/// Same spec with states relabeled: new state k is old state perm[k].
ChainSpec permute_states(const ChainSpec& spec, const std::vector<int>& perm);

/// Same spec with chain 1 and chain 2 swapped.
ChainSpec swap_chains(const ChainSpec& spec);

}  // namespace eti
