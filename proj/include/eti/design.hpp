#pragma once

#include <optional>
#include <vector>

#include "eti/chain_model.hpp"
#include "eti/policies.hpp"

namespace eti {

class DivisionByZeroMass : public Error {
 public:
  DivisionByZeroMass(Chain c, int x);
  Chain chain;
  int state;
};

class DegenerateChain : public Error {
 public:
  explicit DegenerateChain(Chain c);
  Chain chain;
};

class InfeasibleStart : public Error {
 public:
  using Error::Error;
};

class MaxIterations : public Error {
 public:
  using Error::Error;
};

/// Scaled asymptotic MLE variance of a policy with constant limits kappa:
/// sum_{c,x} pi(c,x)^2 sigma2(c,x) / kappa(c,x).
double mle_variance(const KappaVector& kappa, const PerChain& pi, const PerChain& sigma2);

struct DesignOptions {
  /// Floor applied to sigma2 entries below it; the solution is then flagged regularized.
  double epsilon = 1e-6;
  /// Barrier stops once (number of variables) / t falls below this.
  double gap_tolerance = 1e-10;
  int max_iterations = 500;
  /// Chain-1 probabilities of a Markov policy whose limits seed the solve.
  /// When set (and all sigma2 are positive after flooring) the barrier phase is skipped.
  std::optional<std::vector<double>> warm_start;
};

struct DesignSolution {
  KappaVector kappa_star;
  std::vector<double> p_star;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool regularized = false;
  double epsilon = 0.0;
};

/// Minimizes sum pi^2 sigma2 / kappa over the policy-limit polytope.
DesignSolution solve_optimal_kappa(const PerChain& pi, const PerChain& sigma2, const Matrix& P1, const Matrix& P2,
                                   const DesignOptions& options = {});

/// Norm of the objective gradient projected onto the null space of the
/// equality constraints (balance rows with one dropped, plus mass).
double kkt_residual(const KappaVector& kappa, const PerChain& pi, const PerChain& sigma2, const Matrix& P1,
                    const Matrix& P2);

struct RegenerativeDesign {
  int regen_state = 0;
  double q_star = 0.5;
  double p_star = 0.5;
  double variance = 0.0;
  KappaVector kappa;
};

RegenerativeDesign optimal_regenerative(const ChainAnalysis& analysis, int regen_state);

/// Scaled asymptotic SAE variance of a stationary regenerative policy with
/// chain-1 share q; sigma_bar values are standard deviations.
double sae_variance(double q, double sigma_bar1, double sigma_bar2);

struct VarianceGapReport {
  double markov_variance = 0.0;
  bool markov_regularized = false;
  double regenerative_variance = 0.0;
  double ratio = 0.0;
};

VarianceGapReport variance_gap_report(const ChainSpec& spec, const ChainAnalysis& analysis, int regen_state,
                                      const DesignOptions& options = {});

}  // namespace eti
