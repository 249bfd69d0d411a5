#include "eti/estimators.hpp"

#include <algorithm>
#include <string>

namespace eti {

SufficientStats::SufficientStats(int n_states)
    : n_(n_states),
      gamma_(static_cast<std::size_t>(2 * n_states), 0),
      phi_(static_cast<std::size_t>(2 * n_states * n_states), 0),
      theta_(static_cast<std::size_t>(2 * n_states), 0.0),
      psi_(static_cast<std::size_t>(2 * n_states * n_states), 0.0),
      upsilon_(static_cast<std::size_t>(2 * n_states * n_states), 0.0) {
  if (n_states < 1) throw InvalidArgument("SufficientStats: n_states must be positive");
}

void SufficientStats::update(const StepRecord& rec) {
  if (rec.step != steps_ + 1) {
    throw OutOfOrderStep("stats_update: expected step " + std::to_string(steps_ + 1) + ", got " +
                         std::to_string(rec.step));
  }
  if (rec.prev_state < 0 || rec.prev_state >= n_ || rec.next_state < 0 || rec.next_state >= n_) {
    throw InvalidArgument("stats_update: state out of range");
  }
  record(rec.prev_state, rec.action, rec.reward, rec.next_state);
}

void SufficientStats::record(int x, Chain a, double reward, int y) noexcept {
  const std::size_t g = gi(a, x);
  const std::size_t t = ti(a, x, y);
  ++steps_;
  ++gamma_[g];
  theta_[g] += reward;
  psi_[t] += reward;
  upsilon_[t] += reward * reward;
  chain_samples_[index_of(a)] += 1;
  chain_reward_[index_of(a)] += reward;
  if (phi_[t]++ == 0 && j_step_ < 0) check_j();
}

void SufficientStats::check_j() {
  for (Chain c : kChains) {
    Matrix support(n_, n_);
    for (int x = 0; x < n_; ++x)
      for (int y = 0; y < n_; ++y) support(x, y) = phi_[ti(c, x, y)] > 0 ? 1.0 : 0.0;
    if (!is_irreducible(support)) return;
  }
  j_step_ = steps_;
}

std::array<Matrix, 2> mle_transition(const SufficientStats& stats) {
  const int n = stats.n_states();
  std::array<Matrix, 2> out;
  for (Chain c : kChains) {
    Matrix P = Matrix::Zero(n, n);
    for (int x = 0; x < n; ++x) {
      const double denom = static_cast<double>(std::max<std::int64_t>(stats.gamma(c, x), 1));
      for (int y = 0; y < n; ++y) P(x, y) = static_cast<double>(stats.phi(c, x, y)) / denom;
    }
    out[static_cast<std::size_t>(index_of(c))] = std::move(P);
  }
  return out;
}

StationaryEstimate mle_stationary(const std::array<Matrix, 2>& P_hat) {
  const int n = static_cast<int>(P_hat[0].rows());
  StationaryEstimate est;
  if (is_irreducible(P_hat[0]) && is_irreducible(P_hat[1])) {
    est.pi = {stationary_distribution(P_hat[0]), stationary_distribution(P_hat[1])};
    est.pre_j = false;
  } else {
    est.pi = {Vector::Constant(n, 1.0 / n), Vector::Constant(n, 1.0 / n)};
    est.pre_j = true;
  }
  return est;
}

PerChain empirical_mean_reward(const SufficientStats& stats) {
  const int n = stats.n_states();
  PerChain r(2, n);
  for (Chain c : kChains) {
    for (int x = 0; x < n; ++x) {
      r(index_of(c), x) =
          stats.theta(c, x) / static_cast<double>(std::max<std::int64_t>(stats.gamma(c, x), 1));
    }
  }
  return r;
}

MleEstimate mle_alpha(const SufficientStats& stats) {
  const int n = stats.n_states();
  MleEstimate est;
  est.P_hat = mle_transition(stats);
  est.gtilde_hat = PerChain::Zero(2, n);
  est.sigma2_hat = PerChain::Zero(2, n);
  for (Chain c : kChains) {
    const auto ci = static_cast<std::size_t>(index_of(c));
    Matrix s = Matrix::Zero(n, n);
    Matrix t = Matrix::Zero(n, n);
    for (int x = 0; x < n; ++x) {
      for (int y = 0; y < n; ++y) {
        const double denom = static_cast<double>(std::max<std::int64_t>(stats.phi(c, x, y), 1));
        s(x, y) = stats.psi(c, x, y) / denom;
        t(x, y) = stats.upsilon(c, x, y) / denom;
      }
    }
    est.s_hat[ci] = std::move(s);
    est.t_hat[ci] = std::move(t);
  }

  const StationaryEstimate stationary = mle_stationary(est.P_hat);
  est.pre_j = stationary.pre_j;
  est.pi_hat.resize(2, n);
  est.pi_hat.row(0) = stationary.pi[0].transpose();
  est.pi_hat.row(1) = stationary.pi[1].transpose();
  if (est.pre_j) {
    est.r_hat = PerChain::Zero(2, n);
    est.alpha_hat = 0.0;
    return est;
  }

  est.r_hat = empirical_mean_reward(stats);
  for (Chain c : kChains) {
    const int ci = index_of(c);
    const auto cs = static_cast<std::size_t>(ci);
    const Vector pi = est.pi_hat.row(ci).transpose();
    const Vector r = est.r_hat.row(ci).transpose();
    const Vector g = poisson_solve(est.P_hat[cs], pi, r);
    const Matrix var = (est.t_hat[cs] - est.s_hat[cs].cwiseProduct(est.s_hat[cs])).cwiseMax(0.0);
    est.gtilde_hat.row(ci) = g.transpose();
    est.sigma2_hat.row(ci) = conditional_variance(est.P_hat[cs], g, est.s_hat[cs], var).transpose();
  }
  est.alpha_hat = est.pi_hat.row(1).dot(est.r_hat.row(1)) - est.pi_hat.row(0).dot(est.r_hat.row(0));
  return est;
}

double sae_alpha(const SufficientStats& stats) {
  auto average = [&](Chain c) {
    return stats.chain_reward_sum(c) / static_cast<double>(std::max<std::int64_t>(stats.chain_samples(c), 1));
  };
  return average(Chain::second) - average(Chain::first);
}

double plugin_chain_alpha(const SufficientStats& stats, Chain c, const PerChain& pi) {
  double sum = 0.0;
  for (int x = 0; x < stats.n_states(); ++x) {
    sum += pi(index_of(c), x) * stats.theta(c, x) /
           static_cast<double>(std::max<std::int64_t>(stats.gamma(c, x), 1));
  }
  return sum;
}

double plugin_alpha(const SufficientStats& stats, const PerChain& pi) {
  return plugin_chain_alpha(stats, Chain::second, pi) - plugin_chain_alpha(stats, Chain::first, pi);
}

}  // namespace eti
