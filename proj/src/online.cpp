#include "eti/online.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace eti {

namespace {

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

double mixed(double target, double weight) { return (1.0 - weight) * target + 0.5 * weight; }

}  // namespace

double exploration_probability(double k1, double k2, std::int64_t m, double beta) {
  const double mass = k1 + k2;
  if (!(mass > 0.0)) return 0.5;
  return mixed(k1 / mass, std::pow(static_cast<double>(std::max<std::int64_t>(m, 1)), -beta));
}

OnlineEti::OnlineEti(int n_states, OnlineEtiConfig config)
    : config_(config), stats_(n_states), visits_(static_cast<std::size_t>(n_states), 0) {
  if (!(config_.beta > 0.0 && config_.beta < 1.0)) throw InvalidArgument("OnlineEti: beta must lie in (0, 1)");
  if (!(config_.epsilon >= 0.0)) throw InvalidArgument("OnlineEti: epsilon must be nonnegative");
}

double OnlineEti::exploration_floor(int x) const {
  const auto m = static_cast<double>(visits_[static_cast<std::size_t>(x)] + 1);
  return 0.5 * std::pow(m, -config_.beta);
}

double OnlineEti::p_first(int x) const {
  if (!stats_.j_reached() || !kappa_hat_) return 0.5;
  return exploration_probability((*kappa_hat_)(0, x), (*kappa_hat_)(1, x),
                                 visits_[static_cast<std::size_t>(x)] + 1, config_.beta);
}

std::vector<double> OnlineEti::p_snapshot() const {
  std::vector<double> p(visits_.size());
  for (std::size_t x = 0; x < p.size(); ++x) p[x] = p_first(static_cast<int>(x));
  return p;
}

PolicyDecision OnlineEti::step(int x, double u) {
  const double p = p_first(x);
  ++visits_[static_cast<std::size_t>(x)];
  return PolicyDecision{u <= p ? Chain::first : Chain::second, p};
}

void OnlineEti::observe(const StepRecord& rec) {
  const bool was_reached = stats_.j_reached();
  stats_.update(rec);
  if (!stats_.j_reached()) return;
  if (!was_reached || config_.resolve == ResolveSchedule::every_step ||
      is_power_of_two(visits_[static_cast<std::size_t>(rec.prev_state)])) {
    resolve();
  }
}

void OnlineEti::observe(int x, Chain a, double reward, int y) {
  const bool was_reached = stats_.j_reached();
  stats_.record(x, a, reward, y);
  if (!stats_.j_reached()) return;
  if (!was_reached || config_.resolve == ResolveSchedule::every_step ||
      is_power_of_two(visits_[static_cast<std::size_t>(x)])) {
    resolve();
  }
}

void OnlineEti::resolve() {
  ++resolves_;
  try {
    const MleEstimate est = mle_alpha(stats_);
    DesignOptions options;
    options.epsilon = config_.epsilon;
    if (kappa_hat_) options.warm_start = markov_from_kappa(*kappa_hat_);
    const DesignSolution sol =
        solve_optimal_kappa(est.pi_hat, est.sigma2_hat, est.P_hat[0], est.P_hat[1], options);
    kappa_hat_ = sol.kappa_star;
  } catch (const Error&) {
    ++solver_failures_;
  }
}

void CycleSums::add(double cycle_reward, double cycle_length) {
  ++count;
  y += cycle_reward;
  eta += cycle_length;
  yy += cycle_reward * cycle_reward;
  y_eta += cycle_reward * cycle_length;
  eta_eta += cycle_length * cycle_length;
}

double CycleSums::alpha() const { return eta > 0.0 ? y / eta : 0.0; }

double CycleSums::eta_mean() const { return count > 0 ? eta / static_cast<double>(count) : 0.0; }

double CycleSums::sigma_bar() const {
  if (!(eta > 0.0)) return 0.0;
  const double a = alpha();
  const double ss = yy - 2.0 * a * y_eta + a * a * eta_eta;
  return std::sqrt(std::max(ss, 0.0) / eta);
}

OnlineEti2::OnlineEti2(int n_states, OnlineEti2Config config) : config_(config), stats_(n_states) {
  if (config_.regen_state < 0 || config_.regen_state >= n_states) {
    throw InvalidArgument("OnlineEti2: regeneration state out of range");
  }
  if (!(config_.beta > 0.0 && config_.beta < 1.0)) throw InvalidArgument("OnlineEti2: beta must lie in (0, 1)");
}

double OnlineEti2::next_p() const {
  const CycleSums& c1 = sums_[0];
  const CycleSums& c2 = sums_[1];
  if (c1.count < 1 || c2.count < 1) return 0.5;
  const double s1 = c1.sigma_bar();
  const double s2 = c2.sigma_bar();
  if (!(s1 > 0.0 && s2 > 0.0)) return 0.5;
  const double a = c2.eta_mean() * s1;
  const double target = a / (a + c1.eta_mean() * s2);
  return mixed(target, std::pow(static_cast<double>(arrivals_), -config_.beta));
}

void OnlineEti2::commit_cycle() {
  if (in_cycle_ && latch_) sums_[static_cast<std::size_t>(index_of(*latch_))].add(cycle_reward_, cycle_length_);
  in_cycle_ = false;
  cycle_reward_ = 0.0;
  cycle_length_ = 0.0;
}

PolicyDecision OnlineEti2::step(int x, double u) {
  if (x == config_.regen_state) {
    ++arrivals_;
    commit_cycle();
    p_regen_ = next_p();
    latch_ = u <= p_regen_ ? Chain::first : Chain::second;
    in_cycle_ = true;
    return PolicyDecision{*latch_, p_regen_};
  }
  if (!latch_) {
    // Started away from the regeneration state: latch as if it had just been visited.
    latch_ = u <= 0.5 ? Chain::first : Chain::second;
    return PolicyDecision{*latch_, 0.5};
  }
  return PolicyDecision{*latch_, *latch_ == Chain::first ? 1.0 : 0.0};
}

void OnlineEti2::observe(const StepRecord& rec) {
  stats_.update(rec);
  if (in_cycle_) {
    cycle_reward_ += rec.reward;
    cycle_length_ += 1.0;
  }
}

void OnlineEti2::observe(int x, Chain a, double reward, int y) {
  stats_.record(x, a, reward, y);
  if (in_cycle_) {
    cycle_reward_ += reward;
    cycle_length_ += 1.0;
  }
}

double OnlineEti2::cycle_alpha() const { return sums_[1].alpha() - sums_[0].alpha(); }

double OnlineEti2::completed_cycle_steps() const { return sums_[0].eta + sums_[1].eta; }

}  // namespace eti
