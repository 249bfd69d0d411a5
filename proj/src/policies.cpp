#include "eti/policies.hpp"

#include <cmath>
#include <string>

namespace eti {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

ZeroMass::ZeroMass(int s) : Error("markov_from_kappa: zero mass at state " + std::to_string(s)), state(s) {}

void validate_policy(const PolicyConfig& config, int n_states) {
  std::visit(overloaded{
                 [&](const StationaryMarkov& p) {
                   if (static_cast<int>(p.p_first.size()) != n_states)
                     throw InvalidArgument("stationary Markov policy needs one probability per state");
                   for (double v : p.p_first)
                     if (!is_probability(v)) throw InvalidArgument("policy probabilities must lie in [0, 1]");
                 },
                 [&](const Regenerative& p) {
                   if (p.regen_state < 0 || p.regen_state >= n_states)
                     throw InvalidArgument("regeneration state out of range");
                   if (!is_probability(p.p_regen)) throw InvalidArgument("p_regen must lie in [0, 1]");
                 },
                 [](const Switchback& p) {
                   if (p.block_length < 1) throw InvalidArgument("switchback block length must be >= 1");
                 },
                 [](const SingleChain&) {},
                 [&](const CoopAlternating&) {
                   if (n_states < 2) throw InvalidArgument("cooperative policy needs at least two states");
                 },
             },
             config);
}

PolicyState::PolicyState(PolicyConfig config, int n_states) : config_(std::move(config)), n_states_(n_states) {
  validate_policy(config_, n_states_);
}

PolicyDecision PolicyState::decide(int x, double u) {
  const std::int64_t n = step_++;
  return std::visit(
      overloaded{
          [&](const StationaryMarkov& p) {
            const double p1 = p.p_first[static_cast<std::size_t>(x)];
            return PolicyDecision{u <= p1 ? Chain::first : Chain::second, p1};
          },
          [&](const Regenerative& p) {
            if (x == p.regen_state || !latch_) {
              if (x != p.regen_state && p.strict_start) {
                throw UninitializedLatch("regenerative policy started away from the regeneration state");
              }
              latch_ = u <= p.p_regen ? Chain::first : Chain::second;
              return PolicyDecision{*latch_, p.p_regen};
            }
            return PolicyDecision{*latch_, *latch_ == Chain::first ? 1.0 : 0.0};
          },
          [&](const Switchback& p) {
            const bool first = (n / p.block_length) % 2 == 0;
            return PolicyDecision{first ? Chain::first : Chain::second, first ? 1.0 : 0.0};
          },
          [](const SingleChain& p) {
            return PolicyDecision{p.chain, p.chain == Chain::first ? 1.0 : 0.0};
          },
          [&](const CoopAlternating&) {
            if (x == 0) {
              const Chain a = coop_next_first_ ? Chain::first : Chain::second;
              coop_next_first_ = !coop_next_first_;
              return PolicyDecision{a, a == Chain::first ? 1.0 : 0.0};
            }
            if (x == n_states_ - 1) return PolicyDecision{Chain::first, 1.0};
            return PolicyDecision{Chain::second, 0.0};
          },
      },
      config_);
}

std::vector<double> markov_from_kappa(const KappaVector& kappa) {
  std::vector<double> p(static_cast<std::size_t>(kappa.cols()));
  for (Eigen::Index x = 0; x < kappa.cols(); ++x) {
    const double mass = kappa(0, x) + kappa(1, x);
    if (!(mass > 0.0)) throw ZeroMass(static_cast<int>(x));
    p[static_cast<std::size_t>(x)] = kappa(0, x) / mass;
  }
  return p;
}

KappaVector kappa_from_markov(const std::vector<double>& p_first, const Matrix& P1, const Matrix& P2) {
  const int n = static_cast<int>(P1.rows());
  if (static_cast<int>(p_first.size()) != n) throw InvalidArgument("kappa_from_markov: size mismatch");
  Matrix mixture(n, n);
  for (int x = 0; x < n; ++x) {
    const double p = p_first[static_cast<std::size_t>(x)];
    mixture.row(x) = p * P1.row(x) + (1.0 - p) * P2.row(x);
  }
  if (!is_irreducible(mixture)) throw MixtureReducible("kappa_from_markov: mixture kernel is reducible");
  const Vector zeta = stationary_distribution(mixture);
  KappaVector kappa(2, n);
  for (int x = 0; x < n; ++x) {
    const double p = p_first[static_cast<std::size_t>(x)];
    kappa(0, x) = zeta(x) * p;
    kappa(1, x) = zeta(x) * (1.0 - p);
  }
  return kappa;
}

std::vector<double> regenerative_markov_equivalent(double q, const Vector& pi1, const Vector& pi2) {
  std::vector<double> p(static_cast<std::size_t>(pi1.size()));
  for (Eigen::Index x = 0; x < pi1.size(); ++x) {
    const double a = q * pi1(x);
    const double b = (1.0 - q) * pi2(x);
    p[static_cast<std::size_t>(x)] = a / (a + b);
  }
  return p;
}

double q_from_p(double p, double eta1, double eta2) {
  const double a = p * eta1;
  const double b = (1.0 - p) * eta2;
  return a / (a + b);
}

double p_from_q(double q, double eta1, double eta2) {
  const double a = q * eta2;
  const double b = (1.0 - q) * eta1;
  return a / (a + b);
}

KappaVector regenerative_limits(double q, const Vector& pi1, const Vector& pi2) {
  KappaVector kappa(2, pi1.size());
  kappa.row(0) = q * pi1.transpose();
  kappa.row(1) = (1.0 - q) * pi2.transpose();
  return kappa;
}

KappaMembership kappa_membership(const KappaVector& kappa, const Matrix& P1, const Matrix& P2) {
  KappaMembership report;
  const Eigen::RowVectorXd inflow = kappa.row(0) * P1 + kappa.row(1) * P2;
  const Eigen::RowVectorXd outflow = kappa.row(0) + kappa.row(1);
  report.balance_residual = (outflow - inflow).cwiseAbs().maxCoeff();
  report.mass_error = std::abs(kappa.sum() - 1.0);
  report.min_entry = kappa.minCoeff();
  report.balance_ok = report.balance_residual <= kBalanceTol;
  report.mass_ok = report.mass_error <= kMassTol;
  report.nonnegative_ok = report.min_entry >= kNonnegTol;
  return report;
}

KappaVector empirical_limits(const SufficientStats& stats) {
  if (stats.steps() < 1) throw InvalidArgument("empirical_limits: need at least one step");
  KappaVector gamma(2, stats.n_states());
  const double n = static_cast<double>(stats.steps());
  for (Chain c : kChains)
    for (int x = 0; x < stats.n_states(); ++x) gamma(index_of(c), x) = static_cast<double>(stats.gamma(c, x)) / n;
  return gamma;
}

}  // namespace eti
