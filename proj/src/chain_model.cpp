#include "eti/chain_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace eti {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool finite(double v) { return std::isfinite(v); }

// Reachability from `start` following edges m(x, y) > 0 (or reversed edges).
std::vector<char> reachable(const Matrix& m, int start, bool reversed) {
  const int n = static_cast<int>(m.rows());
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> stack{start};
  seen[static_cast<std::size_t>(start)] = 1;
  while (!stack.empty()) {
    const int x = stack.back();
    stack.pop_back();
    for (int y = 0; y < n; ++y) {
      const double w = reversed ? m(y, x) : m(x, y);
      if (w > 0.0 && !seen[static_cast<std::size_t>(y)]) {
        seen[static_cast<std::size_t>(y)] = 1;
        stack.push_back(y);
      }
    }
  }
  return seen;
}

Vector solve_lu(const Matrix& a, const Vector& b, const char* what) {
  Eigen::PartialPivLU<Matrix> lu(a);
  if (!(lu.rcond() > 1e-14)) {
    throw SingularSystem(std::string(what) + ": matrix is numerically singular");
  }
  Vector x = lu.solve(b);
  // One step of iterative refinement keeps residuals at round-off level for
  // moderately conditioned chains.
  const Vector residual = b - a * x;
  x += lu.solve(residual);
  if (!x.allFinite()) throw SingularSystem(std::string(what) + ": non-finite solution");
  return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// RewardDist

RewardDist RewardDist::discrete(std::vector<double> values, std::vector<double> probs) {
  if (values.size() != probs.size()) return RewardDist(DiscreteReward{std::move(values), std::move(probs)});
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  DiscreteReward sorted;
  for (std::size_t i : order) {
    sorted.values.push_back(values[i]);
    sorted.probs.push_back(probs[i]);
  }
  return RewardDist(std::move(sorted));
}

std::optional<std::string> RewardDist::check() const {
  return std::visit(
      overloaded{
          [](const ConstantReward& d) -> std::optional<std::string> {
            if (!finite(d.value)) return "constant reward must be finite (bounded support)";
            return std::nullopt;
          },
          [](const BernoulliReward& d) -> std::optional<std::string> {
            if (!(d.p >= 0.0 && d.p <= 1.0)) return "bernoulli p must lie in [0, 1]";
            return std::nullopt;
          },
          [](const UniformReward& d) -> std::optional<std::string> {
            if (!finite(d.lo) || !finite(d.hi)) return "uniform bounds must be finite (bounded support)";
            if (d.lo > d.hi) return "uniform requires lo <= hi";
            return std::nullopt;
          },
          [](const DiscreteReward& d) -> std::optional<std::string> {
            if (d.values.empty()) return "discrete distribution needs at least one value";
            if (d.values.size() != d.probs.size()) return "discrete values and probs differ in length";
            double total = 0.0;
            for (std::size_t i = 0; i < d.values.size(); ++i) {
              if (!finite(d.values[i])) return "discrete values must be finite (bounded support)";
              if (!(d.probs[i] >= 0.0)) return "discrete probabilities must be nonnegative";
              total += d.probs[i];
            }
            if (std::abs(total - 1.0) > kStochasticTol) return "discrete probabilities must sum to 1";
            return std::nullopt;
          },
      },
      law_);
}

double RewardDist::mean() const {
  return std::visit(overloaded{
                        [](const ConstantReward& d) { return d.value; },
                        [](const BernoulliReward& d) { return d.p; },
                        [](const UniformReward& d) { return 0.5 * (d.lo + d.hi); },
                        [](const DiscreteReward& d) {
                          double m = 0.0;
                          for (std::size_t i = 0; i < d.values.size(); ++i) m += d.probs[i] * d.values[i];
                          return m;
                        },
                    },
                    law_);
}

double RewardDist::variance() const {
  return std::visit(overloaded{
                        [](const ConstantReward&) { return 0.0; },
                        [](const BernoulliReward& d) { return d.p * (1.0 - d.p); },
                        [](const UniformReward& d) { return (d.hi - d.lo) * (d.hi - d.lo) / 12.0; },
                        [this](const DiscreteReward& d) {
                          const double m = mean();
                          double v = 0.0;
                          for (std::size_t i = 0; i < d.values.size(); ++i) {
                            v += d.probs[i] * (d.values[i] - m) * (d.values[i] - m);
                          }
                          return v;
                        },
                    },
                    law_);
}

double RewardDist::lower_bound() const {
  return std::visit(overloaded{
                        [](const ConstantReward& d) { return d.value; },
                        [](const BernoulliReward& d) { return d.p < 1.0 ? 0.0 : 1.0; },
                        [](const UniformReward& d) { return d.lo; },
                        [](const DiscreteReward& d) { return *std::min_element(d.values.begin(), d.values.end()); },
                    },
                    law_);
}

double RewardDist::upper_bound() const {
  return std::visit(overloaded{
                        [](const ConstantReward& d) { return d.value; },
                        [](const BernoulliReward& d) { return d.p > 0.0 ? 1.0 : 0.0; },
                        [](const UniformReward& d) { return d.hi; },
                        [](const DiscreteReward& d) { return *std::max_element(d.values.begin(), d.values.end()); },
                    },
                    law_);
}

double RewardDist::quantile(double v) const {
  return std::visit(overloaded{
                        [](const ConstantReward& d) { return d.value; },
                        [v](const BernoulliReward& d) { return v < 1.0 - d.p ? 0.0 : 1.0; },
                        [v](const UniformReward& d) { return d.lo + (d.hi - d.lo) * v; },
                        [v](const DiscreteReward& d) {
                          // values are sorted ascending by discrete() and validate_spec
                          double cum = 0.0;
                          for (std::size_t i = 0; i + 1 < d.values.size(); ++i) {
                            cum += d.probs[i];
                            if (v < cum) return d.values[i];
                          }
                          return d.values.back();
                        },
                    },
                    law_);
}

// ---------------------------------------------------------------------------
// ChainSpec

Matrix ChainSpec::transition_mean(Chain c) const {
  Matrix s(n_states_, n_states_);
  for (int x = 0; x < n_states_; ++x)
    for (int y = 0; y < n_states_; ++y) s(x, y) = reward(c, x, y).mean();
  return s;
}

Matrix ChainSpec::transition_variance(Chain c) const {
  Matrix v(n_states_, n_states_);
  for (int x = 0; x < n_states_; ++x)
    for (int y = 0; y < n_states_; ++y) v(x, y) = reward(c, x, y).variance();
  return v;
}

Vector ChainSpec::mean_reward(Chain c) const {
  return P(c).cwiseProduct(transition_mean(c)).rowwise().sum();
}

RawChainSpec ChainSpec::to_raw() const {
  RawChainSpec raw;
  raw.n_states = n_states_;
  raw.chain_names = chain_names_;
  raw.state_names = state_names_;
  for (Chain c : kChains) {
    const int ci = index_of(c);
    raw.transition[ci].assign(static_cast<std::size_t>(n_states_),
                              std::vector<double>(static_cast<std::size_t>(n_states_)));
    for (int x = 0; x < n_states_; ++x)
      for (int y = 0; y < n_states_; ++y)
        raw.transition[ci][static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = P(c)(x, y);
    raw.rewards[ci].assign(rewards_[ci].begin(), rewards_[ci].end());
  }
  return raw;
}

namespace {

RewardDist normalized(const RewardDist& d) {
  if (const auto* disc = std::get_if<DiscreteReward>(&d.law())) {
    std::vector<std::size_t> order(disc->values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return disc->values[a] < disc->values[b]; });
    DiscreteReward sorted;
    for (std::size_t i : order) {
      sorted.values.push_back(disc->values[i]);
      sorted.probs.push_back(disc->probs[i]);
    }
    return RewardDist(std::move(sorted));
  }
  return d;
}

}  // namespace

ChainSpec validate_spec(const RawChainSpec& raw) {
  std::vector<ValidationIssue> issues;
  const int n = raw.n_states;
  if (n < 1) {
    issues.push_back({IssueKind::Malformed, 0, -1, -1, "n_states must be positive"});
    throw SpecValidationError(std::move(issues));
  }

  ChainSpec spec;
  spec.n_states_ = n;
  spec.chain_names_ = raw.chain_names;
  spec.state_names_ = raw.state_names;
  if (!spec.state_names_.empty() && static_cast<int>(spec.state_names_.size()) != n) {
    issues.push_back({IssueKind::Malformed, 0, -1, -1, "state_names must have n_states entries"});
  }

  for (Chain c : kChains) {
    const int ci = index_of(c);
    const int label = static_cast<int>(c);
    const auto& rows = raw.transition[ci];
    if (static_cast<int>(rows.size()) != n) {
      issues.push_back({IssueKind::Malformed, label, -1, -1, "transition matrix must have n_states rows"});
      continue;
    }
    Matrix P(n, n);
    bool shape_ok = true;
    for (int x = 0; x < n; ++x) {
      const auto& row = rows[static_cast<std::size_t>(x)];
      if (static_cast<int>(row.size()) != n) {
        issues.push_back({IssueKind::Malformed, label, x, -1, "row must have n_states entries"});
        shape_ok = false;
        continue;
      }
      double sum = 0.0;
      bool entries_ok = true;
      for (int y = 0; y < n; ++y) {
        const double v = row[static_cast<std::size_t>(y)];
        P(x, y) = v;
        if (!(v >= 0.0 && v <= 1.0)) entries_ok = false;
        sum += v;
      }
      if (!entries_ok || !(std::abs(sum - 1.0) <= kStochasticTol)) {
        std::ostringstream msg;
        msg << "row sum " << sum << (entries_ok ? "" : " with entries outside [0, 1]");
        issues.push_back({IssueKind::NotStochastic, label, x, -1, msg.str()});
        shape_ok = false;
      }
    }
    if (shape_ok && !is_irreducible(P)) {
      issues.push_back({IssueKind::Reducible, label, -1, -1, "transition graph is not strongly connected"});
    }
    spec.transition_[ci] = P;

    const auto& raw_rewards = raw.rewards[ci];
    auto& rewards = spec.rewards_[ci];
    rewards.assign(static_cast<std::size_t>(n * n), RewardDist::constant(0.0));
    if (!raw_rewards.empty() && static_cast<int>(raw_rewards.size()) != n * n) {
      issues.push_back({IssueKind::Malformed, label, -1, -1, "reward table must have n_states^2 entries"});
      continue;
    }
    for (int x = 0; x < n; ++x) {
      for (int y = 0; y < n; ++y) {
        const auto k = static_cast<std::size_t>(x * n + y);
        const auto& row = rows[static_cast<std::size_t>(x)];
        const bool positive = static_cast<std::size_t>(y) < row.size() && row[static_cast<std::size_t>(y)] > 0.0;
        const std::optional<RewardDist>* entry = raw_rewards.empty() ? nullptr : &raw_rewards[k];
        if (entry == nullptr || !entry->has_value()) {
          if (positive) issues.push_back({IssueKind::MissingReward, label, x, y, "no reward law for a possible transition"});
          continue;
        }
        if (auto reason = (*entry)->check()) {
          issues.push_back({IssueKind::InvalidDistribution, label, x, y, *reason});
          continue;
        }
        rewards[k] = normalized(**entry);
      }
    }
  }

  if (!issues.empty()) throw SpecValidationError(std::move(issues));
  return spec;
}

// ---------------------------------------------------------------------------
// Linear algebra on chains

bool is_irreducible(const Matrix& m) {
  const int n = static_cast<int>(m.rows());
  if (n == 0 || m.cols() != n) return false;
  for (int x = 0; x < n; ++x) {
    if (!(m.row(x).maxCoeff() > 0.0)) return false;
  }
  const auto fwd = reachable(m, 0, false);
  const auto bwd = reachable(m, 0, true);
  return std::all_of(fwd.begin(), fwd.end(), [](char c) { return c != 0; }) &&
         std::all_of(bwd.begin(), bwd.end(), [](char c) { return c != 0; });
}

Vector stationary_distribution(const Matrix& P) {
  const int n = static_cast<int>(P.rows());
  if (!is_irreducible(P)) throw NotIrreducible("stationary_distribution: matrix is not irreducible");
  Matrix a = P.transpose() - Matrix::Identity(n, n);
  a.row(n - 1).setOnes();
  Vector b = Vector::Zero(n);
  b(n - 1) = 1.0;
  Vector pi = solve_lu(a, b, "stationary_distribution");
  for (int i = 0; i < n; ++i) pi(i) = std::max(pi(i), 0.0);
  pi /= pi.sum();
  return pi;
}

Vector poisson_solve(const Matrix& P, const Vector& pi, const Vector& r) {
  const int n = static_cast<int>(P.rows());
  Matrix fundamental = Matrix::Identity(n, n) - P;
  fundamental.rowwise() += pi.transpose();
  return solve_lu(fundamental, r, "poisson_solve");
}

Vector poisson_solve(const Matrix& P, const Vector& r) { return poisson_solve(P, stationary_distribution(P), r); }

Vector conditional_variance(const Matrix& P, const Vector& g, const Matrix& transition_mean,
                            const Matrix& transition_var) {
  const int n = static_cast<int>(P.rows());
  Vector out(n);
  for (int x = 0; x < n; ++x) {
    double center = 0.0;
    for (int y = 0; y < n; ++y) center += P(x, y) * (g(y) + transition_mean(x, y));
    double v = 0.0;
    for (int y = 0; y < n; ++y) {
      const double p = P(x, y);
      if (p == 0.0) continue;
      const double d = g(y) + transition_mean(x, y) - center;
      v += p * (d * d + transition_var(x, y));
    }
    out(x) = std::max(v, 0.0);
  }
  return out;
}

Vector state_variance(const ChainSpec& spec, Chain c) {
  const Matrix& P = spec.P(c);
  const Vector g = poisson_solve(P, spec.mean_reward(c));
  return conditional_variance(P, g, spec.transition_mean(c), spec.transition_variance(c));
}

double ChainAnalysis::sigma_bar(Chain c) const { return std::sqrt(sigma2_bar[index_of(c)]); }

ChainAnalysis analyze(const ChainSpec& spec) {
  const int n = spec.n_states();
  ChainAnalysis a;
  a.pi.resize(2, n);
  a.mean_reward.resize(2, n);
  a.gtilde.resize(2, n);
  a.sigma2.resize(2, n);
  a.eta.resize(2, n);
  for (Chain c : kChains) {
    const int ci = index_of(c);
    const Matrix& P = spec.P(c);
    const Vector pi = stationary_distribution(P);
    const Vector r = spec.mean_reward(c);
    const Vector g = poisson_solve(P, pi, r);
    const Vector s2 = conditional_variance(P, g, spec.transition_mean(c), spec.transition_variance(c));
    a.pi.row(ci) = pi.transpose();
    a.mean_reward.row(ci) = r.transpose();
    a.gtilde.row(ci) = g.transpose();
    a.sigma2.row(ci) = s2.transpose();
    a.eta.row(ci) = pi.cwiseInverse().transpose();
    a.alpha[ci] = pi.dot(r);
    a.sigma2_bar[ci] = pi.dot(s2);
  }
  a.treatment_effect = a.alpha[1] - a.alpha[0];
  return a;
}

double single_chain_clt_variance(const Matrix& P, const Vector& r) {
  const Vector pi = stationary_distribution(P);
  const Vector g = poisson_solve(P, pi, r);
  const Vector pg = P * g;
  return std::max(0.0, pi.dot(g.cwiseProduct(g)) - pi.dot(pg.cwiseProduct(pg)));
}

ChainSpec permute_states(const ChainSpec& spec, const std::vector<int>& perm) {
  const int n = spec.n_states();
  if (static_cast<int>(perm.size()) != n) throw InvalidArgument("permute_states: permutation size mismatch");
  RawChainSpec raw = spec.to_raw();
  RawChainSpec out = raw;
  for (int ci = 0; ci < 2; ++ci) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        out.transition[ci][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            raw.transition[ci][static_cast<std::size_t>(perm[i])][static_cast<std::size_t>(perm[j])];
        out.rewards[ci][static_cast<std::size_t>(i * n + j)] =
            raw.rewards[ci][static_cast<std::size_t>(perm[i] * n + perm[j])];
      }
    }
  }
  if (!raw.state_names.empty()) {
    for (int i = 0; i < n; ++i) out.state_names[static_cast<std::size_t>(i)] = raw.state_names[static_cast<std::size_t>(perm[i])];
  }
  return validate_spec(out);
}

ChainSpec swap_chains(const ChainSpec& spec) {
  RawChainSpec raw = spec.to_raw();
  std::swap(raw.transition[0], raw.transition[1]);
  std::swap(raw.rewards[0], raw.rewards[1]);
  std::swap(raw.chain_names[0], raw.chain_names[1]);
  return validate_spec(raw);
}

}  // namespace eti
