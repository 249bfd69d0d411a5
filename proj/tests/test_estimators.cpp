#include <doctest.h>

#include <random>

#include "eti/estimators.hpp"
#include "eti/policies.hpp"
#include "eti/simulator.hpp"
#include "oracles.hpp"

using namespace eti;

namespace {

// Counts of W2 under the p = 0.5 Markov policy scaled to N = 2600:
// zeta = (7/13, 6/13), so Gamma = (700, 600) for both chains.
SufficientStats w2_exact_counts() {
  SufficientStats stats(2);
  auto feed = [&](Chain a, int x, int y, int count, double reward_ones_fraction, bool bernoulli, double constant) {
    const int ones = static_cast<int>(count * reward_ones_fraction);
    for (int k = 0; k < count; ++k) {
      const double r = bernoulli ? (k < ones ? 1.0 : 0.0) : constant;
      stats.record(x, a, r, y);
    }
  };
  feed(Chain::first, 0, 0, 630, 0, false, 1.0);
  feed(Chain::first, 0, 1, 70, 0, false, 1.0);
  feed(Chain::first, 1, 0, 120, 0, false, 0.0);
  feed(Chain::first, 1, 1, 480, 0, false, 0.0);
  feed(Chain::second, 0, 0, 350, 0.5, true, 0);
  feed(Chain::second, 0, 1, 350, 0.5, true, 0);
  feed(Chain::second, 1, 0, 300, 0.5, true, 0);
  feed(Chain::second, 1, 1, 300, 0.5, true, 0);
  return stats;
}

std::vector<StepRecord> random_records(std::mt19937_64& rng, int n, int length) {
  std::uniform_int_distribution<int> state(0, n - 1);
  std::uniform_real_distribution<double> reward(-1.0, 2.0);
  std::vector<StepRecord> out;
  int x = state(rng);
  for (int k = 1; k <= length; ++k) {
    const int y = state(rng);
    out.push_back({k, x, (rng() & 1U) ? Chain::first : Chain::second, reward(rng), y});
    x = y;
  }
  return out;
}

}  // namespace

TEST_CASE("single update") {
  SufficientStats stats(2);
  stats.update({1, 0, Chain::first, 1.0, 1});
  CHECK(stats.gamma(Chain::first, 0) == 1);
  CHECK(stats.phi(Chain::first, 0, 1) == 1);
  CHECK(stats.theta(Chain::first, 0) == 1.0);
  CHECK(stats.psi(Chain::first, 0, 1) == 1.0);
  CHECK(stats.upsilon(Chain::first, 0, 1) == 1.0);
  CHECK(stats.gamma(Chain::second, 0) == 0);
  CHECK(stats.steps() == 1);

  stats.update({2, 0, Chain::first, 1.0, 1});
  CHECK(stats.gamma(Chain::first, 0) == 2);
  CHECK(stats.phi(Chain::first, 0, 1) == 2);
  CHECK(stats.theta(Chain::first, 0) == 2.0);
  CHECK(stats.psi(Chain::first, 0, 1) == 2.0);
  CHECK(stats.upsilon(Chain::first, 0, 1) == 2.0);
}

TEST_CASE("out of order steps are rejected") {
  SufficientStats stats(2);
  CHECK_THROWS_AS(stats.update({2, 0, Chain::first, 1.0, 1}), OutOfOrderStep);
  stats.update({1, 0, Chain::first, 1.0, 1});
  CHECK_THROWS_AS(stats.update({1, 1, Chain::first, 1.0, 1}), OutOfOrderStep);
  CHECK(stats.steps() == 1);
}

TEST_CASE("invalid records are rejected") {
  SufficientStats stats(2);
  CHECK_THROWS(stats.update({1, 2, Chain::first, 1.0, 1}));
  CHECK_THROWS(stats.update({1, 0, Chain::first, 1.0, -1}));
}

TEST_CASE("count conservation and monotonicity") {
  std::mt19937_64 rng(5);
  const int n = 4;
  SufficientStats stats(n);
  for (const StepRecord& rec : random_records(rng, n, 500)) {
    const SufficientStats before = stats;
    stats.update(rec);
    std::int64_t total = 0;
    for (Chain c : kChains) {
      for (int x = 0; x < n; ++x) {
        std::int64_t row = 0;
        for (int y = 0; y < n; ++y) {
          row += stats.phi(c, x, y);
          CHECK(stats.phi(c, x, y) >= before.phi(c, x, y));
        }
        CHECK(row == stats.gamma(c, x));
        CHECK(stats.gamma(c, x) >= before.gamma(c, x));
        total += stats.gamma(c, x);
      }
    }
    CHECK(total == stats.steps());
    CHECK(stats.chain_samples(Chain::first) + stats.chain_samples(Chain::second) == stats.steps());
  }
}

TEST_CASE("identical record sequences give identical statistics") {
  std::mt19937_64 rng(6);
  const auto records = random_records(rng, 3, 2000);
  SufficientStats a(3);
  SufficientStats b(3);
  for (const auto& rec : records) {
    a.update(rec);
    b.record(rec.prev_state, rec.action, rec.reward, rec.next_state);
  }
  CHECK(a == b);
  const MleEstimate ea = mle_alpha(a);
  const MleEstimate eb = mle_alpha(b);
  CHECK(ea.alpha_hat == eb.alpha_hat);
  CHECK(ea.sigma2_hat == eb.sigma2_hat);
  CHECK(sae_alpha(a) == sae_alpha(b));
}

TEST_CASE("mle_transition") {
  SufficientStats stats(2);
  auto P = mle_transition(stats);
  CHECK(P[0].isZero());
  CHECK(P[1].isZero());
  stats.record(0, Chain::first, 0.0, 1);
  stats.record(0, Chain::first, 0.0, 1);
  stats.record(0, Chain::first, 0.0, 1);
  stats.record(0, Chain::first, 0.0, 0);
  P = mle_transition(stats);
  CHECK(P[0](0, 0) == 0.25);
  CHECK(P[0](0, 1) == 0.75);
  CHECK(P[0].row(1).isZero());
}

TEST_CASE("mle_stationary") {
  std::array<Matrix, 2> P{Matrix(2, 2), Matrix(2, 2)};
  P[0] << 0.5, 0.5, 0.0, 0.0;
  P[1] << 0, 1, 1, 0;
  auto est = mle_stationary(P);
  CHECK(est.pre_j);
  CHECK(est.pi[0](0) == 0.5);

  P[0] << 0, 1, 1, 0;
  est = mle_stationary(P);
  CHECK_FALSE(est.pre_j);
  CHECK(est.pi[0](0) == doctest::Approx(0.5));

  P[0] << 0.9, 0.1, 0.2, 0.8;
  est = mle_stationary(P);
  CHECK(std::abs(est.pi[0](0) - oracle::kPi1[0]) <= 1e-12);
  CHECK(std::abs(est.pi[0](1) - oracle::kPi1[1]) <= 1e-12);
}

TEST_CASE("pre-J convention") {
  SufficientStats stats(2);
  stats.record(0, Chain::first, 1.0, 1);
  stats.record(1, Chain::first, 1.0, 0);
  stats.record(0, Chain::second, 3.0, 0);
  const MleEstimate est = mle_alpha(stats);
  CHECK(est.pre_j);
  CHECK_FALSE(stats.j_reached());
  CHECK(est.alpha_hat == 0.0);
  CHECK((est.pi_hat.array() == 0.5).all());
  CHECK(est.r_hat.isZero());
}

TEST_CASE("exact synthetic counts reproduce the model") {
  const SufficientStats stats = w2_exact_counts();
  REQUIRE(stats.steps() == 2600);
  REQUIRE(stats.j_reached());
  const MleEstimate est = mle_alpha(stats);
  const ChainSpec spec = oracle::w2();
  const ChainAnalysis a = analyze(spec);
  CHECK_FALSE(est.pre_j);
  for (Chain c : kChains) {
    const int ci = index_of(c);
    CHECK((est.P_hat[static_cast<std::size_t>(ci)] - spec.P(c)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK((est.pi_hat - a.pi).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((est.r_hat - a.mean_reward).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((est.gtilde_hat - a.gtilde).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((est.sigma2_hat - a.sigma2).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(std::abs(est.alpha_hat - oracle::kAlpha) <= 1e-9);
  CHECK(est.s_hat[1](0, 1) == 0.5);
  CHECK(est.t_hat[1](0, 1) == 0.5);
  for (int ci = 0; ci < 2; ++ci) {
    const Vector pi = est.pi_hat.row(ci).transpose();
    CHECK((pi.transpose() * est.P_hat[static_cast<std::size_t>(ci)] - pi.transpose()).cwiseAbs().maxCoeff() <=
          1e-10);
  }
}

TEST_CASE("identical counts for both chains cancel") {
  SufficientStats stats(3);
  std::mt19937_64 rng(11);
  for (const StepRecord& rec : random_records(rng, 3, 400)) {
    stats.record(rec.prev_state, Chain::first, rec.reward, rec.next_state);
    stats.record(rec.prev_state, Chain::second, rec.reward, rec.next_state);
  }
  REQUIRE(stats.j_reached());
  CHECK(mle_alpha(stats).alpha_hat == 0.0);
  CHECK(sae_alpha(stats) == 0.0);
}

TEST_CASE("sample average estimator") {
  SufficientStats stats(2);
  CHECK(sae_alpha(stats) == 0.0);
  for (int k = 0; k < 5; ++k) stats.record(k % 2, Chain::second, 1.0, (k + 1) % 2);
  for (int k = 0; k < 3; ++k) stats.record(k % 2, Chain::first, 0.0, (k + 1) % 2);
  CHECK(sae_alpha(stats) == 1.0);
  SufficientStats only_two(2);
  only_two.record(0, Chain::second, 2.0, 1);
  CHECK(sae_alpha(only_two) == 2.0);
}

TEST_CASE("known-pi plug-in") {
  const SufficientStats stats = w2_exact_counts();
  const ChainAnalysis a = analyze(oracle::w2());
  CHECK(std::abs(plugin_alpha(stats, a.pi) - oracle::kAlpha) <= 1e-12);
  CHECK(std::abs(plugin_chain_alpha(stats, Chain::first, a.pi) - oracle::kAlpha1) <= 1e-12);
  const PerChain r = empirical_mean_reward(stats);
  CHECK(r(0, 0) == 1.0);
  CHECK(r(1, 1) == 0.5);
}

TEST_CASE("sigma2 estimate is never negative") {
  SufficientStats stats(2);
  for (int k = 0; k < 50; ++k) {
    stats.record(0, Chain::first, 0.1, 1);
    stats.record(1, Chain::first, 0.1, 0);
    stats.record(0, Chain::second, 0.1, 1);
    stats.record(1, Chain::second, 0.1, 0);
  }
  const MleEstimate est = mle_alpha(stats);
  CHECK(est.sigma2_hat.minCoeff() >= 0.0);
}

TEST_CASE("J is the first step at which both estimates are irreducible") {
  SufficientStats stats(2);
  stats.update({1, 0, Chain::first, 0.0, 1});
  stats.update({2, 1, Chain::first, 0.0, 0});
  CHECK_FALSE(stats.j_reached());
  stats.update({3, 0, Chain::second, 0.0, 1});
  CHECK_FALSE(stats.j_reached());
  stats.update({4, 1, Chain::second, 0.0, 0});
  CHECK(stats.j_reached());
  CHECK(stats.j_step() == 4);
  stats.update({5, 0, Chain::second, 0.0, 0});
  CHECK(stats.j_step() == 4);
}

TEST_CASE("empirical transition matrices converge under a fixed Markov policy") {
  const ChainSpec spec = oracle::w2();
  RunOptions opts;
  opts.n = 100000;
  Simulation sim(spec, SamplingDesign{PolicyConfig{StationaryMarkov{{0.5, 0.5}}}}, replication_seed(17, 0));
  sim.advance(opts.n);
  const auto P = mle_transition(sim.stats());
  for (Chain c : kChains) {
    CHECK((P[static_cast<std::size_t>(index_of(c))] - spec.P(c)).cwiseAbs().maxCoeff() <= 0.01);
  }
}
