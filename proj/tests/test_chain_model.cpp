#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "eti/chain_model.hpp"
#include "eti/design.hpp"
#include "eti/simulator.hpp"
#include "oracles.hpp"

using namespace eti;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

double stationary_residual(const Matrix& P, const Vector& pi) {
  return (pi.transpose() * P - pi.transpose()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("W2 validates") {
  const ChainSpec spec = oracle::w2();
  CHECK(spec.n_states() == 2);
  CHECK(spec.reward(Chain::first, 0, 1).mean() == 1.0);
  CHECK(spec.reward(Chain::second, 1, 0).variance() == doctest::Approx(0.25));
}

TEST_CASE("validation reports every issue") {
  SUBCASE("row sum") {
    RawChainSpec raw = oracle::w2_raw();
    raw.transition[0][0] = {0.5, 0.6};
    try {
      validate_spec(raw);
      FAIL("accepted");
    } catch (const SpecValidationError& e) {
      CHECK(e.has(IssueKind::NotStochastic));
      const auto& issue = e.issues().front();
      CHECK(issue.chain == 1);
      CHECK(issue.row == 0);
    }
  }
  SUBCASE("identity is reducible") {
    RawChainSpec raw = oracle::w2_raw();
    raw.transition[0] = {{1.0, 0.0}, {0.0, 1.0}};
    try {
      validate_spec(raw);
      FAIL("accepted");
    } catch (const SpecValidationError& e) {
      CHECK(e.has(IssueKind::Reducible));
      CHECK_FALSE(e.has(IssueKind::NotStochastic));
    }
  }
  SUBCASE("negative entry") {
    RawChainSpec raw = oracle::w2_raw();
    raw.transition[1][0] = {1.5, -0.5};
    CHECK_THROWS_AS(validate_spec(raw), SpecValidationError);
  }
  SUBCASE("missing reward") {
    RawChainSpec raw = oracle::w2_raw();
    raw.rewards[1][1] = std::nullopt;
    try {
      validate_spec(raw);
      FAIL("accepted");
    } catch (const SpecValidationError& e) {
      REQUIRE(e.has(IssueKind::MissingReward));
      const auto it = std::find_if(e.issues().begin(), e.issues().end(),
                                   [](const ValidationIssue& i) { return i.kind == IssueKind::MissingReward; });
      CHECK(it->chain == 2);
      CHECK(it->row == 0);
      CHECK(it->col == 1);
    }
  }
  SUBCASE("missing reward on a zero-probability transition is fine") {
    RawChainSpec raw = oracle::w2_raw();
    raw.transition[0] = {{0.0, 1.0}, {1.0, 0.0}};
    raw.rewards[0][0] = std::nullopt;
    CHECK_NOTHROW(validate_spec(raw));
  }
  SUBCASE("bad distributions") {
    RawChainSpec raw = oracle::w2_raw();
    raw.rewards[0][0] = RewardDist::bernoulli(1.5);
    raw.rewards[0][1] = RewardDist::uniform(2.0, 1.0);
    raw.rewards[1][0] = RewardDist::discrete({0.0, 1.0}, {0.5, 0.6});
    raw.rewards[1][1] = RewardDist::constant(std::numeric_limits<double>::infinity());
    try {
      validate_spec(raw);
      FAIL("accepted");
    } catch (const SpecValidationError& e) {
      CHECK(std::count_if(e.issues().begin(), e.issues().end(), [](const ValidationIssue& i) {
              return i.kind == IssueKind::InvalidDistribution;
            }) == 4);
    }
  }
  SUBCASE("several problems at once") {
    RawChainSpec raw = oracle::w2_raw();
    raw.transition[0][1] = {0.3, 0.3};
    raw.transition[1] = {{1.0, 0.0}, {0.0, 1.0}};
    try {
      validate_spec(raw);
      FAIL("accepted");
    } catch (const SpecValidationError& e) {
      CHECK(e.has(IssueKind::NotStochastic));
      CHECK(e.has(IssueKind::Reducible));
    }
  }
}

TEST_CASE("reward laws") {
  const RewardDist u = RewardDist::uniform(-1.0, 3.0);
  CHECK(u.mean() == doctest::Approx(1.0));
  CHECK(u.variance() == doctest::Approx(16.0 / 12.0));
  CHECK(u.lower_bound() == -1.0);
  CHECK(u.upper_bound() == 3.0);
  CHECK(u.quantile(0.25) == doctest::Approx(0.0));

  const RewardDist d = RewardDist::discrete({3.0, -1.0, 0.5}, {0.2, 0.5, 0.3});
  CHECK(d.mean() == doctest::Approx(0.6 - 0.5 + 0.15));
  CHECK(d.second_moment() == doctest::Approx(1.8 + 0.5 + 0.075));
  CHECK(d.lower_bound() == -1.0);
  CHECK(d.upper_bound() == 3.0);
  CHECK(d.quantile(0.0) == -1.0);
  CHECK(d.quantile(0.6) == 0.5);
  CHECK(d.quantile(0.95) == 3.0);

  const RewardDist b = RewardDist::bernoulli(0.3);
  CHECK(b.variance() == doctest::Approx(0.21));
  CHECK(b.quantile(0.69) == 0.0);
  CHECK(b.quantile(0.71) == 1.0);
  CHECK(RewardDist::constant(2.5).is_deterministic());
}

TEST_CASE("irreducibility") {
  CHECK(is_irreducible(mat2(0, 1, 1, 0)));
  CHECK_FALSE(is_irreducible(Matrix::Identity(2, 2)));
  const ChainSpec coop = coop_example_spec(5, 0.3, 0.6);
  CHECK(is_irreducible(coop.P(Chain::first)));
  CHECK(is_irreducible(coop.P(Chain::second)));
  Matrix one_way = Matrix::Zero(3, 3);
  one_way << 0, 1, 0, 0, 0, 1, 0, 0, 1;
  CHECK_FALSE(is_irreducible(one_way));
}

TEST_CASE("stationary distribution examples") {
  const Vector half = stationary_distribution(mat2(0.5, 0.5, 0.5, 0.5));
  CHECK(half(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half(1) == doctest::Approx(0.5).epsilon(1e-15));

  const Matrix P1 = mat2(0.9, 0.1, 0.2, 0.8);
  const Vector pi = stationary_distribution(P1);
  const auto expected = oracle::stationary2(P1);
  CHECK(std::abs(pi(0) - expected[0]) <= 1e-12);
  CHECK(std::abs(pi(1) - expected[1]) <= 1e-12);
  CHECK(std::abs(pi(0) - oracle::kPi1[0]) <= 1e-12);

  for (int s : {2, 5, 11}) {
    const ChainSpec coop = coop_example_spec(s, 0.3, 0.6);
    for (Chain c : kChains) {
      const Vector p = stationary_distribution(coop.P(c));
      CHECK((p.array() - 1.0 / s).abs().maxCoeff() <= 1e-12);
    }
  }
  CHECK_THROWS_AS(stationary_distribution(Matrix::Identity(2, 2)), NotIrreducible);
}

TEST_CASE("poisson examples") {
  const Matrix P1 = mat2(0.9, 0.1, 0.2, 0.8);
  Vector r(2);
  r << 1.0, 0.0;
  const Vector g = poisson_solve(P1, r);
  CHECK(std::abs(g(0) - oracle::kG1[0]) <= 1e-12);
  CHECK(std::abs(g(1) - oracle::kG1[1]) <= 1e-12);
  const Vector pi = stationary_distribution(P1);
  CHECK(std::abs(pi.dot(g) - 2.0 / 3.0) <= 1e-12);

  const Vector c = Vector::Constant(2, 3.5);
  const Vector gc = poisson_solve(P1, c);
  CHECK((gc.array() - 3.5).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("random specs: stationary and poisson residuals against the QR oracle") {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 5;
    const ChainSpec spec = validate_spec(oracle::random_raw(rng, n, trial % 2 == 1));
    const ChainAnalysis a = analyze(spec);
    for (Chain c : kChains) {
      const int ci = index_of(c);
      const Matrix& P = spec.P(c);
      const Vector pi = a.pi.row(ci).transpose();
      const Vector r = a.mean_reward.row(ci).transpose();
      const Vector g = a.gtilde.row(ci).transpose();
      CHECK(stationary_residual(P, pi) <= 1e-12);
      CHECK(std::abs(pi.sum() - 1.0) <= 1e-12);
      CHECK(pi.minCoeff() >= 0.0);
      CHECK((oracle::stationary_power(P) - pi).cwiseAbs().maxCoeff() <= 1e-9);
      const Vector rt = r.array() - pi.dot(r);
      CHECK(((Matrix::Identity(n, n) - P) * g - rt).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(std::abs(pi.dot(g) - pi.dot(r)) <= 1e-10);
      CHECK((oracle::poisson_qr(P, pi, r) - g).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK(a.sigma2.row(ci).minCoeff() >= 0.0);
      CHECK(a.sigma2_bar[static_cast<std::size_t>(ci)] == doctest::Approx(pi.dot(a.sigma2.row(ci).transpose())));
      for (int x = 0; x < n; ++x) CHECK(a.eta(ci, x) == doctest::Approx(1.0 / pi(x)));
    }
  }
}

TEST_CASE("W2 state variances and analysis") {
  const ChainAnalysis a = analyze(oracle::w2());
  CHECK(std::abs(a.sigma2(0, 0) - oracle::kSigma2Chain1[0]) <= 1e-12);
  CHECK(std::abs(a.sigma2(0, 1) - oracle::kSigma2Chain1[1]) <= 1e-12);
  CHECK(std::abs(a.sigma2(1, 0) - oracle::kSigma2Chain2) <= 1e-12);
  CHECK(std::abs(a.sigma2(1, 1) - oracle::kSigma2Chain2) <= 1e-12);
  CHECK(std::abs(a.sigma2_bar[0] - oracle::kSigma2Bar1) <= 1e-12);
  CHECK(std::abs(a.sigma2_bar[1] - oracle::kSigma2Bar2) <= 1e-12);
  CHECK(std::abs(a.alpha[0] - oracle::kAlpha1) <= 1e-12);
  CHECK(std::abs(a.alpha[1] - oracle::kAlpha2) <= 1e-12);
  CHECK(std::abs(a.treatment_effect - oracle::kAlpha) <= 1e-12);
  CHECK(a.eta(0, 0) == doctest::Approx(oracle::kEta1First));
  CHECK(a.eta(1, 0) == doctest::Approx(oracle::kEta2First));
  // W2 chain 2 has constant gtilde.
  CHECK(std::abs(a.gtilde(1, 0) - a.gtilde(1, 1)) <= 1e-12);
}

TEST_CASE("deterministic transitions with constant rewards have zero variance") {
  const ChainSpec coop = validate_spec([] {
    RawChainSpec raw = coop_example_spec(4, 0.5, 0.5).to_raw();
    for (auto& chain : raw.rewards)
      for (auto& r : chain)
        if (r) r = RewardDist::constant(1.0);
    return raw;
  }());
  const ChainAnalysis a = analyze(coop);
  CHECK(a.sigma2.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(a.sigma2_bar[0] <= 1e-12);
}

TEST_CASE("identical chains have zero treatment effect") {
  std::mt19937_64 rng(7);
  RawChainSpec raw = oracle::random_raw(rng, 4);
  raw.transition[1] = raw.transition[0];
  raw.rewards[1] = raw.rewards[0];
  const ChainAnalysis a = analyze(validate_spec(raw));
  CHECK(a.treatment_effect == 0.0);
  CHECK((a.sigma2.row(0) - a.sigma2.row(1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("coop spec rewards") {
  for (int s : {2, 4, 8}) {
    const ChainAnalysis a = analyze(coop_example_spec(s, 0.3, 0.6));
    CHECK(a.alpha[0] == doctest::Approx(0.3 / s));
    CHECK(a.alpha[1] == doctest::Approx(0.6 / s));
    CHECK(a.treatment_effect == doctest::Approx(0.3 / s));
  }
}

TEST_CASE("single chain CLT variance") {
  CHECK(single_chain_clt_variance(mat2(0.9, 0.1, 0.2, 0.8), Vector::Constant(2, 4.0)) == doctest::Approx(0.0));
  Vector r(2);
  r << 1.0, 0.0;
  CHECK(std::abs(single_chain_clt_variance(mat2(0.9, 0.1, 0.2, 0.8), r) - oracle::kSigma2Bar1) <= 1e-12);
  CHECK(std::abs(single_chain_clt_variance(mat2(0, 1, 1, 0), r)) <= 1e-12);
}

TEST_CASE("decomposition: state variance splits into CLT part and reward noise") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 5;
    const ChainSpec spec = validate_spec(oracle::random_raw(rng, n, false));
    const ChainAnalysis a = analyze(spec);
    for (Chain c : kChains) {
      const int ci = index_of(c);
      const Matrix& P = spec.P(c);
      const Vector pi = a.pi.row(ci).transpose();
      const Matrix var = spec.transition_variance(c);
      double noise = 0.0;
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) noise += pi(x) * P(x, y) * var(x, y);
      const double clt = single_chain_clt_variance(P, a.mean_reward.row(ci).transpose());
      CHECK(std::abs(a.sigma2_bar[static_cast<std::size_t>(ci)] - (clt + noise)) <= 1e-10);
    }
  }
}

TEST_CASE("y-dependent rewards use the full conditional variance") {
  // i.i.d. states, deterministic rewards that depend on the landing state.
  RawChainSpec raw;
  raw.n_states = 2;
  raw.transition[0] = {{0.5, 0.5}, {0.5, 0.5}};
  raw.transition[1] = raw.transition[0];
  raw.rewards[0] = {RewardDist::constant(0.0), RewardDist::constant(1.0), RewardDist::constant(0.0),
                    RewardDist::constant(1.0)};
  raw.rewards[1] = raw.rewards[0];
  const ChainAnalysis a = analyze(validate_spec(raw));
  // Reward is I(X_{n+1} = 1): a sequence of fair coins, variance 1/4.
  CHECK(a.sigma2_bar[0] == doctest::Approx(0.25));
}

TEST_CASE("state permutation") {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 5;
    const ChainSpec spec = validate_spec(oracle::random_raw(rng, n, trial % 3 == 0));
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const ChainSpec permuted = permute_states(spec, perm);
    const ChainAnalysis a = analyze(spec);
    const ChainAnalysis b = analyze(permuted);
    for (int ci = 0; ci < 2; ++ci) {
      for (int k = 0; k < n; ++k) {
        const int old = perm[static_cast<std::size_t>(k)];
        CHECK(std::abs(b.pi(ci, k) - a.pi(ci, old)) <= 1e-12);
        CHECK(std::abs(b.gtilde(ci, k) - a.gtilde(ci, old)) <= 1e-10);
        CHECK(std::abs(b.sigma2(ci, k) - a.sigma2(ci, old)) <= 1e-10);
      }
      CHECK(std::abs(b.sigma2_bar[static_cast<std::size_t>(ci)] - a.sigma2_bar[static_cast<std::size_t>(ci)]) <=
            1e-10);
    }
    CHECK(std::abs(b.treatment_effect - a.treatment_effect) <= 1e-10);
    const DesignSolution da = solve_optimal_kappa(a.pi, a.sigma2, spec.P(Chain::first), spec.P(Chain::second));
    const DesignSolution db =
        solve_optimal_kappa(b.pi, b.sigma2, permuted.P(Chain::first), permuted.P(Chain::second));
    CHECK(std::abs(da.objective - db.objective) <= 1e-10 * std::max(1.0, da.objective));
  }
}

TEST_CASE("to_raw round trip") {
  const ChainSpec spec = oracle::w2();
  const ChainSpec again = validate_spec(spec.to_raw());
  CHECK(again.P(Chain::first) == spec.P(Chain::first));
  CHECK(again.mean_reward(Chain::second) == spec.mean_reward(Chain::second));
}
