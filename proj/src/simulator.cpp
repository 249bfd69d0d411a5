#include "eti/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace eti {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t replication_seed(std::uint64_t base, std::uint64_t rep) noexcept { return mix64(mix64(base) ^ rep); }

std::uint64_t stream_seed(std::uint64_t replication, Stream s) noexcept {
  return mix64(replication + 0x632be59bd9b4e019ULL * static_cast<std::uint64_t>(s));
}

Streams::Streams(std::uint64_t replication)
    : transition(stream_seed(replication, Stream::transition)),
      reward(stream_seed(replication, Stream::reward)),
      policy(stream_seed(replication, Stream::policy)) {}

// ---------------------------------------------------------------------------
// Sampler

Sampler::Sampler(const ChainSpec& spec) : n_(spec.n_states()) {
  const auto n = static_cast<std::size_t>(n_);
  cdf_.assign(2 * n * n, 0.0);
  last_.assign(2 * n, 0);
  laws_.resize(2 * n * n);
  for (Chain c : kChains) {
    const Matrix& P = spec.P(c);
    for (int x = 0; x < n_; ++x) {
      const std::size_t row = static_cast<std::size_t>(index_of(c) * n_ + x);
      double cum = 0.0;
      int last = 0;
      for (int y = 0; y < n_; ++y) {
        cum += P(x, y);
        cdf_[row * n + static_cast<std::size_t>(y)] = cum;
        if (P(x, y) > 0.0) last = y;
      }
      for (int y = last; y < n_; ++y) cdf_[row * n + static_cast<std::size_t>(y)] = 1.0;
      last_[row] = last;

      for (int y = 0; y < n_; ++y) {
        Law& law = laws_[row * n + static_cast<std::size_t>(y)];
        std::visit(overloaded{
                       [&](const ConstantReward& d) { law = {Kind::constant, d.value, 0.0, 0, 0}; },
                       [&](const BernoulliReward& d) { law = {Kind::bernoulli, 1.0 - d.p, 0.0, 0, 0}; },
                       [&](const UniformReward& d) { law = {Kind::uniform, d.lo, d.hi - d.lo, 0, 0}; },
                       [&](const DiscreteReward& d) {
                         law.kind = Kind::discrete;
                         law.offset = static_cast<std::uint32_t>(discrete_values_.size());
                         law.size = static_cast<std::uint32_t>(d.values.size());
                         double acc = 0.0;
                         for (std::size_t i = 0; i < d.values.size(); ++i) {
                           acc += d.probs[i];
                           discrete_values_.push_back(d.values[i]);
                           discrete_cdf_.push_back(acc);
                         }
                       },
                   },
                   spec.reward(c, x, y).law());
      }
    }
  }
}

int Sampler::next_state(Chain c, int x, double u) const noexcept {
  const std::size_t row = static_cast<std::size_t>(index_of(c) * n_ + x);
  const double* cdf = cdf_.data() + row * static_cast<std::size_t>(n_);
  for (int y = 0; y < n_; ++y)
    if (u < cdf[y]) return y;
  return last_[row];
}

double Sampler::reward(Chain c, int x, int y, double v) const noexcept {
  const Law& law =
      laws_[static_cast<std::size_t>((index_of(c) * n_ + x) * n_ + y)];
  switch (law.kind) {
    case Kind::constant:
      return law.a;
    case Kind::bernoulli:
      return v < law.a ? 0.0 : 1.0;
    case Kind::uniform:
      return law.a + law.b * v;
    case Kind::discrete:
      for (std::uint32_t i = 0; i + 1 < law.size; ++i)
        if (v < discrete_cdf_[law.offset + i]) return discrete_values_[law.offset + i];
      return discrete_values_[law.offset + law.size - 1];
  }
  return 0.0;
}

StepOutcome sample_step(const Sampler& sampler, Chain c, int x, Streams& streams) {
  const double u = streams.transition.uniform();
  const double v = streams.reward.uniform();
  const int y = sampler.next_state(c, x, u);
  return {y, sampler.reward(c, x, y, v)};
}

// ---------------------------------------------------------------------------
// Simulation

void validate_design(const SamplingDesign& design, int n_states) {
  std::visit(overloaded{
                 [&](const PolicyConfig& p) { validate_policy(p, n_states); },
                 [](const OnlineEtiConfig& c) {
                   if (!(c.beta > 0.0 && c.beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1)");
                 },
                 [&](const OnlineEti2Config& c) {
                   if (c.regen_state < 0 || c.regen_state >= n_states)
                     throw InvalidArgument("regeneration state out of range");
                   if (!(c.beta > 0.0 && c.beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1)");
                 },
             },
             design);
}

int default_initial_state(const SamplingDesign& design) {
  if (const auto* c = std::get_if<OnlineEti2Config>(&design)) return c->regen_state;
  return 0;
}

namespace {

std::variant<PolicyState, OnlineEti, OnlineEti2> make_controller(const SamplingDesign& design, int n) {
  return std::visit(
      overloaded{
          [&](const PolicyConfig& p) -> std::variant<PolicyState, OnlineEti, OnlineEti2> { return PolicyState(p, n); },
          [&](const OnlineEtiConfig& c) -> std::variant<PolicyState, OnlineEti, OnlineEti2> {
            return OnlineEti(n, c);
          },
          [&](const OnlineEti2Config& c) -> std::variant<PolicyState, OnlineEti, OnlineEti2> {
            return OnlineEti2(n, c);
          },
      },
      design);
}

}  // namespace

Simulation::Simulation(const ChainSpec& spec, const SamplingDesign& design, std::uint64_t replication_seed,
                       std::optional<int> initial_state)
    : sampler_(spec),
      streams_(replication_seed),
      controller_(make_controller(design, spec.n_states())),
      state_(initial_state.value_or(default_initial_state(design))) {
  if (state_ < 0 || state_ >= spec.n_states()) throw InvalidArgument("initial state out of range");
  if (std::holds_alternative<PolicyState>(controller_)) own_stats_.emplace(spec.n_states());
}

const SufficientStats& Simulation::stats() const noexcept {
  if (own_stats_) return *own_stats_;
  if (const auto* e = std::get_if<OnlineEti>(&controller_)) return e->stats();
  return std::get<OnlineEti2>(controller_).stats();
}

std::pair<StepRecord, PolicyDecision> Simulation::step_with_decision() {
  const int x = state_;
  const double u = streams_.policy.uniform();
  PolicyDecision decision;
  if (auto* p = std::get_if<PolicyState>(&controller_)) {
    decision = p->decide(x, u);
  } else if (auto* e = std::get_if<OnlineEti>(&controller_)) {
    decision = e->step(x, u);
  } else {
    decision = std::get<OnlineEti2>(controller_).step(x, u);
  }
  const Chain a = decision.action;
  const StepOutcome out = sample_step(sampler_, a, x, streams_);
  if (own_stats_) {
    own_stats_->record(x, a, out.reward, out.next_state);
  } else if (auto* e = std::get_if<OnlineEti>(&controller_)) {
    e->observe(x, a, out.reward, out.next_state);
  } else {
    std::get<OnlineEti2>(controller_).observe(x, a, out.reward, out.next_state);
  }
  if (last_action_ && *last_action_ != a) ++switches_;
  last_action_ = a;
  state_ = out.next_state;
  return {StepRecord{stats().steps(), x, a, out.reward, out.next_state}, decision};
}

void Simulation::advance(std::int64_t steps) {
  for (std::int64_t i = 0; i < steps; ++i) step_with_decision();
}

std::optional<std::vector<double>> Simulation::p_snapshot() const {
  if (const auto* e = eti()) return e->p_snapshot();
  if (const auto* e = eti2()) return std::vector<double>{e->p_regen()};
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Runs

namespace {

struct SafeMle {
  double alpha = 0.0;
  bool pre_j = true;
  bool failed = false;
};

SafeMle safe_mle(const SufficientStats& stats) {
  try {
    const MleEstimate est = mle_alpha(stats);
    return {est.alpha_hat, est.pre_j, false};
  } catch (const SingularSystem&) {
    return {0.0, false, true};
  }
}

}  // namespace

RunResult run(const ChainSpec& spec, const SamplingDesign& design, const RunOptions& options, std::uint64_t seed) {
  if (options.n < 1) throw InvalidArgument("run: n must be >= 1");
  if (options.checkpoint_every < 0) throw InvalidArgument("run: checkpoint interval must be >= 0");
  validate_design(design, spec.n_states());
  Simulation sim(spec, design, seed, options.initial_state);
  RunResult result;
  result.seed = seed;
  result.n = options.n;
  std::int64_t failures = 0;

  std::int64_t done = 0;
  while (done < options.n) {
    std::int64_t chunk = options.n - done;
    if (options.checkpoint_every > 0) chunk = std::min(chunk, options.checkpoint_every - done % options.checkpoint_every);
    sim.advance(chunk);
    done += chunk;
    if (options.checkpoint_every > 0 && (done % options.checkpoint_every == 0 || done == options.n)) {
      const SafeMle mle = safe_mle(sim.stats());
      failures += mle.failed ? 1 : 0;
      result.checkpoints.push_back(
          Checkpoint{done, mle.alpha, sae_alpha(sim.stats()), empirical_limits(sim.stats()), sim.p_snapshot()});
    }
  }

  const SufficientStats& stats = sim.stats();
  const SafeMle mle = safe_mle(stats);
  failures += mle.failed ? 1 : 0;
  result.alpha_mle = mle.alpha;
  result.mle_pre_j = mle.pre_j;
  result.alpha_sae = sae_alpha(stats);
  if (options.known_pi) result.alpha_known = plugin_alpha(stats, *options.known_pi);
  result.gamma_hat = empirical_limits(stats);
  result.j_step = stats.j_step();
  result.switches = sim.switches();
  result.p_hat = sim.p_snapshot();
  if (const auto* e = sim.eti()) failures += e->solver_failures();
  if (const auto* e = sim.eti2()) {
    result.alpha_cycle = e->cycle_alpha();
    result.p_regen = e->p_regen();
    result.arrivals = e->arrivals();
  }
  result.solver_failures = failures;
  return result;
}

std::vector<RunResult> replicate(const ChainSpec& spec, const SamplingDesign& design, const McOptions& options) {
  if (options.reps < 2) throw InvalidArgument("monte_carlo: reps must be >= 2");
  if (options.threads < 1) throw InvalidArgument("monte_carlo: threads must be >= 1");
  validate_design(design, spec.n_states());
  RunOptions run_options;
  run_options.n = options.n;
  run_options.initial_state = options.initial_state;
  if (options.known_pi) run_options.known_pi = analyze(spec).pi;

  std::vector<RunResult> results(static_cast<std::size_t>(options.reps));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const int rep = next.fetch_add(1);
      if (rep >= options.reps) return;
      try {
        results[static_cast<std::size_t>(rep)] =
            run(spec, design, run_options, replication_seed(options.base_seed, static_cast<std::uint64_t>(rep)));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(options.reps);
        return;
      }
    }
  };
  const int threads = std::min(options.threads, options.reps);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

EstimatorSummary summarize_estimates(const std::vector<double>& values, double truth, std::int64_t n) {
  const auto reps = static_cast<double>(values.size());
  EstimatorSummary s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / reps;
  s.bias = s.mean - truth;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - s.mean) * (values[i] - s.mean);
  const double ss = std::accumulate(sq.begin(), sq.end(), 0.0);
  const double var = ss / (reps - 1.0);
  s.scaled_var = static_cast<double>(n) * var;
  const double sq_mean = ss / reps;
  double sq_ss = 0.0;
  for (double d : sq) sq_ss += (d - sq_mean) * (d - sq_mean);
  const double sq_sd = std::sqrt(sq_ss / (reps - 1.0));
  s.scaled_var_ci = 1.96 * static_cast<double>(n) * sq_sd / std::sqrt(reps);
  return s;
}

McSummary summarize(const std::vector<RunResult>& runs, double alpha, std::int64_t n) {
  McSummary m;
  m.reps = static_cast<int>(runs.size());
  m.n = n;
  m.alpha = alpha;
  std::vector<double> mle, sae, known, cycle;
  m.gamma_mean = KappaVector::Zero(2, runs.front().gamma_hat.cols());
  double failures = 0.0;
  for (const RunResult& r : runs) {
    mle.push_back(r.alpha_mle);
    sae.push_back(r.alpha_sae);
    if (r.alpha_known) known.push_back(*r.alpha_known);
    if (r.alpha_cycle) cycle.push_back(*r.alpha_cycle);
    m.gamma_mean += r.gamma_hat;
    failures += static_cast<double>(r.solver_failures);
  }
  const auto reps = static_cast<double>(runs.size());
  m.gamma_mean /= reps;
  m.mean_solver_failures = failures / reps;
  m.mle = summarize_estimates(mle, alpha, n);
  m.sae = summarize_estimates(sae, alpha, n);
  if (known.size() == runs.size()) m.known = summarize_estimates(known, alpha, n);
  if (cycle.size() == runs.size()) m.cycle = summarize_estimates(cycle, alpha, n);
  return m;
}

McSummary monte_carlo(const ChainSpec& spec, const SamplingDesign& design, const McOptions& options) {
  const double alpha = analyze(spec).treatment_effect;
  return summarize(replicate(spec, design, options), alpha, options.n);
}

// ---------------------------------------------------------------------------
// Cooperative exploration example

ChainSpec coop_example_spec(int s, double q1, double q2) {
  if (s < 2) throw InvalidArgument("coop_example_spec: s must be >= 2");
  if (!(q1 > 0.0 && q1 < 1.0 && q2 > 0.0 && q2 < 1.0)) {
    throw InvalidArgument("coop_example_spec: q1 and q2 must lie in (0, 1)");
  }
  RawChainSpec raw;
  raw.n_states = s;
  const auto n = static_cast<std::size_t>(s);
  for (Chain c : kChains) {
    const auto ci = static_cast<std::size_t>(index_of(c));
    raw.transition[ci].assign(n, std::vector<double>(n, 0.0));
    raw.rewards[ci].assign(n * n, std::nullopt);
    for (int x = 0; x < s; ++x) {
      const int y = c == Chain::first ? (x + 1) % s : (x + s - 1) % s;
      raw.transition[ci][static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = 1.0;
      raw.rewards[ci][static_cast<std::size_t>(x * s + y)] =
          x == 0 ? RewardDist::bernoulli(c == Chain::first ? q1 : q2) : RewardDist::constant(0.0);
    }
  }
  return validate_spec(raw);
}

PolicyConfig coop_designed_policy(int s) {
  if (s < 2) throw InvalidArgument("coop_designed_policy: s must be >= 2");
  return CoopAlternating{};
}

CoopRow coop_experiment(int s, const CoopOptions& options) {
  const ChainSpec spec = coop_example_spec(s, options.q1, options.q2);
  McOptions mc;
  mc.n = options.n;
  mc.reps = options.reps;
  mc.base_seed = mix64(options.base_seed ^ static_cast<std::uint64_t>(s));
  mc.threads = options.threads;
  mc.initial_state = 0;
  mc.known_pi = true;
  const double alpha = (options.q2 - options.q1) / s;
  const double scale = static_cast<double>(s);

  auto scaled = [&](const std::vector<double>& values) {
    std::vector<double> v(values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = scale * values[i];
    return summarize_estimates(v, scale * alpha, options.n);
  };

  CoopRow row;
  row.s = s;
  std::vector<double> designed;
  for (const RunResult& r : replicate(spec, SamplingDesign{coop_designed_policy(s)}, mc)) {
    designed.push_back(*r.alpha_known);
  }
  const EstimatorSummary d = scaled(designed);
  const EstimatorSummary raw = summarize_estimates(designed, alpha, options.n);
  row.designed_var = d.scaled_var;
  row.designed_ci = d.scaled_var_ci;
  row.designed_raw_var = raw.scaled_var;
  row.designed_raw_ci = raw.scaled_var_ci;

  if (options.isolation) {
    McOptions first = mc;
    first.base_seed = mix64(mc.base_seed ^ 0x1111111111111111ULL);
    McOptions second = mc;
    second.base_seed = mix64(mc.base_seed ^ 0x2222222222222222ULL);
    const auto runs1 = replicate(spec, SamplingDesign{PolicyConfig{SingleChain{Chain::first}}}, first);
    const auto runs2 = replicate(spec, SamplingDesign{PolicyConfig{SingleChain{Chain::second}}}, second);
    std::vector<double> isolated(runs1.size());
    // Each single-chain run reports pi r_hat(other) - pi r_hat(own) with the unused chain at 0.
    for (std::size_t i = 0; i < isolated.size(); ++i) isolated[i] = *runs1[i].alpha_known + *runs2[i].alpha_known;
    const EstimatorSummary iso = scaled(isolated);
    row.isolation_var = iso.scaled_var;
    row.isolation_ci = iso.scaled_var_ci;
    row.ratio = iso.scaled_var / d.scaled_var;
  }
  return row;
}

// ---------------------------------------------------------------------------
// CLT validation

double anderson_darling(std::vector<double> z) {
  if (z.empty()) throw InvalidArgument("anderson_darling: empty sample");
  std::sort(z.begin(), z.end());
  const auto n = static_cast<double>(z.size());
  auto cdf = [](double v) { return std::clamp(0.5 * std::erfc(-v / std::sqrt(2.0)), 1e-300, 1.0 - 1e-16); };
  double sum = 0.0;
  const std::size_t m = z.size();
  for (std::size_t i = 0; i < m; ++i) {
    const double k = 2.0 * static_cast<double>(i + 1) - 1.0;
    sum += k * (std::log(cdf(z[i])) + std::log(1.0 - cdf(z[m - 1 - i])));
  }
  return -n - sum / n;
}

CltReport clt_report(const ChainSpec& spec, const PolicyConfig& policy, const McOptions& options) {
  const ChainAnalysis analysis = analyze(spec);
  CltReport report;
  if (const auto* markov = std::get_if<StationaryMarkov>(&policy)) {
    const KappaVector kappa =
        kappa_from_markov(markov->p_first, spec.P(Chain::first), spec.P(Chain::second));
    report.estimator = CltEstimator::mle;
    report.predicted_var = mle_variance(kappa, analysis.pi, analysis.sigma2);
  } else if (const auto* regen = std::get_if<Regenerative>(&policy)) {
    const double q = q_from_p(regen->p_regen, analysis.eta(0, regen->regen_state),
                              analysis.eta(1, regen->regen_state));
    report.estimator = CltEstimator::sae;
    report.predicted_var =
        sae_variance(q, analysis.sigma_bar(Chain::first), analysis.sigma_bar(Chain::second));
  } else {
    throw InvalidArgument("clt_report: needs a stationary Markov or stationary regenerative policy");
  }

  const auto runs = replicate(spec, SamplingDesign{policy}, options);
  std::vector<double> values;
  values.reserve(runs.size());
  for (const RunResult& r : runs) values.push_back(report.estimator == CltEstimator::mle ? r.alpha_mle : r.alpha_sae);
  report.empirical_var = summarize_estimates(values, analysis.treatment_effect, options.n).scaled_var;

  if (report.predicted_var > 0.0) {
    report.variance_ratio = report.empirical_var / report.predicted_var;
    const double scale = std::sqrt(static_cast<double>(options.n) / report.predicted_var);
    std::vector<double> z(values.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = scale * (values[i] - analysis.treatment_effect);
    report.ad_statistic = anderson_darling(std::move(z));
    report.ad_pass = report.ad_statistic < kAndersonDarling5;
  } else {
    report.variance_ratio = report.empirical_var == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    report.ad_pass = report.empirical_var == 0.0;
  }
  return report;
}

}  // namespace eti
