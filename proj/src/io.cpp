#include "eti/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace eti {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const json& require(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw ParseError(std::string("missing key \"") + key + "\"");
  return doc.at(key);
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json estimator_to_json(const EstimatorSummary& s) {
  return {{"mean", s.mean}, {"bias", s.bias}, {"scaled_var", s.scaled_var}, {"scaled_var_ci", s.scaled_var_ci}};
}

}  // namespace

json reward_to_json(const RewardDist& dist) {
  return std::visit(overloaded{
                        [](const ConstantReward& d) { return json{{"type", "constant"}, {"value", d.value}}; },
                        [](const BernoulliReward& d) { return json{{"type", "bernoulli"}, {"p", d.p}}; },
                        [](const UniformReward& d) { return json{{"type", "uniform"}, {"lo", d.lo}, {"hi", d.hi}}; },
                        [](const DiscreteReward& d) {
                          return json{{"type", "discrete"}, {"values", d.values}, {"probs", d.probs}};
                        },
                    },
                    dist.law());
}

RewardDist reward_from_json(const json& doc) {
  try {
    const std::string type = require(doc, "type").get<std::string>();
    if (type == "constant") return RewardDist::constant(require(doc, "value").get<double>());
    if (type == "bernoulli") return RewardDist::bernoulli(require(doc, "p").get<double>());
    if (type == "uniform") {
      return RewardDist::uniform(require(doc, "lo").get<double>(), require(doc, "hi").get<double>());
    }
    if (type == "discrete") {
      return RewardDist(DiscreteReward{require(doc, "values").get<std::vector<double>>(),
                                       require(doc, "probs").get<std::vector<double>>()});
    }
    throw ParseError("unknown reward type \"" + type + "\"");
  } catch (const json::exception& e) {
    throw ParseError(std::string("reward: ") + e.what());
  }
}

RawChainSpec parse_spec(const json& doc) {
  try {
    RawChainSpec raw;
    raw.n_states = require(doc, "n_states").get<int>();
    if (raw.n_states < 1) throw ParseError("n_states must be positive");
    const json& chains = require(doc, "chains");
    if (!chains.is_array() || chains.size() != 2) throw ParseError("\"chains\" must hold exactly two chains");
    const auto n = static_cast<std::size_t>(raw.n_states);
    for (std::size_t c = 0; c < 2; ++c) {
      const json& chain = chains[c];
      raw.transition[c] = require(chain, "P").get<std::vector<std::vector<double>>>();
      raw.rewards[c].assign(n * n, std::nullopt);
      if (chain.contains("rewards")) {
        for (const json& entry : chain.at("rewards")) {
          const int x = require(entry, "x").get<int>();
          const int y = require(entry, "y").get<int>();
          if (x < 0 || y < 0 || x >= raw.n_states || y >= raw.n_states) {
            throw ParseError("reward entry (" + std::to_string(x) + ", " + std::to_string(y) + ") out of range");
          }
          raw.rewards[c][static_cast<std::size_t>(x) * n + static_cast<std::size_t>(y)] =
              reward_from_json(require(entry, "dist"));
        }
      }
      for (auto& r : raw.rewards[c])
        if (!r) r = RewardDist::constant(0.0);
    }
    if (doc.contains("chain_names")) {
      const auto names = doc.at("chain_names").get<std::vector<std::string>>();
      if (names.size() != 2) throw ParseError("\"chain_names\" must hold two names");
      raw.chain_names = {names[0], names[1]};
    }
    if (doc.contains("state_names")) raw.state_names = doc.at("state_names").get<std::vector<std::string>>();
    return raw;
  } catch (const json::exception& e) {
    throw ParseError(std::string("spec: ") + e.what());
  }
}

ChainSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open spec file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("spec file " + path + ": " + e.what());
  }
  return validate_spec(parse_spec(doc));
}

json spec_to_json(const ChainSpec& spec) {
  const int n = spec.n_states();
  json chains = json::array();
  for (Chain c : kChains) {
    json P = json::array();
    json rewards = json::array();
    for (int x = 0; x < n; ++x) {
      json row = json::array();
      for (int y = 0; y < n; ++y) {
        row.push_back(spec.P(c)(x, y));
        rewards.push_back({{"x", x}, {"y", y}, {"dist", reward_to_json(spec.reward(c, x, y))}});
      }
      P.push_back(std::move(row));
    }
    chains.push_back({{"P", std::move(P)}, {"rewards", std::move(rewards)}});
  }
  json doc{{"n_states", n},
           {"chains", std::move(chains)},
           {"chain_names", {spec.chain_name(Chain::first), spec.chain_name(Chain::second)}}};
  if (!spec.state_names().empty()) doc["state_names"] = spec.state_names();
  return doc;
}

json per_chain_to_json(const PerChain& m) {
  json out = json::array();
  for (int c = 0; c < 2; ++c) out.push_back(vector_to_json(m.row(c).transpose()));
  return out;
}

PerChain per_chain_from_json(const json& doc) {
  try {
    if (!doc.is_array() || doc.size() != 2) throw ParseError("expected two per-chain rows");
    const auto a = doc[0].get<std::vector<double>>();
    const auto b = doc[1].get<std::vector<double>>();
    if (a.size() != b.size()) throw ParseError("per-chain rows differ in length");
    PerChain m(2, static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
      m(0, static_cast<Eigen::Index>(i)) = a[i];
      m(1, static_cast<Eigen::Index>(i)) = b[i];
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

json analysis_to_json(const ChainAnalysis& a) {
  return {{"pi", per_chain_to_json(a.pi)},
          {"mean_reward", per_chain_to_json(a.mean_reward)},
          {"gtilde", per_chain_to_json(a.gtilde)},
          {"sigma2", per_chain_to_json(a.sigma2)},
          {"sigma2_bar", a.sigma2_bar},
          {"eta", per_chain_to_json(a.eta)},
          {"alpha", a.alpha},
          {"treatment_effect", a.treatment_effect}};
}

ChainAnalysis analysis_from_json(const json& doc) {
  try {
    ChainAnalysis a;
    a.pi = per_chain_from_json(require(doc, "pi"));
    a.mean_reward = per_chain_from_json(require(doc, "mean_reward"));
    a.gtilde = per_chain_from_json(require(doc, "gtilde"));
    a.sigma2 = per_chain_from_json(require(doc, "sigma2"));
    a.eta = per_chain_from_json(require(doc, "eta"));
    a.sigma2_bar = require(doc, "sigma2_bar").get<std::array<double, 2>>();
    a.alpha = require(doc, "alpha").get<std::array<double, 2>>();
    a.treatment_effect = require(doc, "treatment_effect").get<double>();
    return a;
  } catch (const json::exception& e) {
    throw ParseError(std::string("analysis: ") + e.what());
  }
}

json design_to_json(const DesignSolution& s) {
  return {{"kappa_star", per_chain_to_json(s.kappa_star)},
          {"p_star", s.p_star},
          {"objective", s.objective},
          {"kkt_residual", s.kkt_residual},
          {"iterations", s.iterations},
          {"regularized", s.regularized},
          {"epsilon", s.epsilon}};
}

json regenerative_to_json(const RegenerativeDesign& d) {
  return {{"x_r", d.regen_state},
          {"q_star", d.q_star},
          {"p_star", d.p_star},
          {"variance", d.variance},
          {"kappa", per_chain_to_json(d.kappa)}};
}

json gap_to_json(const VarianceGapReport& r) {
  return {{"markov_variance", r.markov_variance},
          {"markov_regularized", r.markov_regularized},
          {"regenerative_variance", r.regenerative_variance},
          {"ratio", r.ratio}};
}

json run_result_to_json(const RunResult& r) {
  json doc{{"seed", r.seed},
           {"n", r.n},
           {"alpha_hat_mle", r.alpha_mle},
           {"alpha_hat_sae", r.alpha_sae},
           {"mle_pre_j", r.mle_pre_j},
           {"gamma_hat", per_chain_to_json(r.gamma_hat)},
           {"diagnostics", {{"j_step", r.j_step}, {"solver_failures", r.solver_failures}, {"switches", r.switches}}}};
  if (r.alpha_known) doc["alpha_hat_known_pi"] = *r.alpha_known;
  if (r.alpha_cycle) doc["alpha_hat_cycle"] = *r.alpha_cycle;
  if (r.p_hat) doc["p_hat"] = *r.p_hat;
  if (r.p_regen) doc["p_hat_regen"] = *r.p_regen;
  if (r.arrivals) doc["regen_arrivals"] = *r.arrivals;
  json checkpoints = json::array();
  for (const Checkpoint& c : r.checkpoints) {
    json row{{"n", c.n}, {"alpha_hat_mle", c.alpha_mle}, {"alpha_hat_sae", c.alpha_sae},
             {"gamma_hat", per_chain_to_json(c.gamma)}};
    if (c.p_hat) row["p_hat"] = *c.p_hat;
    checkpoints.push_back(std::move(row));
  }
  doc["checkpoints"] = std::move(checkpoints);
  return doc;
}

json mc_summary_to_json(const McSummary& s) {
  json doc{{"reps", s.reps},
           {"n", s.n},
           {"alpha", s.alpha},
           {"mle", estimator_to_json(s.mle)},
           {"sae", estimator_to_json(s.sae)},
           {"gamma_mean", per_chain_to_json(s.gamma_mean)},
           {"mean_solver_failures", s.mean_solver_failures}};
  if (s.known) doc["known_pi"] = estimator_to_json(*s.known);
  if (s.cycle) doc["cycle"] = estimator_to_json(*s.cycle);
  return doc;
}

json coop_row_to_json(const CoopRow& r) {
  json doc{{"s", r.s},
           {"designed_scaled_var", r.designed_var},
           {"designed_scaled_var_ci", r.designed_ci},
           {"designed_raw_scaled_var", r.designed_raw_var},
           {"designed_raw_scaled_var_ci", r.designed_raw_ci}};
  if (r.isolation_var) doc["isolation_scaled_var"] = *r.isolation_var;
  if (r.isolation_ci) doc["isolation_scaled_var_ci"] = *r.isolation_ci;
  if (r.ratio) doc["ratio"] = *r.ratio;
  return doc;
}

json clt_report_to_json(const CltReport& r) {
  return {{"estimator", r.estimator == CltEstimator::mle ? "mle" : "sae"},
          {"predicted_var", r.predicted_var},
          {"empirical_var", r.empirical_var},
          {"variance_ratio", r.variance_ratio},
          {"anderson_darling", r.ad_statistic},
          {"anderson_darling_critical_5pct", kAndersonDarling5},
          {"normality_pass", r.ad_pass}};
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

void write_checkpoint_csv(std::ostream& out, const RunResult& result) {
  out << "n,alpha_hat_mle,alpha_hat_sae,gamma_hat_json\n";
  for (const Checkpoint& c : result.checkpoints) {
    out << c.n << ',' << format_double(c.alpha_mle) << ',' << format_double(c.alpha_sae) << ','
        << csv_quote(per_chain_to_json(c.gamma).dump()) << '\n';
  }
}

void write_policy_trace_csv(std::ostream& out, const RunResult& result) {
  out << "n,p_hat_json\n";
  for (const Checkpoint& c : result.checkpoints) {
    if (!c.p_hat) continue;
    out << c.n << ',' << csv_quote(json(*c.p_hat).dump()) << '\n';
  }
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

}  // namespace eti
