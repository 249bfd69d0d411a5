#pragma once

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>

#include "eti/chain_model.hpp"
#include "eti/design.hpp"
#include "eti/simulator.hpp"

namespace eti {

using json = nlohmann::json;

/// Structural problem in a JSON document (wrong types, missing keys).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Schema:
///   {"n_states": 2,
///    "chains": [{"P": [[...], ...], "rewards": [{"x": 0, "y": 1, "dist": {...}}, ...]}, {...}],
///    "chain_names": [..], "state_names": [..]}
/// dist is one of {"type": "constant", "value": c}, {"type": "bernoulli", "p": p},
/// {"type": "uniform", "lo": a, "hi": b}, {"type": "discrete", "values": [...], "probs": [...]}.
/// Rewards left out default to constant 0.
RawChainSpec parse_spec(const json& doc);
ChainSpec load_spec(const std::string& path);
json spec_to_json(const ChainSpec& spec);

json reward_to_json(const RewardDist& dist);
RewardDist reward_from_json(const json& doc);

json per_chain_to_json(const PerChain& m);
PerChain per_chain_from_json(const json& doc);

json analysis_to_json(const ChainAnalysis& analysis);
ChainAnalysis analysis_from_json(const json& doc);

json design_to_json(const DesignSolution& solution);
json regenerative_to_json(const RegenerativeDesign& design);
json gap_to_json(const VarianceGapReport& report);

json run_result_to_json(const RunResult& result);
json mc_summary_to_json(const McSummary& summary);
json coop_row_to_json(const CoopRow& row);
json clt_report_to_json(const CltReport& report);

/// Header `n,alpha_hat_mle,alpha_hat_sae,gamma_hat_json`; numbers printed with
/// 17 significant digits, the gamma column as a quoted JSON array; LF line endings.
void write_checkpoint_csv(std::ostream& out, const RunResult& result);
/// Header `n,p_hat_json`, one row per checkpoint carrying a p snapshot.
void write_policy_trace_csv(std::ostream& out, const RunResult& result);

/// FNV-1a 64 of the compact serialization, as 16 hex digits.
std::string config_hash(const json& config);

std::string format_double(double v);

}  // namespace eti
