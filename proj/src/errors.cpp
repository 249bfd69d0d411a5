#include "eti/errors.hpp"

#include <algorithm>
#include <sstream>

namespace eti {

std::string to_string(IssueKind kind) {
  switch (kind) {
    case IssueKind::NotStochastic:
      return "NotStochastic";
    case IssueKind::Reducible:
      return "Reducible";
    case IssueKind::MissingReward:
      return "MissingReward";
    case IssueKind::InvalidDistribution:
      return "InvalidDistribution";
    case IssueKind::Malformed:
      return "Malformed";
  }
  return "Unknown";
}

namespace {

std::string summarize(const std::vector<ValidationIssue>& issues) {
  std::ostringstream out;
  out << "invalid chain spec:";
  for (const auto& issue : issues) {
    out << "\n  " << to_string(issue.kind);
    if (issue.chain != 0) out << "(chain " << issue.chain;
    if (issue.chain != 0 && issue.row >= 0) out << ", row " << issue.row;
    if (issue.chain != 0 && issue.col >= 0) out << ", col " << issue.col;
    if (issue.chain != 0) out << ")";
    if (!issue.message.empty()) out << ": " << issue.message;
  }
  return out.str();
}

}  // namespace

SpecValidationError::SpecValidationError(std::vector<ValidationIssue> issues)
    : Error(summarize(issues)), issues_(std::move(issues)) {}

bool SpecValidationError::has(IssueKind kind) const noexcept {
  return std::any_of(issues_.begin(), issues_.end(),
                     [kind](const ValidationIssue& i) { return i.kind == kind; });
}

}  // namespace eti
