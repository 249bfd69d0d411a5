#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace eti {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A transition matrix whose support graph is not strongly connected was
/// handed to an operation that needs a unique stationary distribution.
class NotIrreducible : public Error {
 public:
  using Error::Error;
};

/// Dense LU solve reported a singular (or numerically singular) system.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

enum class IssueKind { NotStochastic, Reducible, MissingReward, InvalidDistribution, Malformed };

struct ValidationIssue {
  IssueKind kind;
  int chain = 0;  // 1 or 2; 0 when not chain specific
  int row = -1;
  int col = -1;
  std::string message;
};

std::string to_string(IssueKind kind);

/// Raised by validate_spec; carries every problem found, not just the first.
class SpecValidationError : public Error {
 public:
  explicit SpecValidationError(std::vector<ValidationIssue> issues);

  const std::vector<ValidationIssue>& issues() const noexcept { return issues_; }
  bool has(IssueKind kind) const noexcept;

 private:
  std::vector<ValidationIssue> issues_;
};

}  // namespace eti
