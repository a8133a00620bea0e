#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace resamplekit {

enum class ErrorCode {
  invalid_argument,
  syntax,
  cyclic_reference,
  unknown_input,
  arity_mismatch,
  unknown_node,
  infeasible_layout,
  infeasible_pair,
  budget_exceeded,
  non_finite,
  quadrature,
  tie,
  file_not_found,
  schema,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::syntax: return "syntax_error";
    case ErrorCode::cyclic_reference: return "cyclic_reference";
    case ErrorCode::unknown_input: return "unknown_input";
    case ErrorCode::arity_mismatch: return "arity_mismatch";
    case ErrorCode::unknown_node: return "unknown_node";
    case ErrorCode::infeasible_layout: return "infeasible_layout";
    case ErrorCode::infeasible_pair: return "infeasible_pair";
    case ErrorCode::budget_exceeded: return "budget_exceeded";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::quadrature: return "quadrature_failure";
    case ErrorCode::tie: return "tie_detected";
    case ErrorCode::file_not_found: return "file_not_found";
    case ErrorCode::schema: return "schema_violation";
  }
  return "unknown";
}

/// Library-wide exception. Every failure carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace resamplekit
