#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>

#include "resamplekit/error.hpp"

namespace resamplekit {

inline constexpr std::uint64_t kDefaultEnumerationBudget = 10'000'000;

/// Enumeration budget, overridable through RESAMPLEKIT_BUDGET.
inline std::uint64_t enumeration_budget() {
  if (const char* env = std::getenv("RESAMPLEKIT_BUDGET")) {
    char* end = nullptr;
    const unsigned long long value = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && value > 0) return value;
  }
  return kDefaultEnumerationBudget;
}

/// Multiplies counts, saturating at UINT64_MAX.
inline std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a == 0 || b == 0) return 0;
  if (a > UINT64_MAX / b) return UINT64_MAX;
  return a * b;
}

inline void check_budget(std::uint64_t count, std::uint64_t budget, const std::string& what) {
  if (count > budget) {
    fail(ErrorCode::budget_exceeded,
         what + ": " + (count == UINT64_MAX ? std::string("overflow") : std::to_string(count)) +
             " exceeds enumeration budget " + std::to_string(budget));
  }
}

}  // namespace resamplekit
