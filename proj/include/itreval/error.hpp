#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace itreval {

// Machine-readable failure categories surfaced through exceptions and
// validation reports. String form is stable and appears in CLI output.
enum class Errc {
  kEmptyArm,
  kNonfiniteOutcome,
  kRaggedCovariates,
  kLengthMismatch,
  kBadCounts,
  kArmTooSmall,
  kDegenerateRule,
  kDomain,
  kEmptyCell,
  kUnroundable,
  kIndivisible,
  kTrainFailure,
  kTooLarge,
  kMissingCovariate,
  kParse,
  kConfig,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

// One violated requirement, tied to the offending unit where applicable.
struct ValidationIssue {
  Errc code;
  std::optional<std::size_t> unit;  // row index, absent for dataset-level issues
  std::string message;
};

class ValidationError : public Error {
 public:
  ValidationError(std::vector<ValidationIssue> issues, std::string summary)
      : Error(issues.empty() ? Errc::kLengthMismatch : issues.front().code,
              std::move(summary)),
        issues_(std::move(issues)) {}
  const std::vector<ValidationIssue>& issues() const { return issues_; }

 private:
  std::vector<ValidationIssue> issues_;
};

// Non-fatal conditions attached to estimates and reports.
namespace warn {
inline constexpr const char* kClipped = "CLIPPED";
inline constexpr const char* kDegenerateRule = "DEGENERATE_RULE";
inline constexpr const char* kHeuristic = "HEURISTIC";
inline constexpr const char* kArmTooSmall = "ARM_TOO_SMALL";
inline constexpr const char* kMisaligned = "MISALIGNED_DESIGN";
inline constexpr const char* kRounded = "ROUNDED_DESIGN";
}  // namespace warn

}  // namespace itreval
