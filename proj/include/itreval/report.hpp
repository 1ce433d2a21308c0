#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "itreval/crossfit.hpp"
#include "itreval/data.hpp"
#include "itreval/shift.hpp"

namespace itreval {

inline constexpr double kZ95 = 1.959963984540054;

// 64-bit FNV-1a; reports carry a hex config hash so a run can be replayed
// and compared byte for byte.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis);
std::string config_hash(std::span<const std::string> parts);

struct ReportMeta {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;
  // Absent by default so identical runs produce identical bytes.
  std::optional<std::string> timestamp;
};

struct EvaluationReport {
  ReportMeta meta;
  std::size_t n = 0;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  std::vector<std::pair<std::string, Estimate>> estimates;
  std::optional<ShiftDiagnostics> shift;
  std::optional<double> applied_shift;
  std::vector<std::string> warnings;  // union over estimates, deduplicated
  std::vector<std::string> notes;
};

struct CrossFitReport {
  ReportMeta meta;
  std::string algorithm;
  std::size_t K = 0;
  CrossFitResult pav;
  CrossFitResult pape;
  std::vector<std::string> warnings;
};

nlohmann::json estimate_json(const Estimate& est);
nlohmann::json report_json(const EvaluationReport& report);
nlohmann::json crossfit_json(const CrossFitReport& report);

// dump(2) with a trailing newline; nlohmann's double writer emits the
// shortest lossless representation, and std::map keys are already sorted.
std::string render_json(const nlohmann::json& j);

// Collects estimate warnings into the report-level union, preserving first
// appearance order.
void merge_warnings(std::vector<std::string>& into,
                    std::span<const std::string> add);

}  // namespace itreval
