#include "itreval/report.hpp"

#include <algorithm>

#include "itreval/error.hpp"

namespace itreval {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::kEmptyArm: return "EMPTY_ARM";
    case Errc::kNonfiniteOutcome: return "NONFINITE_OUTCOME";
    case Errc::kRaggedCovariates: return "RAGGED_COVARIATES";
    case Errc::kLengthMismatch: return "LENGTH_MISMATCH";
    case Errc::kBadCounts: return "BAD_COUNTS";
    case Errc::kArmTooSmall: return "ARM_TOO_SMALL";
    case Errc::kDegenerateRule: return "DEGENERATE_RULE";
    case Errc::kDomain: return "DOMAIN";
    case Errc::kEmptyCell: return "EMPTY_CELL";
    case Errc::kUnroundable: return "UNROUNDABLE";
    case Errc::kIndivisible: return "INDIVISIBLE";
    case Errc::kTrainFailure: return "TRAIN_FAILURE";
    case Errc::kTooLarge: return "TOO_LARGE";
    case Errc::kMissingCovariate: return "MISSING_COVARIATE";
    case Errc::kParse: return "PARSE";
    case Errc::kConfig: return "CONFIG";
  }
  return "UNKNOWN";
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string config_hash(std::span<const std::string> parts) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const std::string& part : parts) {
    h = fnv1a64(part, h);
    h = fnv1a64(std::string_view("\x1F", 1), h);
  }
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xF];
    h >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

void merge_warnings(std::vector<std::string>& into,
                    std::span<const std::string> add) {
  for (const std::string& w : add)
    if (std::find(into.begin(), into.end(), w) == into.end())
      into.push_back(w);
}

nlohmann::json estimate_json(const Estimate& est) {
  nlohmann::json j;
  j["estimand"] = estimand_name(est.estimand);
  j["value"] = est.value;
  if (est.std_error) {
    j["std_error"] = *est.std_error;
    j["ci95"] = {est.value - kZ95 * *est.std_error,
                 est.value + kZ95 * *est.std_error};
  } else {
    j["std_error"] = nullptr;
    j["ci95"] = nullptr;
  }
  j["variance_components"] = nlohmann::json::object();
  for (const auto& [key, value] : est.variance_components)
    j["variance_components"][key] = value;
  j["warnings"] = est.warnings;
  j["n"] = est.n;
  j["n1"] = est.n1;
  j["n0"] = est.n0;
  j["treated_proportion"] = est.treated_proportion;
  return j;
}

namespace {

nlohmann::json meta_json(const ReportMeta& meta) {
  nlohmann::json j;
  j["command"] = meta.command;
  j["seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  if (meta.timestamp) j["timestamp"] = *meta.timestamp;
  return j;
}

nlohmann::json fold_json(const FoldEstimate& fold) {
  nlohmann::json j;
  j["fold"] = fold.fold;
  j["rule_label"] = fold.rule_label;
  j["value"] = fold.value;
  j["p_hat"] = fold.p_hat;
  if (fold.variance_plugin)
    j["variance_plugin"] = *fold.variance_plugin;
  else
    j["variance_plugin"] = nullptr;
  j["warnings"] = fold.warnings;
  return j;
}

nlohmann::json crossfit_result_json(const CrossFitResult& result) {
  nlohmann::json j;
  j["pooled"] = estimate_json(result.pooled);
  j["per_fold"] = nlohmann::json::array();
  for (const FoldEstimate& fold : result.per_fold)
    j["per_fold"].push_back(fold_json(fold));
  j["decomposition"] = {
      {"v_single", result.decomposition.v_single},
      {"s_f_sq", result.decomposition.s_f_sq},
      {"v_pooled", result.decomposition.v_pooled},
  };
  return j;
}

}  // namespace

nlohmann::json report_json(const EvaluationReport& report) {
  nlohmann::json j = meta_json(report.meta);
  j["data"] = {{"n", report.n}, {"n1", report.n1}, {"n0", report.n0}};
  j["estimates"] = nlohmann::json::object();
  for (const auto& [name, est] : report.estimates)
    j["estimates"][name] = estimate_json(est);
  if (report.shift) {
    nlohmann::json s;
    s["kappa11_hat"] = report.shift->kappa11;
    s["kappa00_hat"] = report.shift->kappa00;
    s["delta_star_pav"] = report.shift->delta_star_pav;
    s["delta_star_pape"] = report.shift->delta_star_pape;
    s["penalty_curve"] = nlohmann::json::array();
    for (const auto& [delta, penalty] : report.shift->penalty_curve)
      s["penalty_curve"].push_back({delta, penalty});
    s["warnings"] = report.shift->warnings;
    if (report.applied_shift) s["applied_shift"] = *report.applied_shift;
    j["shift"] = s;
  }
  j["warnings"] = report.warnings;
  j["notes"] = report.notes;
  return j;
}

nlohmann::json crossfit_json(const CrossFitReport& report) {
  nlohmann::json j = meta_json(report.meta);
  j["algorithm"] = report.algorithm;
  j["k"] = report.K;
  j["pav"] = crossfit_result_json(report.pav);
  j["pape"] = crossfit_result_json(report.pape);
  j["warnings"] = report.warnings;
  return j;
}

std::string render_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace itreval
