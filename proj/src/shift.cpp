#include "itreval/shift.hpp"

#include <cmath>

#include "itreval/error.hpp"

namespace itreval {

double variance_penalty_pav(double delta, double kappa11, double kappa00,
                            double p_f, std::size_t n1, std::size_t n0) {
  if (!(p_f >= 0.0 && p_f <= 1.0))
    throw Error(Errc::kDomain, "treated-fraction p_f must lie in [0,1]");
  if (n1 < 1 || n0 < 1)
    throw Error(Errc::kDomain, "both arms must be non-empty");
  double d1 = static_cast<double>(n1);
  double d0 = static_cast<double>(n0);
  double n = d1 + d0;
  return delta * p_f * (1.0 - p_f) *
         (2.0 * kappa11 / d1 + 2.0 * kappa00 / d0 + delta * n / (d1 * d0));
}

double optimal_shift(double kappa11, double kappa00, std::size_t n1,
                     std::size_t n0) {
  if (n1 + n0 < 2)
    throw Error(Errc::kDomain, "need at least two units");
  double n = static_cast<double>(n1 + n0);
  return -(static_cast<double>(n0) / n * kappa11 +
           static_cast<double>(n1) / n * kappa00);
}

std::pair<double, double> estimate_kappas(const ExperimentDataset& data,
                                          const RuleDecisions& decisions) {
  if (decisions.assign.size() != data.n())
    throw Error(Errc::kLengthMismatch, "rule decisions do not match dataset");
  double s11 = 0.0, s00 = 0.0;
  std::size_t c11 = 0, c00 = 0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (data.treatment[i] && decisions.assign[i]) {
      s11 += data.outcome[i];
      ++c11;
    } else if (!data.treatment[i] && !decisions.assign[i]) {
      s00 += data.outcome[i];
      ++c00;
    }
  }
  if (c11 == 0)
    throw Error(Errc::kEmptyCell, "no treated unit with rule decision 1");
  if (c00 == 0)
    throw Error(Errc::kEmptyCell, "no control unit with rule decision 0");
  return {s11 / static_cast<double>(c11), s00 / static_cast<double>(c00)};
}

std::pair<double, double> estimate_kappas(const ExperimentDataset& data,
                                          const TreatmentRule& rule) {
  return estimate_kappas(data, apply_rule(data.covariates, rule));
}

ShiftDiagnostics shift_diagnostics(const ExperimentDataset& data,
                                   const RuleDecisions& decisions) {
  ShiftDiagnostics d;
  auto [k11, k00] = estimate_kappas(data, decisions);
  d.kappa11 = k11;
  d.kappa00 = k00;
  std::size_t n1 = data.n_treated();
  std::size_t n0 = data.n_control();
  d.delta_star_pav = optimal_shift(k11, k00, n1, n0);
  d.delta_star_pape = d.delta_star_pav;
  d.warnings.push_back(warn::kHeuristic);  // PAPE optimum exact only to O(1/n)

  double half_span = 3.0 * std::abs(d.delta_star_pav);
  if (half_span == 0.0) half_span = 3.0;
  const int points = 11;
  for (int j = 0; j < points; ++j) {
    // (j - 5) / 5 hits 0 exactly at the center point.
    double delta = half_span * ((static_cast<double>(j) - 5.0) / 5.0);
    d.penalty_curve.emplace_back(
        delta,
        variance_penalty_pav(delta, k11, k00, decisions.p_hat, n1, n0));
  }
  return d;
}

ShiftDiagnostics shift_diagnostics(const ExperimentDataset& data,
                                   const TreatmentRule& rule) {
  return shift_diagnostics(data, apply_rule(data.covariates, rule));
}

}  // namespace itreval
