#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "itreval/data.hpp"

namespace itreval {

// Constant outcome shifts change the sampling variance of the value
// estimators; these helpers quantify the penalty and the variance-minimizing
// shift.
struct ShiftDiagnostics {
  double kappa11 = 0.0;  // mean outcome among treated units the rule treats
  double kappa00 = 0.0;  // mean outcome among control units the rule spares
  double delta_star_pav = 0.0;
  double delta_star_pape = 0.0;  // same value; exact only to first order
  std::vector<std::pair<double, double>> penalty_curve;  // (delta, added var)
  std::vector<std::string> warnings;
};

// Added variance of the rule-value estimator when every outcome is shifted by
// delta: delta * p(1-p) * (2*kappa11/n1 + 2*kappa00/n0 + delta*n/(n1*n0)).
double variance_penalty_pav(double delta, double kappa11, double kappa00,
                            double p_f, std::size_t n1, std::size_t n0);

// Variance-minimizing shift: -(n0/n * kappa11 + n1/n * kappa00).
double optimal_shift(double kappa11, double kappa00, std::size_t n1,
                     std::size_t n0);

// Plug-in cell means (kappa11_hat, kappa00_hat).
std::pair<double, double> estimate_kappas(const ExperimentDataset& data,
                                          const TreatmentRule& rule);
std::pair<double, double> estimate_kappas(const ExperimentDataset& data,
                                          const RuleDecisions& decisions);

// Full plug-in diagnostics: kappas, both optima, and an 11-point penalty
// curve spanning +/-3|delta*| (or +/-3 when delta* is 0).
ShiftDiagnostics shift_diagnostics(const ExperimentDataset& data,
                                   const TreatmentRule& rule);
ShiftDiagnostics shift_diagnostics(const ExperimentDataset& data,
                                   const RuleDecisions& decisions);

}  // namespace itreval
