#pragma once

#include "itreval/data.hpp"

namespace itreval {

// Two-stage design: first randomize units between the ITR arm (the rule
// itself is the treatment) and a random-treatment arm, then completely
// randomize treatment inside the random arm.
struct ExAnteDesign {
  std::size_t n = 0;
  std::size_t n_f = 0;   // ITR arm size
  std::size_t n_r = 0;   // random arm size, n - n_f
  std::size_t n_r1 = 0;  // treated inside the random arm
  std::size_t n_r0 = 0;  // n_r - n_r1
};

enum class RoundingPolicy {
  kNearest,  // round p_hat * n_r to the nearest count, warn
  kStrict,   // error when p_hat * n_r is not an integer
};

struct ExAnteAssignment {
  std::vector<std::uint8_t> itr_arm;    // F: 1 = evaluated under the rule
  std::vector<std::uint8_t> treatment;  // realized T for every unit
  ExAnteDesign design;
  double p_hat = 0.0;  // rule's treated fraction over the full sample
  bool rounded = false;
};

// Draws F uniformly over C(n, n_f) subsets, computes the rule's treated
// fraction over all n units, targets n_r1 = p_hat * n_r inside the random
// arm, and draws T there uniformly over C(n_r, n_r1). ITR-arm units receive
// exactly the rule's decision.
ExAnteAssignment design_ex_ante(const Matrix& covariates,
                                const TreatmentRule& rule, std::size_t n_f,
                                Rng& rng,
                                RoundingPolicy policy = RoundingPolicy::kNearest);

struct ExAnteDataset {
  Matrix covariates;
  std::vector<std::uint8_t> itr_arm;
  std::vector<std::uint8_t> treatment;
  std::vector<double> outcome;
  ExAnteDesign design;

  std::size_t n() const { return outcome.size(); }
};

ExAnteDataset realize_ex_ante(const PotentialOutcomeTable& table,
                              const ExAnteAssignment& assignment);

// Alignment and consistency check; misalignment between the rule's treated
// fraction and n_r1/n_r is reported as a warning string, not an error.
struct ExAnteCheck {
  std::vector<ValidationIssue> issues;
  std::vector<std::string> warnings;
};
ExAnteCheck check_ex_ante(const ExAnteDataset& data, const TreatmentRule& rule);

// Two-arm gain estimator for the two-stage design: ITR-arm mean against the
// p_hat-weighted random-arm group means, scaled by n/(n-1).
Estimate estimate_pape_ex_ante(const ExAnteDataset& data,
                               const TreatmentRule& rule);
Estimate estimate_pape_ex_ante(const ExAnteDataset& data,
                               const RuleDecisions& decisions);

// Unscaled companion: ITR-arm mean minus random-arm mean. Equals
// (n-1)/n times the estimator above exactly when p_hat = n_r1/n_r.
double intermediate_value_ex_ante(const ExAnteDataset& data);

// Population means of Y(s) conditioned on the rule's decision t.
struct RuleCellMeans {
  double m11 = 0.0;  // E[Y(1) | f = 1]
  double m01 = 0.0;  // E[Y(0) | f = 1]
  double m00 = 0.0;  // E[Y(0) | f = 0]
  double m10 = 0.0;  // E[Y(1) | f = 0]
};
RuleCellMeans rule_cell_means(const PotentialOutcomeTable& table,
                              const RuleDecisions& decisions);

// Closed-form gap Var(two-stage estimator) - Var(ex-post estimator) under
// the balanced design n1 = n0 = n_f = n_r = n/2, n_r1 = n_r0 = n/4, with all
// population moments read off the table.
double variance_difference_ex_ante_vs_ex_post(const PotentialOutcomeTable& table,
                                              const TreatmentRule& rule,
                                              std::size_t n);
double variance_difference_ex_ante_vs_ex_post(const PotentialOutcomeTable& table,
                                              const RuleDecisions& decisions,
                                              std::size_t n);

}  // namespace itreval
