#pragma once

#include "itreval/data.hpp"

namespace itreval {

// Named pieces of a plug-in variance, echoed into reports.
struct VarianceComponents {
  double s1_sq = 0.0;      // within-arm variance, treated side
  double s0_sq = 0.0;      // within-arm variance, control side
  double correction = 0.0; // finite-sample bracket term (zero where absent)
  double total = 0.0;      // assembled variance after any clipping
  bool clipped = false;
};

// Difference in means with the conservative two-arm variance
// s1^2/n1 + s0^2/n0.
Estimate estimate_ate(const ExperimentDataset& data);

// Average outcome a population would realize if treated exactly where the
// rule says to treat. Masked-outcome estimator: treated units contribute
// f(X) Y / n1, controls (1 - f(X)) Y / n0.
Estimate estimate_pav(const ExperimentDataset& data, const TreatmentRule& rule);
Estimate estimate_pav(const ExperimentDataset& data,
                      const RuleDecisions& decisions);

// Gain of the rule over randomly treating the same fraction p_hat of units.
// Centered form: (n/(n-1)) [ sum_T (f - p_hat) Y / n1 - sum_C (f - p_hat) Y / n0 ].
// Degenerate rules (p_hat of 0 or 1) yield exactly 0 with no standard error.
Estimate estimate_pape(const ExperimentDataset& data, const TreatmentRule& rule);
Estimate estimate_pape(const ExperimentDataset& data,
                       const RuleDecisions& decisions);

// Contrast of two rules' population average values on shared data.
Estimate estimate_pav_difference(const ExperimentDataset& data,
                                 const TreatmentRule& f,
                                 const TreatmentRule& g);
Estimate estimate_pav_difference(const ExperimentDataset& data,
                                 const RuleDecisions& f,
                                 const RuleDecisions& g);

// Largest gain any rule treating fraction p_f could attain, from the
// marginal potential-outcome variances: sqrt(2 p (1-p) (v1 + v0)).
double pape_upper_bound(double p_f, double var_y1, double var_y0);

}  // namespace itreval
