#include "itreval/estimators.hpp"

#include <cmath>

namespace itreval {

namespace {

struct ArmCounts {
  std::size_t n, n1, n0;
};

ArmCounts arm_counts(const ExperimentDataset& data) {
  ArmCounts c{data.n(), data.n_treated(), 0};
  c.n0 = c.n - c.n1;
  if (c.n1 == 0 || c.n0 == 0)
    throw Error(Errc::kEmptyArm, "estimator needs both arms non-empty (n1 = " +
                                     std::to_string(c.n1) + ", n0 = " +
                                     std::to_string(c.n0) + ")");
  return c;
}

void attach_two_arm_variance(Estimate& est, std::span<const double> arm1,
                             std::span<const double> arm0) {
  est.n1 = arm1.size();
  est.n0 = arm0.size();
  if (arm1.size() < 2 || arm0.size() < 2) {
    est.warnings.push_back(warn::kArmTooSmall);
    return;
  }
  double s1 = sample_variance(arm1);
  double s0 = sample_variance(arm0);
  double total = s1 / static_cast<double>(arm1.size()) +
                 s0 / static_cast<double>(arm0.size());
  est.variance_components = {{"s1_sq", s1}, {"s0_sq", s0}, {"total", total}};
  est.std_error = std::sqrt(total);
}

void require_lengths(const ExperimentDataset& data) {
  if (data.treatment.size() != data.outcome.size() ||
      data.covariates.rows != data.outcome.size())
    throw Error(Errc::kLengthMismatch,
                "dataset columns disagree in length; run validate_dataset");
}

void require_decision_length(const ExperimentDataset& data,
                             const RuleDecisions& d) {
  if (d.assign.size() != data.n())
    throw Error(Errc::kLengthMismatch,
                "rule decisions length " + std::to_string(d.assign.size()) +
                    " != dataset size " + std::to_string(data.n()));
}

}  // namespace

Estimate estimate_ate(const ExperimentDataset& data) {
  require_lengths(data);
  ArmCounts c = arm_counts(data);
  std::vector<double> arm1, arm0;
  arm1.reserve(c.n1);
  arm0.reserve(c.n0);
  for (std::size_t i = 0; i < c.n; ++i)
    (data.treatment[i] ? arm1 : arm0).push_back(data.outcome[i]);

  Estimate est;
  est.estimand = Estimand::kAte;
  est.n = c.n;
  est.value = mean_of(arm1) - mean_of(arm0);
  est.treated_proportion = static_cast<double>(c.n1) / static_cast<double>(c.n);
  attach_two_arm_variance(est, arm1, arm0);
  return est;
}

Estimate estimate_pav(const ExperimentDataset& data,
                      const RuleDecisions& decisions) {
  require_lengths(data);
  require_decision_length(data, decisions);
  ArmCounts c = arm_counts(data);

  // Per-unit masked outcomes: f Y when treated, (1 - f) Y when control.
  std::vector<double> arm1, arm0;
  arm1.reserve(c.n1);
  arm0.reserve(c.n0);
  for (std::size_t i = 0; i < c.n; ++i) {
    double f = decisions.assign[i];
    if (data.treatment[i])
      arm1.push_back(f * data.outcome[i]);
    else
      arm0.push_back((1.0 - f) * data.outcome[i]);
  }

  Estimate est;
  est.estimand = Estimand::kPav;
  est.n = c.n;
  est.value = mean_of(arm1) + mean_of(arm0);
  est.treated_proportion = decisions.p_hat;
  attach_two_arm_variance(est, arm1, arm0);
  return est;
}

Estimate estimate_pav(const ExperimentDataset& data, const TreatmentRule& rule) {
  return estimate_pav(data, apply_rule(data.covariates, rule));
}

Estimate estimate_pape(const ExperimentDataset& data,
                       const RuleDecisions& decisions) {
  require_lengths(data);
  require_decision_length(data, decisions);
  ArmCounts c = arm_counts(data);

  double p_hat = decisions.p_hat;
  double scale = static_cast<double>(c.n) / static_cast<double>(c.n - 1);

  // Centered per-unit values (f - p_hat) Y. For a degenerate rule every
  // center term vanishes identically, making the estimate exactly zero.
  std::vector<double> arm1, arm0;
  arm1.reserve(c.n1);
  arm0.reserve(c.n0);
  for (std::size_t i = 0; i < c.n; ++i) {
    double centered = (static_cast<double>(decisions.assign[i]) - p_hat) *
                      data.outcome[i];
    (data.treatment[i] ? arm1 : arm0).push_back(centered);
  }

  Estimate est;
  est.estimand = Estimand::kPape;
  est.n = c.n;
  est.n1 = c.n1;
  est.n0 = c.n0;
  est.treated_proportion = p_hat;
  est.value = scale * (mean_of(arm1) - mean_of(arm0));

  if (decisions.degenerate()) {
    est.warnings.push_back(warn::kDegenerateRule);
    return est;  // no standard error: the estimator is the constant zero
  }
  if (c.n1 < 2 || c.n0 < 2) {
    est.warnings.push_back(warn::kArmTooSmall);
    return est;
  }

  double s1 = sample_variance(arm1);
  double s0 = sample_variance(arm0);
  double tau_hat = estimate_ate(data).value;
  double tau_f = est.value;
  double dn = static_cast<double>(c.n);
  // Finite-sample bracket coupling the gain and the overall effect.
  double bracket = tau_f * tau_f - dn * p_hat * (1.0 - p_hat) * tau_hat * tau_hat +
                   2.0 * (dn - 1.0) * (2.0 * p_hat - 1.0) * tau_f * tau_hat;
  double correction = bracket / (dn * dn);
  double total = scale * scale *
                 (s1 / static_cast<double>(c.n1) +
                  s0 / static_cast<double>(c.n0) + correction);
  est.variance_components = {{"s1_sq", s1},
                             {"s0_sq", s0},
                             {"correction", correction},
                             {"total", total},
                             {"clipped", 0.0}};
  if (total < 0.0) {
    est.variance_components["total"] = 0.0;
    est.variance_components["clipped"] = 1.0;
    est.warnings.push_back(warn::kClipped);
    est.std_error = 0.0;
  } else {
    est.std_error = std::sqrt(total);
  }
  return est;
}

Estimate estimate_pape(const ExperimentDataset& data, const TreatmentRule& rule) {
  return estimate_pape(data, apply_rule(data.covariates, rule));
}

Estimate estimate_pav_difference(const ExperimentDataset& data,
                                 const RuleDecisions& f,
                                 const RuleDecisions& g) {
  require_lengths(data);
  require_decision_length(data, f);
  require_decision_length(data, g);
  ArmCounts c = arm_counts(data);

  // Contrast masks: (f - g) Y on the treated arm, (g - f) Y on control.
  std::vector<double> arm1, arm0;
  arm1.reserve(c.n1);
  arm0.reserve(c.n0);
  for (std::size_t i = 0; i < c.n; ++i) {
    double diff = static_cast<double>(f.assign[i]) - static_cast<double>(g.assign[i]);
    if (data.treatment[i])
      arm1.push_back(diff * data.outcome[i]);
    else
      arm0.push_back(-diff * data.outcome[i]);
  }

  Estimate est;
  est.estimand = Estimand::kPavDifference;
  est.n = c.n;
  est.value = mean_of(arm1) + mean_of(arm0);
  est.treated_proportion = f.p_hat;
  attach_two_arm_variance(est, arm1, arm0);
  return est;
}

Estimate estimate_pav_difference(const ExperimentDataset& data,
                                 const TreatmentRule& f,
                                 const TreatmentRule& g) {
  return estimate_pav_difference(data, apply_rule(data.covariates, f),
                                 apply_rule(data.covariates, g));
}

double pape_upper_bound(double p_f, double var_y1, double var_y0) {
  if (!(p_f >= 0.0 && p_f <= 1.0))
    throw Error(Errc::kDomain, "treated proportion must lie in [0, 1]");
  if (var_y1 < 0.0 || var_y0 < 0.0)
    throw Error(Errc::kDomain, "variances must be non-negative");
  return std::sqrt(2.0 * p_f * (1.0 - p_f) * (var_y1 + var_y0));
}

}  // namespace itreval
