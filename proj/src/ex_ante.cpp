#include "itreval/ex_ante.hpp"

#include <cmath>

namespace itreval {

ExAnteAssignment design_ex_ante(const Matrix& covariates,
                                const TreatmentRule& rule, std::size_t n_f,
                                Rng& rng, RoundingPolicy policy) {
  std::size_t n = covariates.rows;
  if (n == 0 || n_f == 0 || n_f >= n)
    throw Error(Errc::kBadCounts,
                "two-stage design needs 1 <= n_f < n, got n_f = " +
                    std::to_string(n_f) + ", n = " + std::to_string(n));

  ExAnteAssignment out;
  out.design.n = n;
  out.design.n_f = n_f;
  out.design.n_r = n - n_f;

  RuleDecisions decisions = apply_rule(covariates, rule);
  out.p_hat = decisions.p_hat;

  double target = out.p_hat * static_cast<double>(out.design.n_r);
  double nearest = std::nearbyint(target);
  if (std::abs(target - nearest) > 1e-9) {
    if (policy == RoundingPolicy::kStrict)
      throw Error(Errc::kUnroundable,
                  "p_hat * n_r = " + std::to_string(target) +
                      " is not an integer and strict rounding was requested");
    out.rounded = true;
  }
  out.design.n_r1 = static_cast<std::size_t>(nearest);
  if (out.design.n_r1 > out.design.n_r) out.design.n_r1 = out.design.n_r;
  out.design.n_r0 = out.design.n_r - out.design.n_r1;

  out.itr_arm = draw_complete_randomization(n, n_f, rng);

  // Second stage: complete randomization among random-arm units only. A
  // degenerate rule pins the whole random arm to one condition.
  std::vector<std::uint8_t> random_arm_t;
  if (out.design.n_r1 == 0 || out.design.n_r1 == out.design.n_r)
    random_arm_t.assign(out.design.n_r,
                        out.design.n_r1 == 0 ? std::uint8_t{0} : std::uint8_t{1});
  else
    random_arm_t =
        draw_complete_randomization(out.design.n_r, out.design.n_r1, rng);
  out.treatment.assign(n, 0);
  std::size_t r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.itr_arm[i])
      out.treatment[i] = decisions.assign[i];
    else
      out.treatment[i] = random_arm_t[r++];
  }
  return out;
}

ExAnteDataset realize_ex_ante(const PotentialOutcomeTable& table,
                              const ExAnteAssignment& assignment) {
  if (assignment.itr_arm.size() != table.size() ||
      assignment.treatment.size() != table.size())
    throw Error(Errc::kLengthMismatch,
                "assignment length does not match table size");
  ExAnteDataset data;
  data.covariates = table.covariates;
  data.itr_arm = assignment.itr_arm;
  data.treatment = assignment.treatment;
  data.design = assignment.design;
  data.outcome.resize(table.size());
  for (std::size_t i = 0; i < table.size(); ++i)
    data.outcome[i] = assignment.treatment[i] ? table.y1[i] : table.y0[i];
  return data;
}

ExAnteCheck check_ex_ante(const ExAnteDataset& data, const TreatmentRule& rule) {
  ExAnteCheck out;
  std::size_t n = data.n();
  if (data.itr_arm.size() != n || data.treatment.size() != n ||
      data.covariates.rows != n) {
    out.issues.push_back({Errc::kLengthMismatch, std::nullopt,
                          "column lengths disagree"});
    return out;
  }
  std::size_t n_f = 0, n_r1 = 0;
  RuleDecisions decisions = apply_rule(data.covariates, rule);
  for (std::size_t i = 0; i < n; ++i) {
    if (data.itr_arm[i]) {
      ++n_f;
      if (data.treatment[i] != decisions.assign[i])
        out.issues.push_back({Errc::kDomain, i,
                              "ITR-arm unit " + std::to_string(i) +
                                  " treatment differs from the rule decision"});
    } else if (data.treatment[i]) {
      ++n_r1;
    }
    if (!std::isfinite(data.outcome[i]))
      out.issues.push_back({Errc::kNonfiniteOutcome, i,
                            "outcome at row " + std::to_string(i) +
                                " is not finite"});
  }
  std::size_t n_r = n - n_f;
  if (data.design.n != n || data.design.n_f != n_f || data.design.n_r != n_r ||
      data.design.n_r1 != n_r1 || data.design.n_r0 != n_r - n_r1)
    out.issues.push_back({Errc::kBadCounts, std::nullopt,
                          "recorded design counts disagree with the data"});
  if (n_r > 0 &&
      std::abs(decisions.p_hat - static_cast<double>(n_r1) /
                                     static_cast<double>(n_r)) > 1e-9)
    out.warnings.push_back(warn::kMisaligned);
  return out;
}

Estimate estimate_pape_ex_ante(const ExAnteDataset& data,
                               const RuleDecisions& decisions) {
  std::size_t n = data.n();
  if (decisions.assign.size() != n)
    throw Error(Errc::kLengthMismatch, "rule decisions length != dataset size");
  const ExAnteDesign& d = data.design;
  double p_hat = decisions.p_hat;
  // An empty random-arm group is fatal only when it carries weight; an
  // aligned degenerate rule pins one group empty with weight exactly zero.
  if (d.n_f < 1 || (d.n_r1 < 1 && p_hat != 0.0) ||
      (d.n_r0 < 1 && p_hat != 1.0))
    throw Error(Errc::kArmTooSmall,
                "estimation needs n_f, n_r1, n_r0 all >= 1 (got " +
                    std::to_string(d.n_f) + ", " + std::to_string(d.n_r1) +
                    ", " + std::to_string(d.n_r0) + ")");
  std::vector<double> itr_arm_y, rand_treated_y, rand_control_y;
  itr_arm_y.reserve(d.n_f);
  rand_treated_y.reserve(d.n_r1);
  rand_control_y.reserve(d.n_r0);
  for (std::size_t i = 0; i < n; ++i) {
    if (data.itr_arm[i])
      itr_arm_y.push_back(data.outcome[i]);
    else if (data.treatment[i])
      rand_treated_y.push_back(data.outcome[i]);
    else
      rand_control_y.push_back(data.outcome[i]);
  }

  double dn = static_cast<double>(n);
  double scale = dn / (dn - 1.0);
  Estimate est;
  est.estimand = Estimand::kPapeExAnte;
  est.n = n;
  est.n1 = d.n_r1;  // treated/control counts refer to the random arm
  est.n0 = d.n_r0;
  est.treated_proportion = p_hat;
  double treated_term = d.n_r1 ? p_hat * mean_of(rand_treated_y) : 0.0;
  double control_term = d.n_r0 ? (1.0 - p_hat) * mean_of(rand_control_y) : 0.0;
  est.value = scale * (mean_of(itr_arm_y) - treated_term - control_term);

  double aligned_p = static_cast<double>(d.n_r1) / static_cast<double>(d.n_r);
  if (std::abs(p_hat - aligned_p) > 1e-9)
    est.warnings.push_back(warn::kMisaligned);
  if (decisions.degenerate()) est.warnings.push_back(warn::kDegenerateRule);

  if (d.n_f < 2 || d.n_r1 < 2 || d.n_r0 < 2) {
    est.warnings.push_back(warn::kArmTooSmall);
    return est;
  }

  double s_f = sample_variance(itr_arm_y);
  double s_1 = sample_variance(rand_treated_y);
  double s_0 = sample_variance(rand_control_y);
  double tau_hat = mean_of(rand_treated_y) - mean_of(rand_control_y);
  double tau_f = est.value;
  // Same finite-sample bracket as the ex-post gain estimator, with the
  // overall effect estimated from the random arm alone.
  double bracket = tau_f * tau_f - dn * p_hat * (1.0 - p_hat) * tau_hat * tau_hat +
                   2.0 * (dn - 1.0) * (2.0 * p_hat - 1.0) * tau_f * tau_hat;
  double correction = bracket / (dn * dn);
  double total = scale * scale *
                 (s_f / static_cast<double>(d.n_f) +
                  p_hat * p_hat * s_1 / static_cast<double>(d.n_r1) +
                  (1.0 - p_hat) * (1.0 - p_hat) * s_0 / static_cast<double>(d.n_r0) +
                  correction);
  est.variance_components = {{"s_f_sq", s_f},      {"s1_sq", s_1},
                             {"s0_sq", s_0},       {"correction", correction},
                             {"total", total},     {"clipped", 0.0}};
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

Estimate estimate_pape_ex_ante(const ExAnteDataset& data,
                               const TreatmentRule& rule) {
  return estimate_pape_ex_ante(data, apply_rule(data.covariates, rule));
}

double intermediate_value_ex_ante(const ExAnteDataset& data) {
  std::vector<double> itr_arm_y, random_arm_y;
  for (std::size_t i = 0; i < data.n(); ++i)
    (data.itr_arm[i] ? itr_arm_y : random_arm_y).push_back(data.outcome[i]);
  if (itr_arm_y.empty() || random_arm_y.empty())
    throw Error(Errc::kEmptyArm, "both design arms must be non-empty");
  return mean_of(itr_arm_y) - mean_of(random_arm_y);
}

RuleCellMeans rule_cell_means(const PotentialOutcomeTable& table,
                              const RuleDecisions& decisions) {
  if (decisions.assign.size() != table.size())
    throw Error(Errc::kLengthMismatch, "rule decisions length != table size");
  double s11 = 0, s01 = 0, s00 = 0, s10 = 0;
  std::size_t c1 = 0, c0 = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (decisions.assign[i]) {
      s11 += table.y1[i];
      s01 += table.y0[i];
      ++c1;
    } else {
      s00 += table.y0[i];
      s10 += table.y1[i];
      ++c0;
    }
  }
  if (c1 == 0 || c0 == 0)
    throw Error(Errc::kEmptyCell,
                "rule-conditional means need both decision cells non-empty");
  RuleCellMeans m;
  m.m11 = s11 / static_cast<double>(c1);
  m.m01 = s01 / static_cast<double>(c1);
  m.m00 = s00 / static_cast<double>(c0);
  m.m10 = s10 / static_cast<double>(c0);
  return m;
}

double variance_difference_ex_ante_vs_ex_post(const PotentialOutcomeTable& table,
                                              const RuleDecisions& decisions,
                                              std::size_t n) {
  if (n < 4 || n % 4 != 0)
    throw Error(Errc::kBadCounts,
                "balanced comparison needs n divisible by 4, got " +
                    std::to_string(n));
  RuleCellMeans m = rule_cell_means(table, decisions);
  double p = decisions.p_hat;

  // Population moments as table averages (divisor = table size).
  double v1 = population_variance(table.y1);
  double v0 = population_variance(table.y0);
  double mean_y1 = mean_of(table.y1);
  double mean_y0 = mean_of(table.y0);
  double s1_sq_f1 = 0.0, s0_sq_f0 = 0.0;  // E(Y(t)^2 | f = t)
  std::size_t c1 = 0, c0 = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (decisions.assign[i]) {
      s1_sq_f1 += table.y1[i] * table.y1[i];
      ++c1;
    } else {
      s0_sq_f0 += table.y0[i] * table.y0[i];
      ++c0;
    }
  }
  s1_sq_f1 /= static_cast<double>(c1);
  s0_sq_f0 /= static_cast<double>(c0);

  double dn = static_cast<double>(n);
  double factor = 2.0 * dn / ((dn - 1.0) * (dn - 1.0));
  double inner = p * p * v1 + (1.0 - p) * (1.0 - p) * v0 -
                 2.0 * p * (1.0 - p) * m.m00 * m.m11 +
                 2.0 * p * p * (s1_sq_f1 - mean_y1 * m.m11) +
                 2.0 * (1.0 - p) * (1.0 - p) * (s0_sq_f0 - mean_y0 * m.m00);
  return factor * inner;
}

double variance_difference_ex_ante_vs_ex_post(const PotentialOutcomeTable& table,
                                              const TreatmentRule& rule,
                                              std::size_t n) {
  return variance_difference_ex_ante_vs_ex_post(
      table, apply_rule(table.covariates, rule), n);
}

}  // namespace itreval
