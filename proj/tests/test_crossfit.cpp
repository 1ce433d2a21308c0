#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "itreval/crossfit.hpp"

using namespace itreval;

namespace {

bool close(double a, double b, double tol) {
  double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) <= tol * scale;
}

template <typename Fn>
std::optional<Errc> thrown_code(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

ExperimentDataset eight_units() {
  ExperimentDataset d;
  d.covariates = Matrix::zeros(8, 1);
  for (std::size_t i = 0; i < 8; ++i) d.covariates.at(i, 0) = 1.0 + i;
  d.treatment = {1, 0, 1, 0, 1, 0, 1, 0};
  d.outcome = {3, 1, 5, 1, 4, 2, 9, 3};
  return d;
}

}  // namespace

TEST_CASE("fold plans split both arms evenly") {
  ExperimentDataset d = eight_units();
  FoldPlan plan = make_folds(d, 2, 11);
  CHECK(plan.K == 2);
  CHECK(plan.m == 4);
  CHECK(plan.m1 == 2);
  CHECK(plan.m0 == 2);
  REQUIRE(plan.assignment.size() == 8);
  for (std::size_t k = 0; k < 2; ++k) {
    std::size_t units = 0, treated = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      if (plan.assignment[i] != k) continue;
      ++units;
      treated += d.treatment[i];
    }
    CHECK(units == 4);
    CHECK(treated == 2);
  }

  FoldPlan again = make_folds(d, 2, 11);
  CHECK(again.assignment == plan.assignment);

  ExperimentDataset nine = d;
  nine.covariates = Matrix::zeros(9, 1);
  nine.treatment.push_back(0);
  nine.outcome.push_back(1.0);
  CHECK(thrown_code([&] { make_folds(nine, 2, 1); }) == Errc::kIndivisible);

  ExperimentDataset odd_arm = d;
  odd_arm.treatment = {1, 1, 1, 0, 0, 0, 0, 0};  // n1 = 3 not divisible by 2
  CHECK(thrown_code([&] { make_folds(odd_arm, 2, 1); }) == Errc::kIndivisible);
  CHECK(thrown_code([&] { make_folds(d, 1, 1); }) == Errc::kBadCounts);
}

TEST_CASE("each treated unit lands in every fold equally often") {
  ExperimentDataset d = eight_units();
  std::size_t in_fold1 = 0;
  const std::size_t reps = 100000;
  for (std::size_t seed = 0; seed < reps; ++seed)
    in_fold1 += make_folds(d, 2, seed).assignment[0] == 1;
  double rate = static_cast<double>(in_fold1) / static_cast<double>(reps);
  CHECK(std::abs(rate - 0.5) < 0.01);
}

TEST_CASE("constant learners reduce pooled values to arm means") {
  ExperimentDataset d = eight_units();
  FoldPlan plan = make_folds(d, 2, 7);

  CrossFitResult pav1 = cross_fit_pav(d, constant_algorithm(1), plan);
  CHECK(pav1.pooled.estimand == Estimand::kPavCrossFit);
  CHECK(close(pav1.pooled.value, (3.0 + 5 + 4 + 9) / 4.0, 1e-12));
  CHECK(pav1.pooled.treated_proportion == 1.0);
  CHECK(pav1.per_fold.size() == 2);
  CHECK(pav1.per_fold[0].rule_label == "const_1#0");

  CrossFitResult pav0 = cross_fit_pav(d, constant_algorithm(0), plan);
  CHECK(close(pav0.pooled.value, (1.0 + 1 + 2 + 3) / 4.0, 1e-12));
  CHECK(pav0.pooled.treated_proportion == 0.0);
}

TEST_CASE("fold estimates recompute from the plan") {
  ExperimentDataset d = eight_units();
  FoldPlan plan = make_folds(d, 2, 19);
  ScoringAlgorithm algo = stratum_cate_algorithm(0, 2);
  CrossFitResult res = cross_fit_pav(d, algo, plan);

  for (std::size_t k = 0; k < 2; ++k) {
    ExperimentDataset training, eval;
    training.covariates.cols = eval.covariates.cols = 1;
    for (std::size_t i = 0; i < 8; ++i) {
      ExperimentDataset& dst = plan.assignment[i] == k ? eval : training;
      dst.covariates.values.push_back(d.covariates.at(i, 0));
      ++dst.covariates.rows;
      dst.treatment.push_back(d.treatment[i]);
      dst.outcome.push_back(d.outcome[i]);
    }
    // The stratum learner is deterministic in the data, so any seed works.
    ScoringRule score = algo.train(training, 0);
    RuleDecisions dec =
        apply_rule(eval.covariates, rule_from_score(score, "recheck"));
    Estimate est = estimate_pav(eval, dec);
    CHECK(res.per_fold[k].value == est.value);
    CHECK(res.per_fold[k].p_hat == dec.p_hat);
  }
  CHECK(close(res.pooled.value,
              (res.per_fold[0].value + res.per_fold[1].value) / 2.0, 1e-14));
}

TEST_CASE("degenerate gain folds pool to exact zero") {
  ExperimentDataset d = eight_units();
  FoldPlan plan = make_folds(d, 2, 3);
  CrossFitResult res = cross_fit_pape(d, constant_algorithm(0), plan);
  for (const FoldEstimate& fe : res.per_fold) {
    CHECK(fe.value == 0.0);
    REQUIRE(fe.variance_plugin.has_value());
    CHECK(*fe.variance_plugin == 0.0);
  }
  CHECK(res.pooled.value == 0.0);
  CHECK(res.decomposition.s_f_sq == 0.0);
  CHECK(res.decomposition.v_pooled == 0.0);
  CHECK(res.pooled.std_error == 0.0);
  CHECK(res.pooled.has_warning(warn::kHeuristic));
  CHECK(res.pooled.has_warning(warn::kDegenerateRule));
}

TEST_CASE("pooled variance decomposition") {
  std::vector<double> estimates = {0.0, 2.0};
  std::vector<double> plugins = {1.0, 1.0};
  NadeauBengio nb = nadeau_bengio_decomposition(estimates, plugins);
  CHECK(nb.v_single == 1.0);
  CHECK(nb.s_f_sq == 2.0);
  CHECK(nb.v_pooled == 0.0);

  std::vector<double> equal = {1.5, 1.5};
  std::vector<double> plug2 = {2.0, 3.0};
  NadeauBengio flat = nadeau_bengio_decomposition(equal, plug2);
  CHECK(flat.s_f_sq == 0.0);
  CHECK(flat.v_pooled == flat.v_single);
  CHECK(flat.v_single == 2.5);

  std::vector<double> one = {1.0};
  CHECK(thrown_code([&] { nadeau_bengio_decomposition(one, one); }) ==
        Errc::kDomain);
  std::vector<double> three = {1.0, 2.0, 3.0};
  CHECK(thrown_code([&] { nadeau_bengio_decomposition(estimates, three); }) ==
        Errc::kDomain);
}

TEST_CASE("stratum effect learner scores per-stratum differences") {
  ExperimentDataset d = eight_units();
  ScoringAlgorithm algo = stratum_cate_algorithm(0, 2);
  ScoringRule score = algo.train(d, 99);

  // Quantile edge sits at the 5th sorted value (5.0): units with x <= 5 form
  // the lower stratum {3,1,5,1,4 outcomes}, the rest the upper one.
  std::vector<double> low = {2.0};
  std::vector<double> high = {7.0};
  CHECK(close(score(low), (3.0 + 5 + 4) / 3.0 - (1.0 + 1) / 2.0, 1e-14));
  CHECK(close(score(high), 9.0 - (2.0 + 3) / 2.0, 1e-14));

  // Upper stratum loses its control arm: its score collapses to zero.
  ExperimentDataset allt = d;
  allt.treatment = {1, 0, 1, 0, 1, 1, 1, 1};
  ScoringRule score2 = algo.train(allt, 99);
  CHECK(score2(high) == 0.0);
  CHECK(close(score2(low), (3.0 + 5 + 4) / 3.0 - (1.0 + 1) / 2.0, 1e-14));

  TreatmentRule rule = rule_from_score(score, "stratum");
  CHECK(rule.assign(low) == 1);
  std::vector<double> none = {0.0};
  ScoringRule minus = [](std::span<const double>) { return -0.5; };
  CHECK(rule_from_score(minus, "m").assign(none) == 0);
  ScoringRule zero = [](std::span<const double>) { return 0.0; };
  CHECK(rule_from_score(zero, "z").assign(none) == 0);

  CHECK(algo.label == "stratum_cate_x0_b2");
  CHECK(stratum_cate_algorithm(53, 2).label == "stratum_cate_x53_b2");
  CHECK(constant_algorithm(1).label == "const_1");
  CHECK(fixed_rule_algorithm(constant_rule(0)).label == "fixed_const_0");

  CHECK(thrown_code([&] { stratum_cate_algorithm(4, 2).train(d, 0); }) ==
        Errc::kMissingCovariate);
  FoldPlan plan = make_folds(d, 2, 2);
  CHECK(thrown_code([&] {
          cross_fit_pav(d, stratum_cate_algorithm(4, 2), plan);
        }) == Errc::kTrainFailure);
}

TEST_CASE("baseline risk learner thresholds control-arm means") {
  ExperimentDataset d = eight_units();
  ScoringAlgorithm algo = baseline_risk_algorithm(0, 2, 2.0);
  ScoringRule score = algo.train(d, 0);
  // Lower stratum controls: outcomes {1, 1} -> mean 1; upper: {2, 3} -> 2.5.
  std::vector<double> low = {2.0};
  std::vector<double> high = {7.0};
  CHECK(close(score(low), 1.0 - 2.0, 1e-14));
  CHECK(close(score(high), 2.5 - 2.0, 1e-14));

  ExperimentDataset treated_only = d;
  treated_only.treatment.assign(8, 1);
  CHECK(thrown_code([&] { algo.train(treated_only, 0); }) == Errc::kEmptyArm);
}
