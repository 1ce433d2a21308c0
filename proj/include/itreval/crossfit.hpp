#pragma once

#include "itreval/data.hpp"
#include "itreval/estimators.hpp"

namespace itreval {

// Real-valued score over covariates; the induced rule treats on score > 0.
using ScoringRule = std::function<double(std::span<const double>)>;

// Deterministic learner: training data + seed -> scoring rule.
struct ScoringAlgorithm {
  std::string label;
  bool parallel_safe = true;
  std::function<ScoringRule(const ExperimentDataset&, std::uint64_t)> train;
};

TreatmentRule rule_from_score(const ScoringRule& score, std::string label);

// Stratified K-way partition: every fold holds exactly m = n/K units with
// m1 = n1/K treated and m0 controls.
struct FoldPlan {
  std::size_t K = 0;
  std::size_t m = 0;
  std::size_t m1 = 0;
  std::size_t m0 = 0;
  std::vector<std::uint32_t> assignment;  // fold index per unit
  std::uint64_t seed = 0;
};

FoldPlan make_folds(const ExperimentDataset& data, std::size_t K,
                    std::uint64_t seed);

struct FoldEstimate {
  std::size_t fold = 0;
  std::string rule_label;
  double value = 0.0;
  double p_hat = 0.0;
  // Plug-in variance of this fold's estimate; absent when the fold is too
  // small to form within-arm sample variances.
  std::optional<double> variance_plugin;
  std::vector<std::string> warnings;
};

// Pooled-variance decomposition for K exchangeable, positively correlated
// fold estimates: V(pooled) = V(single fold) - (K-1)/K * E(S_F^2).
struct NadeauBengio {
  double v_single = 0.0;  // mean of within-fold variance plug-ins
  double s_f_sq = 0.0;    // sample variance of the K fold estimates
  double v_pooled = 0.0;  // v_single - (K-1)/K * s_f_sq, before clipping
};

NadeauBengio nadeau_bengio_decomposition(std::span<const double> fold_estimates,
                                         std::span<const double> plugins);

struct CrossFitResult {
  std::vector<FoldEstimate> per_fold;
  Estimate pooled;
  NadeauBengio decomposition;
};

// For each fold k: train on the other K-1 folds, evaluate the fold with the
// trained rule; pooled value is the fold mean.
CrossFitResult cross_fit_pav(const ExperimentDataset& data,
                             const ScoringAlgorithm& algo, const FoldPlan& plan);
// Same aggregation applied to the per-fold gain estimates; the pooled
// standard error is flagged HEURISTIC.
CrossFitResult cross_fit_pape(const ExperimentDataset& data,
                              const ScoringAlgorithm& algo,
                              const FoldPlan& plan);

// Bundled reference learners.
// Difference-in-means effect estimate within quantile strata of one column.
ScoringAlgorithm stratum_cate_algorithm(std::size_t column, std::size_t bins);
// Control-arm mean outcome within strata, scored against a fixed threshold
// (treat where estimated baseline risk exceeds it).
ScoringAlgorithm baseline_risk_algorithm(std::size_t column, std::size_t bins,
                                         double threshold);
ScoringAlgorithm constant_algorithm(int value);
ScoringAlgorithm fixed_rule_algorithm(TreatmentRule rule);

}  // namespace itreval
