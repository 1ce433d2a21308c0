#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "itreval/crossfit.hpp"
#include "itreval/data.hpp"
#include "itreval/dgp.hpp"
#include "itreval/oracle.hpp"

namespace itreval {

// Moment summary of one statistic across replications. Spread errors use the
// fourth-moment (kurtosis-aware) formula, not the normal approximation.
struct McSummary {
  std::size_t replications = 0;
  double mean = 0.0;
  double se_mean = 0.0;
  double variance = 0.0;  // divisor R-1
  double se_variance = 0.0;
  double sd = 0.0;
  double se_sd = 0.0;
};

McSummary summarize_reps(std::span<const double> values);

// Runs body(rep, rng) for rep in [0, reps) across worker threads. Each
// replication owns a counter-based generator derived from (seed, rep), so
// results are identical for any thread count; workers must write only to
// their own replication's slots. The first thrown exception is rethrown
// after all workers finish.
void parallel_reps(std::size_t reps, std::size_t threads, std::uint64_t seed,
                   const std::function<void(std::size_t, Rng&)>& body);

// Outcome-shift scenario: sample experiments from a centered population and
// trace the estimator's spread across a shift grid.
struct ShiftCurveConfig {
  DgpSpec dgp;
  std::size_t population_size = 100000;
  std::size_t n = 100;
  std::size_t n1 = 50;
  std::vector<double> deltas;  // empty: 11 points spanning +/-3
  std::size_t replications = 10000;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::uint64_t seed = 1;
  TreatmentRule rule = cate_oracle_rule();
};

struct ShiftCurvePoint {
  double delta = 0.0;
  double se_pav = 0.0;
  double mc_err = 0.0;  // error of se_pav
  double variance = 0.0;
  double se_variance = 0.0;
  double penalty_empirical = 0.0;  // variance minus the variance at delta 0
  double penalty_formula = 0.0;
};

struct ShiftCurveResult {
  std::vector<ShiftCurvePoint> points;
  std::size_t replications = 0;
  double centering_shift = 0.0;  // applied to the population before sampling
  double kappa11 = 0.0;          // after centering
  double kappa00 = 0.0;
  double delta_star = 0.0;       // after centering; 0 up to rounding
  double p_f = 0.0;
  std::vector<std::vector<double>> rep_values;  // [delta index][replication]
};

ShiftCurveResult run_shift_curve(const ShiftCurveConfig& config);

// Two-stage versus single-stage design comparison across a size grid.
struct ExAnteScenarioConfig {
  DgpSpec dgp;
  std::size_t population_size = 100000;
  std::vector<std::size_t> n_grid = {100, 200, 300, 400, 500};
  std::size_t replications = 20000;
  std::size_t threads = 0;
  std::uint64_t seed = 1;
  TreatmentRule rule = cate_oracle_rule();
};

struct ExAntePoint {
  std::size_t n = 0;
  double se_ex_ante = 0.0;
  double mc_err_ex_ante = 0.0;
  double se_ex_post = 0.0;
  double mc_err_ex_post = 0.0;
  double var_ex_ante = 0.0;
  double var_ex_post = 0.0;
  double closed_form_var_diff = 0.0;
};

struct ExAnteScenarioResult {
  std::vector<ExAntePoint> points;
  std::size_t replications = 0;
  std::vector<std::vector<double>> rep_ex_ante;  // [n index][replication]
  std::vector<std::vector<double>> rep_ex_post;
};

ExAnteScenarioResult run_ex_ante_vs_ex_post(const ExAnteScenarioConfig& config);

// Randomization-only replication on one fixed table; empirical spread of each
// estimator against its exact conditional variance.
struct VarianceFidelityConfig {
  DgpSpec dgp;
  std::size_t n = 200;
  std::size_t n1 = 100;
  std::size_t n_f = 100;   // two-stage split on the same table
  std::size_t n_r1 = 50;
  std::size_t replications = 100000;
  std::size_t threads = 0;
  std::uint64_t seed = 1;
  TreatmentRule rule = cate_oracle_rule();
};

struct VarianceFidelityRow {
  std::string estimator;
  double empirical_mean = 0.0;
  double oracle_mean = 0.0;
  double empirical_variance = 0.0;
  double mc_err = 0.0;  // error of the empirical variance
  double oracle_variance = 0.0;
  double relative_error = 0.0;
};

struct VarianceFidelityResult {
  std::vector<VarianceFidelityRow> rows;
  std::size_t replications = 0;
  std::vector<std::vector<double>> rep_values;  // [row index][replication]
};

VarianceFidelityResult run_variance_fidelity(const VarianceFidelityConfig& config);

// Cross-fitting behavior on repeated fresh experiments: pooled-mean accuracy
// against the learned-rule estimand, and the fold variance/covariance
// decomposition.
struct CrossFitScenarioConfig {
  DgpSpec dgp;
  std::size_t population_size = 100000;
  std::size_t n = 80;
  std::size_t n1 = 40;
  std::size_t K = 4;
  ScoringAlgorithm learner = stratum_cate_algorithm(53, 2);
  std::size_t replications = 20000;
  std::size_t oracle_draws = 400;
  std::size_t threads = 0;
  std::uint64_t seed = 1;
};

struct CrossFitScenarioResult {
  std::size_t replications = 0;
  std::size_t K = 0;
  double mean_pooled = 0.0;
  double se_mean_pooled = 0.0;
  double var_single_fold = 0.0;    // across replications, averaged over folds
  double cov_between_folds = 0.0;  // averaged over fold pairs
  double e_s_f_sq = 0.0;           // mean across-fold sample variance
  double identity_gap = 0.0;  // cov - (var_single - e_s_f_sq); 0 in expectation
  double mean_plugin_single = 0.0;  // mean of the within-fold variance plug-ins
  double mean_plugin_pooled = 0.0;  // mean of the pooled variance estimates
  CrossFitOracle oracle;
  std::vector<double> rep_pooled;
  std::vector<double> rep_fold_estimates;  // row-major, replication by fold
  std::vector<double> rep_s_f_sq;
};

CrossFitScenarioResult run_crossfit_validation(const CrossFitScenarioConfig& config);

}  // namespace itreval
