#pragma once

#include <map>
#include <optional>
#include <string>

#include "itreval/crossfit.hpp"
#include "itreval/data.hpp"
#include "itreval/ex_ante.hpp"

namespace itreval {

struct AssignmentMoments {
  double mean = 0.0;
  double variance = 0.0;
};

// Exact first two moments of sum_i [T_i a_i + (1 - T_i) b_i] when exactly n1
// of the a.size() units are treated, uniformly over all assignments.
AssignmentMoments linear_assignment_moments(std::span<const double> a,
                                            std::span<const double> b,
                                            std::size_t n1);

enum class EstimatorTag {
  kAte,
  kPav,
  kPape,
  kPavDifference,
  kPapeExAnte,
  kIntermediateExAnte,
};

const char* estimator_tag_name(EstimatorTag tag);

// Exact randomization-only moments of an estimator on a fixed table: the
// table's units are the experiment, n1 of them treated. The two-stage tags
// are handled by conditional_moments_ex_ante.
AssignmentMoments conditional_moments(const PotentialOutcomeTable& table,
                                      EstimatorTag tag, const RuleDecisions& f,
                                      const RuleDecisions* g, std::size_t n1);
AssignmentMoments conditional_moments_ex_ante(const PotentialOutcomeTable& table,
                                              EstimatorTag tag,
                                              const RuleDecisions& f,
                                              const ExAnteDesign& design);

// Sampling + randomization variances of each estimator when n units are drawn
// i.i.d. from the table viewed as the population. The expectations of the
// random sample-variance statistics are evaluated in closed form.
double sampling_variance_pav(const PotentialOutcomeTable& table,
                             const RuleDecisions& f, std::size_t n1,
                             std::size_t n0);
double sampling_variance_pape(const PotentialOutcomeTable& table,
                              const RuleDecisions& f, std::size_t n1,
                              std::size_t n0);
double sampling_variance_pape_ex_ante(const PotentialOutcomeTable& table,
                                      const RuleDecisions& f,
                                      const ExAnteDesign& design);
double sampling_variance_intermediate(const PotentialOutcomeTable& table,
                                      const RuleDecisions& f,
                                      const ExAnteDesign& design);

// Everything the simulation harness treats as ground truth for one table and
// one rule, under a stated experiment size.
struct OracleTruth {
  std::size_t table_n = 0;
  std::size_t design_n1 = 0;
  std::size_t design_n0 = 0;

  double p_f = 0.0;
  double lambda_f = 0.0;
  double tau_f = 0.0;  // equals Cov(f(X), ITE) over the table
  double tau = 0.0;
  double mu1 = 0.0;
  double mu0 = 0.0;
  double sigma1_sq = 0.0;
  double sigma0_sq = 0.0;
  double ite_variance = 0.0;
  double normalized_pape = 0.0;  // Corr(f, ITE); 0 when either factor is 0
  double pape_bound = 0.0;
  std::optional<RuleCellMeans> cell_means;  // absent when the rule is one-sided

  double var_pav = 0.0;
  double var_pape = 0.0;
  std::optional<double> var_pape_ex_ante;
  std::optional<double> var_intermediate;

  // First-order standard errors of the first-moment fields when the table is
  // itself an i.i.d. draw from a wider generating process.
  std::map<std::string, double> mc_se;
};

OracleTruth oracle_truth(const PotentialOutcomeTable& table,
                         const RuleDecisions& decisions, std::size_t n1,
                         std::size_t n0,
                         const std::optional<ExAnteDesign>& ex_ante = {});
OracleTruth oracle_truth(const PotentialOutcomeTable& table,
                         const TreatmentRule& rule, std::size_t n1,
                         std::size_t n0,
                         const std::optional<ExAnteDesign>& ex_ante = {});

// Exhaustive enumeration of every admissible assignment on the table itself,
// applying the named estimator implementation to each realized dataset.
struct EnumerationResult {
  double mean = 0.0;
  double variance = 0.0;  // across equally likely draws
  std::size_t draws = 0;
};

EnumerationResult enumerate_randomizations(const PotentialOutcomeTable& table,
                                           EstimatorTag tag,
                                           const RuleDecisions& f,
                                           const RuleDecisions* g,
                                           std::size_t n1);
EnumerationResult enumerate_randomizations_ex_ante(
    const PotentialOutcomeTable& table, EstimatorTag tag,
    const RuleDecisions& f, const ExAnteDesign& design);

// Visits every k-subset of {0..n-1} in lexicographic order.
void for_each_combination(
    std::size_t n, std::size_t k,
    const std::function<void(const std::vector<std::size_t>&)>& visit);

// Number of admissible draws, or nullopt on overflow past the cap.
std::optional<std::size_t> combination_count(std::size_t n, std::size_t k,
                                             std::size_t cap);

// Learned-rule estimands: averages over repeated training draws from the
// table, each draw a fresh simulated experiment of training_n units.
struct CrossFitOracle {
  std::size_t training_n = 0;
  std::size_t training_n1 = 0;
  std::size_t replications = 0;

  double lambda_F = 0.0;  // mean value of the trained rule
  double p_F = 0.0;       // mean treated fraction of the trained rule
  double tau_F = 0.0;     // mean gain of the trained rule
  std::vector<double> f_bar;  // per-row average trained decision

  // Pieces of the single-fold evaluation variance at eval arm sizes m1, m0:
  // masked-outcome variances plus the training-induced covariance term.
  double e_masked1_var = 0.0;
  double e_masked0_var = 0.0;
  double covariance_term = 0.0;
  double v_single = 0.0;

  std::map<std::string, double> mc_se;
};

CrossFitOracle crossfit_estimand_oracle(const PotentialOutcomeTable& table,
                                        const ScoringAlgorithm& algo,
                                        std::size_t training_n,
                                        std::size_t training_n1,
                                        std::size_t eval_m1,
                                        std::size_t eval_m0,
                                        std::size_t replications,
                                        std::uint64_t seed);

}  // namespace itreval
