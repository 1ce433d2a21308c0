#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "itreval/error.hpp"
#include "itreval/rng.hpp"

namespace itreval {

// Dense row-major matrix of covariates.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  static Matrix zeros(std::size_t r, std::size_t c) {
    Matrix m;
    m.rows = r;
    m.cols = c;
    m.values.assign(r * c, 0.0);
    return m;
  }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

// A realized randomized experiment: covariates, binary treatment, observed
// outcome. Column names are optional (CSV ingestion fills them).
struct ExperimentDataset {
  Matrix covariates;
  std::vector<std::uint8_t> treatment;
  std::vector<double> outcome;
  std::vector<std::string> covariate_names;

  std::size_t n() const { return outcome.size(); }
  std::size_t n_treated() const;
  std::size_t n_control() const { return n() - n_treated(); }
};

// Potential outcomes for every unit; the evaluation oracle's ground truth.
struct PotentialOutcomeTable {
  Matrix covariates;
  std::vector<double> y1;
  std::vector<double> y0;

  std::size_t size() const { return y1.size(); }
  double ite(std::size_t i) const { return y1[i] - y0[i]; }
  // Average treatment effect of this table viewed as a population.
  double tau() const;
};

// Deterministic individualized treatment rule: covariates -> {0, 1}.
struct TreatmentRule {
  std::string label;
  std::function<int(std::span<const double>)> assign;
};

TreatmentRule constant_rule(int value);
// 1{intercept + <weights, x> > 0}; weight vector may be shorter than a row.
TreatmentRule linear_threshold_rule(std::vector<double> weights,
                                    double intercept,
                                    std::string label = "linear_threshold");
// Reads one covariate column as a precomputed 0/1 decision.
TreatmentRule column_rule(std::size_t column, std::string label);

// Result of evaluating a rule on a covariate matrix.
struct RuleDecisions {
  std::vector<std::uint8_t> assign;
  double p_hat = 0.0;  // fraction of units the rule treats

  bool degenerate() const { return p_hat == 0.0 || p_hat == 1.0; }
};

RuleDecisions apply_rule(const Matrix& covariates, const TreatmentRule& rule);

// What an estimator measured.
enum class Estimand {
  kAte,
  kPav,
  kPape,
  kPavDifference,
  kPapeExAnte,
  kPavCrossFit,
  kPapeCrossFit,
};

const char* estimand_name(Estimand e);

// Point estimate with plug-in uncertainty and provenance of its variance.
struct Estimate {
  Estimand estimand;
  double value = 0.0;
  std::optional<double> std_error;
  std::map<std::string, double> variance_components;
  std::vector<std::string> warnings;
  std::size_t n = 0;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  // Fraction treated by the rule under evaluation (n1/n for the ATE).
  double treated_proportion = 0.0;

  bool has_warning(const char* w) const;
};

// Complete randomization: exactly n1 of n units treated, uniform over
// all C(n, n1) assignments.
struct RandomizationPlan {
  std::size_t n = 0;
  std::size_t n1 = 0;
  std::uint64_t seed = 0;
};

std::vector<std::uint8_t> draw_complete_randomization(std::size_t n,
                                                      std::size_t n1, Rng& rng);
std::vector<std::uint8_t> draw_complete_randomization(
    const RandomizationPlan& plan);

// Observed dataset obtained by revealing Y(T) for one assignment vector.
ExperimentDataset realize(const PotentialOutcomeTable& table,
                          std::span<const std::uint8_t> treatment);

// Collects every violated requirement; empty result means valid.
std::vector<ValidationIssue> check_dataset(const ExperimentDataset& data);
// Throws ValidationError listing all issues if check_dataset is non-empty.
void validate_dataset(const ExperimentDataset& data);

// Outcome translation Y -> Y + delta, used by the shift diagnostics.
ExperimentDataset shifted(const ExperimentDataset& data, double delta);
PotentialOutcomeTable shifted(const PotentialOutcomeTable& table, double delta);

// Mean and sample variance (divisor count-1) in one pass of Neumaier sums.
double mean_of(std::span<const double> values);
double sample_variance(std::span<const double> values);
// Population variance (divisor count).
double population_variance(std::span<const double> values);
double sample_covariance(std::span<const double> a, std::span<const double> b);

// Compensated (Neumaier) summation; deterministic given element order.
double neumaier_sum(std::span<const double> values);

}  // namespace itreval
