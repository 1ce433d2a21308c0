#include "itreval/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace itreval {

std::size_t ExperimentDataset::n_treated() const {
  std::size_t k = 0;
  for (std::uint8_t t : treatment) k += t;
  return k;
}

double PotentialOutcomeTable::tau() const {
  double acc = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    double term = y1[i] - y0[i];
    double t = acc + term;
    comp += (std::abs(acc) >= std::abs(term)) ? (acc - t) + term : (term - t) + acc;
    acc = t;
  }
  return size() ? (acc + comp) / static_cast<double>(size()) : 0.0;
}

TreatmentRule constant_rule(int value) {
  return {value ? "const_1" : "const_0",
          [value](std::span<const double>) { return value ? 1 : 0; }};
}

TreatmentRule linear_threshold_rule(std::vector<double> weights,
                                    double intercept, std::string label) {
  return {std::move(label),
          [w = std::move(weights), intercept](std::span<const double> x) {
            double score = intercept;
            std::size_t d = std::min(w.size(), x.size());
            for (std::size_t j = 0; j < d; ++j) score += w[j] * x[j];
            return score > 0.0 ? 1 : 0;
          }};
}

TreatmentRule column_rule(std::size_t column, std::string label) {
  return {std::move(label), [column](std::span<const double> x) {
            if (column >= x.size())
              throw Error(Errc::kMissingCovariate,
                          "rule column " + std::to_string(column) +
                              " out of range (row has " +
                              std::to_string(x.size()) + " covariates)");
            return x[column] > 0.5 ? 1 : 0;
          }};
}

RuleDecisions apply_rule(const Matrix& covariates, const TreatmentRule& rule) {
  RuleDecisions out;
  out.assign.resize(covariates.rows);
  std::size_t treated = 0;
  for (std::size_t i = 0; i < covariates.rows; ++i) {
    int d = rule.assign(covariates.row(i));
    if (d != 0 && d != 1)
      throw Error(Errc::kDomain, "rule '" + rule.label +
                                     "' returned non-binary decision " +
                                     std::to_string(d));
    out.assign[i] = static_cast<std::uint8_t>(d);
    treated += static_cast<std::size_t>(d);
  }
  out.p_hat = covariates.rows
                  ? static_cast<double>(treated) / static_cast<double>(covariates.rows)
                  : 0.0;
  return out;
}

const char* estimand_name(Estimand e) {
  switch (e) {
    case Estimand::kAte: return "ate";
    case Estimand::kPav: return "pav";
    case Estimand::kPape: return "pape";
    case Estimand::kPavDifference: return "pav_difference";
    case Estimand::kPapeExAnte: return "pape_ex_ante";
    case Estimand::kPavCrossFit: return "pav_crossfit";
    case Estimand::kPapeCrossFit: return "pape_crossfit";
  }
  return "unknown";
}

bool Estimate::has_warning(const char* w) const {
  return std::find(warnings.begin(), warnings.end(), std::string(w)) !=
         warnings.end();
}

std::vector<std::uint8_t> draw_complete_randomization(std::size_t n,
                                                      std::size_t n1,
                                                      Rng& rng) {
  if (n1 < 1 || n1 >= n)
    throw Error(Errc::kBadCounts,
                "complete randomization needs 1 <= n1 < n, got n1 = " +
                    std::to_string(n1) + ", n = " + std::to_string(n));
  std::vector<std::uint8_t> t(n, 0);
  std::fill(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(n1), 1);
  rng.shuffle(std::span<std::uint8_t>(t));
  return t;
}

std::vector<std::uint8_t> draw_complete_randomization(
    const RandomizationPlan& plan) {
  Rng rng(plan.seed);
  return draw_complete_randomization(plan.n, plan.n1, rng);
}

ExperimentDataset realize(const PotentialOutcomeTable& table,
                          std::span<const std::uint8_t> treatment) {
  if (treatment.size() != table.size())
    throw Error(Errc::kLengthMismatch,
                "assignment length " + std::to_string(treatment.size()) +
                    " != table size " + std::to_string(table.size()));
  ExperimentDataset data;
  data.covariates = table.covariates;
  data.treatment.assign(treatment.begin(), treatment.end());
  data.outcome.resize(table.size());
  for (std::size_t i = 0; i < table.size(); ++i)
    data.outcome[i] = treatment[i] ? table.y1[i] : table.y0[i];
  return data;
}

std::vector<ValidationIssue> check_dataset(const ExperimentDataset& data) {
  std::vector<ValidationIssue> issues;
  std::size_t n = data.outcome.size();
  if (data.treatment.size() != n)
    issues.push_back({Errc::kLengthMismatch, std::nullopt,
                      "treatment length " + std::to_string(data.treatment.size()) +
                          " != outcome length " + std::to_string(n)});
  if (data.covariates.rows != n)
    issues.push_back({Errc::kLengthMismatch, std::nullopt,
                      "covariate rows " + std::to_string(data.covariates.rows) +
                          " != outcome length " + std::to_string(n)});
  if (data.covariates.values.size() != data.covariates.rows * data.covariates.cols)
    issues.push_back({Errc::kRaggedCovariates, std::nullopt,
                      "covariate storage is not rows x cols"});
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(data.outcome[i]))
      issues.push_back({Errc::kNonfiniteOutcome, i,
                        "outcome at row " + std::to_string(i) + " is not finite"});
  }
  if (data.covariates.rows == n) {
    for (std::size_t i = 0; i < n; ++i) {
      for (double v : data.covariates.row(i)) {
        if (!std::isfinite(v)) {
          issues.push_back({Errc::kDomain, i,
                            "covariate at row " + std::to_string(i) +
                                " is not finite"});
          break;
        }
      }
    }
  }
  if (data.treatment.size() == n && n > 0) {
    bool bad_code = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (data.treatment[i] > 1) {
        issues.push_back({Errc::kDomain, i,
                          "treatment at row " + std::to_string(i) +
                              " is not 0/1"});
        bad_code = true;
        break;
      }
    }
    if (!bad_code) {
      std::size_t n1 = data.n_treated();
      if (n1 == 0)
        issues.push_back({Errc::kEmptyArm, std::nullopt, "no treated units"});
      if (n1 == n)
        issues.push_back({Errc::kEmptyArm, std::nullopt, "no control units"});
    }
  }
  if (n == 0)
    issues.push_back({Errc::kEmptyArm, std::nullopt, "dataset is empty"});
  return issues;
}

void validate_dataset(const ExperimentDataset& data) {
  auto issues = check_dataset(data);
  if (issues.empty()) return;
  std::string summary = "dataset failed validation (" +
                        std::to_string(issues.size()) + " issue(s)): " +
                        issues.front().message;
  throw ValidationError(std::move(issues), std::move(summary));
}

ExperimentDataset shifted(const ExperimentDataset& data, double delta) {
  ExperimentDataset out = data;
  for (double& y : out.outcome) y += delta;
  return out;
}

PotentialOutcomeTable shifted(const PotentialOutcomeTable& table, double delta) {
  PotentialOutcomeTable out = table;
  for (double& y : out.y1) y += delta;
  for (double& y : out.y0) y += delta;
  return out;
}

double neumaier_sum(std::span<const double> values) {
  double acc = 0.0, comp = 0.0;
  for (double v : values) {
    double t = acc + v;
    comp += (std::abs(acc) >= std::abs(v)) ? (acc - t) + v : (v - t) + acc;
    acc = t;
  }
  return acc + comp;
}

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return neumaier_sum(values) / static_cast<double>(values.size());
}

namespace {
double centered_square_sum(std::span<const double> values, double center) {
  double acc = 0.0, comp = 0.0;
  for (double v : values) {
    double d = v - center;
    double term = d * d;
    double t = acc + term;
    comp += (std::abs(acc) >= std::abs(term)) ? (acc - t) + term : (term - t) + acc;
    acc = t;
  }
  return acc + comp;
}
}  // namespace

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  return centered_square_sum(values, mean_of(values)) /
         static_cast<double>(values.size() - 1);
}

double population_variance(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return centered_square_sum(values, mean_of(values)) /
         static_cast<double>(values.size());
}

double sample_covariance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(Errc::kLengthMismatch, "covariance inputs differ in length");
  if (a.size() < 2) return 0.0;
  double ma = mean_of(a), mb = mean_of(b);
  double acc = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double term = (a[i] - ma) * (b[i] - mb);
    double t = acc + term;
    comp += (std::abs(acc) >= std::abs(term)) ? (acc - t) + term : (term - t) + acc;
    acc = t;
  }
  return (acc + comp) / static_cast<double>(a.size() - 1);
}

}  // namespace itreval
