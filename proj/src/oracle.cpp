#include "itreval/oracle.hpp"

#include <cmath>

#include "itreval/estimators.hpp"

namespace itreval {

namespace {

struct Kahan {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

double as_double(std::size_t v) { return static_cast<double>(v); }

}  // namespace

AssignmentMoments linear_assignment_moments(std::span<const double> a,
                                            std::span<const double> b,
                                            std::size_t n1) {
  std::size_t n = a.size();
  if (b.size() != n)
    throw Error(Errc::kLengthMismatch, "coefficient vectors differ in length");
  if (n == 0 || n1 > n)
    throw Error(Errc::kBadCounts, "need 0 <= n1 <= n with n >= 1");
  double dn = as_double(n);
  double w1 = as_double(n1) / dn;

  Kahan mean;
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) {
    mean.add(w1 * a[i] + (1.0 - w1) * b[i]);
    diff[i] = a[i] - b[i];
  }
  AssignmentMoments out;
  out.mean = mean.value();
  out.variance = n < 2 ? 0.0
                       : as_double(n1) * as_double(n - n1) / dn *
                             sample_variance(diff);
  return out;
}

const char* estimator_tag_name(EstimatorTag tag) {
  switch (tag) {
    case EstimatorTag::kAte: return "ate";
    case EstimatorTag::kPav: return "pav";
    case EstimatorTag::kPape: return "pape";
    case EstimatorTag::kPavDifference: return "pav_difference";
    case EstimatorTag::kPapeExAnte: return "pape_ex_ante";
    case EstimatorTag::kIntermediateExAnte: return "intermediate_ex_ante";
  }
  return "unknown";
}

namespace {

void require_table_rule(const PotentialOutcomeTable& table,
                        const RuleDecisions& f) {
  if (f.assign.size() != table.size())
    throw Error(Errc::kLengthMismatch, "rule decisions length != table size");
}

// Per-unit contributions a_i (if treated) and b_i (if control) of each
// single-stage estimator on a fully observed table.
void estimator_coefficients(const PotentialOutcomeTable& table,
                            EstimatorTag tag, const RuleDecisions& f,
                            const RuleDecisions* g, std::size_t n1,
                            std::vector<double>& a, std::vector<double>& b) {
  std::size_t n = table.size();
  if (n1 < 1 || n1 >= n)
    throw Error(Errc::kBadCounts, "need 1 <= n1 <= n-1 to form both arms");
  double d1 = as_double(n1);
  double d0 = as_double(n - n1);
  double dn = as_double(n);
  a.resize(n);
  b.resize(n);
  switch (tag) {
    case EstimatorTag::kAte:
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = table.y1[i] / d1;
        b[i] = -table.y0[i] / d0;
      }
      break;
    case EstimatorTag::kPav:
      require_table_rule(table, f);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = f.assign[i] ? table.y1[i] / d1 : 0.0;
        b[i] = f.assign[i] ? 0.0 : table.y0[i] / d0;
      }
      break;
    case EstimatorTag::kPape: {
      require_table_rule(table, f);
      double c = dn / (dn - 1.0);
      for (std::size_t i = 0; i < n; ++i) {
        double dev = as_double(f.assign[i]) - f.p_hat;
        a[i] = c * dev * table.y1[i] / d1;
        b[i] = -c * dev * table.y0[i] / d0;
      }
      break;
    }
    case EstimatorTag::kPavDifference: {
      require_table_rule(table, f);
      if (g == nullptr)
        throw Error(Errc::kDomain, "value contrast needs a second rule");
      require_table_rule(table, *g);
      for (std::size_t i = 0; i < n; ++i) {
        double dev = as_double(f.assign[i]) - as_double(g->assign[i]);
        a[i] = dev * table.y1[i] / d1;
        b[i] = -dev * table.y0[i] / d0;
      }
      break;
    }
    default:
      throw Error(Errc::kDomain,
                  "two-stage estimators use the ex-ante overloads");
  }
}

void require_design(const PotentialOutcomeTable& table,
                    const ExAnteDesign& d) {
  if (d.n != table.size() || d.n_f + d.n_r != d.n || d.n_r1 + d.n_r0 != d.n_r ||
      d.n_f < 1 || d.n_r1 < 1 || d.n_r0 < 1)
    throw Error(Errc::kBadCounts,
                "inconsistent two-stage design for this table");
}

}  // namespace

AssignmentMoments conditional_moments(const PotentialOutcomeTable& table,
                                      EstimatorTag tag, const RuleDecisions& f,
                                      const RuleDecisions* g, std::size_t n1) {
  std::vector<double> a, b;
  estimator_coefficients(table, tag, f, g, n1, a, b);
  return linear_assignment_moments(a, b, n1);
}

AssignmentMoments conditional_moments_ex_ante(const PotentialOutcomeTable& table,
                                              EstimatorTag tag,
                                              const RuleDecisions& f,
                                              const ExAnteDesign& d) {
  require_table_rule(table, f);
  require_design(table, d);
  std::size_t n = table.size();
  double dn = as_double(n);
  double nf = as_double(d.n_f);
  double nr = as_double(d.n_r);
  double nr1 = as_double(d.n_r1);
  double nr0 = as_double(d.n_r0);

  // Law of total variance given the table: variance of the conditional mean
  // over the arm split, plus the mean of the second-stage randomization
  // variance. The second stage's expected sample variance over a uniformly
  // chosen random arm equals the full-table sample variance.
  double c, p;
  if (tag == EstimatorTag::kPapeExAnte) {
    c = dn / (dn - 1.0);
    p = f.p_hat;
  } else if (tag == EstimatorTag::kIntermediateExAnte) {
    c = 1.0;
    p = nr1 / nr;
  } else {
    throw Error(Errc::kDomain, "not a two-stage estimator");
  }

  std::vector<double> alpha(n), beta(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    double yf = f.assign[i] ? table.y1[i] : table.y0[i];
    double blend = p * table.y1[i] + (1.0 - p) * table.y0[i];
    alpha[i] = c * yf / nf;
    beta[i] = -c * blend / nr;
    if (tag == EstimatorTag::kPapeExAnte)
      w[i] = c * (p * table.y1[i] / nr1 - (1.0 - p) * table.y0[i] / nr0);
    else
      w[i] = table.ite(i) / nr;
  }
  AssignmentMoments first = linear_assignment_moments(alpha, beta, d.n_f);
  double second = nr1 * nr0 / nr * sample_variance(w);

  AssignmentMoments out;
  out.mean = first.mean;
  out.variance = first.variance + second;
  return out;
}

namespace {

// Table moments of one potential-outcome column B against the centered rule
// deviation D = f - p_f, everything divided by the table size.
struct SamplingMoments {
  double mB = 0.0, mB2 = 0.0;
  double mDB = 0.0, mDB2 = 0.0, mD2B = 0.0, mD2B2 = 0.0;
  double vD = 0.0;
};

SamplingMoments table_sampling_moments(const PotentialOutcomeTable& table,
                                       const RuleDecisions& f, bool arm1) {
  std::size_t n = table.size();
  Kahan mB, mB2, mDB, mDB2, mD2B, mD2B2;
  for (std::size_t i = 0; i < n; ++i) {
    double B = arm1 ? table.y1[i] : table.y0[i];
    double D = as_double(f.assign[i]) - f.p_hat;
    mB.add(B);
    mB2.add(B * B);
    mDB.add(D * B);
    mDB2.add(D * B * B);
    mD2B.add(D * D * B);
    mD2B2.add(D * D * B * B);
  }
  double dn = as_double(n);
  SamplingMoments s;
  s.mB = mB.value() / dn;
  s.mB2 = mB2.value() / dn;
  s.mDB = mDB.value() / dn;
  s.mDB2 = mDB2.value() / dn;
  s.mD2B = mD2B.value() / dn;
  s.mD2B2 = mD2B2.value() / dn;
  s.vD = f.p_hat * (1.0 - f.p_hat);
  return s;
}

// E over an i.i.d. size-n draw of the sample variance of (f - p_hat)B, where
// p_hat is the draw's own rule fraction.
double expected_centered_product_var(const SamplingMoments& s, double n) {
  double lead = s.mD2B2 - s.mDB * s.mDB;
  double order1 = s.mD2B2 - s.mD2B * s.mB - s.mDB * s.mDB;
  double order2 = s.mD2B2 + (n - 1.0) * s.vD * s.mB2 - 2.0 * s.mD2B * s.mB -
                  (n - 2.0) * s.vD * s.mB * s.mB - 2.0 * s.mDB * s.mDB;
  return lead - 2.0 / n * order1 + order2 / (n * n);
}

// E[(mean of D) * (sample variance of B)] over an i.i.d. size-n draw.
double expected_dbar_times_var(const SamplingMoments& s, double n) {
  return (s.mDB2 - 2.0 * s.mDB * s.mB) / n;
}

// E[(mean of D)^2 * (sample variance of B)] over an i.i.d. size-n draw.
double expected_dbar_sq_times_var(const SamplingMoments& s, double n) {
  double bracket = s.mD2B2 + (n - 1.0) * s.vD * s.mB2 -
                   2.0 * s.mD2B * s.mB - (n - 2.0) * s.vD * s.mB * s.mB -
                   2.0 * s.mDB * s.mDB;
  return bracket / (n * n);
}

struct TableSummary {
  double p = 0.0, mu1 = 0.0, mu0 = 0.0, tau = 0.0;
  double var1 = 0.0, var0 = 0.0, var_ite = 0.0;
  double lambda = 0.0, var_value = 0.0;  // Y(f) mean and population variance
  double tau_f = 0.0;
};

TableSummary summarize(const PotentialOutcomeTable& table,
                       const RuleDecisions& f) {
  require_table_rule(table, f);
  std::size_t n = table.size();
  if (n == 0) throw Error(Errc::kBadCounts, "empty table");
  std::vector<double> value(n), ite(n);
  for (std::size_t i = 0; i < n; ++i) {
    value[i] = f.assign[i] ? table.y1[i] : table.y0[i];
    ite[i] = table.ite(i);
  }
  TableSummary s;
  s.p = f.p_hat;
  s.mu1 = mean_of(table.y1);
  s.mu0 = mean_of(table.y0);
  s.tau = s.mu1 - s.mu0;
  s.var1 = population_variance(table.y1);
  s.var0 = population_variance(table.y0);
  s.var_ite = population_variance(ite);
  s.lambda = mean_of(value);
  s.var_value = population_variance(value);
  s.tau_f = s.lambda - s.p * s.mu1 - (1.0 - s.p) * s.mu0;
  return s;
}

double pape_bracket(const TableSummary& s, double n) {
  return s.tau_f * s.tau_f - n * s.p * (1.0 - s.p) * s.tau * s.tau +
         2.0 * (n - 1.0) * (2.0 * s.p - 1.0) * s.tau_f * s.tau;
}

}  // namespace

double sampling_variance_pav(const PotentialOutcomeTable& table,
                             const RuleDecisions& f, std::size_t n1,
                             std::size_t n0) {
  require_table_rule(table, f);
  if (n1 < 1 || n0 < 1)
    throw Error(Errc::kBadCounts, "both arms must be non-empty");
  std::size_t n = table.size();
  std::vector<double> masked1(n), masked0(n);
  for (std::size_t i = 0; i < n; ++i) {
    masked1[i] = f.assign[i] ? table.y1[i] : 0.0;
    masked0[i] = f.assign[i] ? 0.0 : table.y0[i];
  }
  return population_variance(masked1) / as_double(n1) +
         population_variance(masked0) / as_double(n0);
}

double sampling_variance_pape(const PotentialOutcomeTable& table,
                              const RuleDecisions& f, std::size_t n1,
                              std::size_t n0) {
  require_table_rule(table, f);
  if (n1 < 1 || n0 < 1)
    throw Error(Errc::kBadCounts, "both arms must be non-empty");
  double n = as_double(n1 + n0);
  double c = n / (n - 1.0);
  TableSummary s = summarize(table, f);
  SamplingMoments m1 = table_sampling_moments(table, f, true);
  SamplingMoments m0 = table_sampling_moments(table, f, false);
  return c * c *
         (expected_centered_product_var(m1, n) / as_double(n1) +
          expected_centered_product_var(m0, n) / as_double(n0) +
          pape_bracket(s, n) / (n * n));
}

namespace {

double ex_ante_core(const PotentialOutcomeTable& table, const RuleDecisions& f,
                    const ExAnteDesign& d, bool scaled) {
  require_table_rule(table, f);
  if (d.n_f < 1 || d.n_r1 < 1 || d.n_r0 < 1 || d.n_f + d.n_r != d.n ||
      d.n_r1 + d.n_r0 != d.n_r)
    throw Error(Errc::kBadCounts, "inconsistent two-stage design");
  double n = as_double(d.n);
  TableSummary s = summarize(table, f);
  std::size_t rows = table.size();
  std::vector<double> value(rows);
  for (std::size_t i = 0; i < rows; ++i)
    value[i] = f.assign[i] ? table.y1[i] : table.y0[i];

  SamplingMoments m1 = table_sampling_moments(table, f, true);
  SamplingMoments m0 = table_sampling_moments(table, f, false);
  double p = s.p;
  double e_sf = population_variance(value);
  double e_p2s1 = p * p * s.var1 + 2.0 * p * expected_dbar_times_var(m1, n) +
                  expected_dbar_sq_times_var(m1, n);
  double e_q2s0 = (1.0 - p) * (1.0 - p) * s.var0 -
                  2.0 * (1.0 - p) * expected_dbar_times_var(m0, n) +
                  expected_dbar_sq_times_var(m0, n);
  double core = e_sf / as_double(d.n_f) + e_p2s1 / as_double(d.n_r1) +
                e_q2s0 / as_double(d.n_r0) + pape_bracket(s, n) / (n * n);
  if (!scaled) return core;
  double c = n / (n - 1.0);
  return c * c * core;
}

}  // namespace

double sampling_variance_pape_ex_ante(const PotentialOutcomeTable& table,
                                      const RuleDecisions& f,
                                      const ExAnteDesign& design) {
  return ex_ante_core(table, f, design, true);
}

double sampling_variance_intermediate(const PotentialOutcomeTable& table,
                                      const RuleDecisions& f,
                                      const ExAnteDesign& design) {
  return ex_ante_core(table, f, design, false);
}

OracleTruth oracle_truth(const PotentialOutcomeTable& table,
                         const RuleDecisions& decisions, std::size_t n1,
                         std::size_t n0,
                         const std::optional<ExAnteDesign>& ex_ante) {
  require_table_rule(table, decisions);
  if (n1 < 1 || n0 < 1)
    throw Error(Errc::kBadCounts, "design needs both arms non-empty");
  TableSummary s = summarize(table, decisions);
  std::size_t rows = table.size();
  double dr = as_double(rows);

  OracleTruth t;
  t.table_n = rows;
  t.design_n1 = n1;
  t.design_n0 = n0;
  t.p_f = s.p;
  t.lambda_f = s.lambda;
  t.tau_f = s.tau_f;
  t.tau = s.tau;
  t.mu1 = s.mu1;
  t.mu0 = s.mu0;
  t.sigma1_sq = s.var1;
  t.sigma0_sq = s.var0;
  t.ite_variance = s.var_ite;
  double denom = std::sqrt(s.p * (1.0 - s.p) * s.var_ite);
  t.normalized_pape = denom > 0.0 ? s.tau_f / denom : 0.0;
  t.pape_bound = pape_upper_bound(s.p, s.var1, s.var0);
  try {
    t.cell_means = rule_cell_means(table, decisions);
  } catch (const Error& e) {
    if (e.code() != Errc::kEmptyCell) throw;
  }

  t.var_pav = sampling_variance_pav(table, decisions, n1, n0);
  t.var_pape = sampling_variance_pape(table, decisions, n1, n0);
  if (ex_ante) {
    t.var_pape_ex_ante =
        sampling_variance_pape_ex_ante(table, decisions, *ex_ante);
    t.var_intermediate =
        sampling_variance_intermediate(table, decisions, *ex_ante);
  }

  // First-order i.i.d. errors of the table averages.
  std::vector<double> dev(rows);
  for (std::size_t i = 0; i < rows; ++i)
    dev[i] = (as_double(decisions.assign[i]) - s.p) * (table.ite(i) - s.tau);
  t.mc_se = {
      {"p_f", std::sqrt(s.p * (1.0 - s.p) / dr)},
      {"mu1", std::sqrt(s.var1 / dr)},
      {"mu0", std::sqrt(s.var0 / dr)},
      {"tau", std::sqrt(s.var_ite / dr)},
      {"lambda_f", std::sqrt(s.var_value / dr)},
      {"tau_f", std::sqrt(population_variance(dev) / dr)},
  };
  return t;
}

OracleTruth oracle_truth(const PotentialOutcomeTable& table,
                         const TreatmentRule& rule, std::size_t n1,
                         std::size_t n0,
                         const std::optional<ExAnteDesign>& ex_ante) {
  return oracle_truth(table, apply_rule(table.covariates, rule), n1, n0,
                      ex_ante);
}

std::optional<std::size_t> combination_count(std::size_t n, std::size_t k,
                                             std::size_t cap) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  unsigned long long c = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;  // exact: prefix is itself a binomial
    if (c > cap) return std::nullopt;
  }
  return static_cast<std::size_t>(c);
}

void for_each_combination(
    std::size_t n, std::size_t k,
    const std::function<void(const std::vector<std::size_t>&)>& visit) {
  if (k > n) throw Error(Errc::kBadCounts, "k must not exceed n");
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    visit(idx);
    // Advance the rightmost index that can still move.
    std::size_t j = k;
    while (j > 0 && idx[j - 1] == n - k + j - 1) --j;
    if (j == 0) return;
    ++idx[j - 1];
    for (std::size_t l = j; l < k; ++l) idx[l] = idx[l - 1] + 1;
  }
}

namespace {

constexpr std::size_t kEnumerationCap = 1000000;

struct Welford {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++count;
    double d = x - mean;
    mean += d / as_double(count);
    m2 += d * (x - mean);
  }
  EnumerationResult result() const {
    EnumerationResult r;
    r.mean = mean;
    r.variance = count > 0 ? m2 / as_double(count) : 0.0;
    r.draws = count;
    return r;
  }
};

}  // namespace

EnumerationResult enumerate_randomizations(const PotentialOutcomeTable& table,
                                           EstimatorTag tag,
                                           const RuleDecisions& f,
                                           const RuleDecisions* g,
                                           std::size_t n1) {
  std::size_t n = table.size();
  if (n1 < 1 || n1 >= n)
    throw Error(Errc::kBadCounts, "need 1 <= n1 <= n-1");
  if (tag == EstimatorTag::kPapeExAnte ||
      tag == EstimatorTag::kIntermediateExAnte)
    throw Error(Errc::kDomain, "two-stage estimators use the ex-ante overload");
  if (!combination_count(n, n1, kEnumerationCap))
    throw Error(Errc::kTooLarge, "assignment count exceeds the enumeration cap");

  Welford acc;
  std::vector<std::uint8_t> treatment(n);
  for_each_combination(n, n1, [&](const std::vector<std::size_t>& idx) {
    std::fill(treatment.begin(), treatment.end(), 0);
    for (std::size_t i : idx) treatment[i] = 1;
    ExperimentDataset data = realize(table, treatment);
    double value = 0.0;
    switch (tag) {
      case EstimatorTag::kAte: value = estimate_ate(data).value; break;
      case EstimatorTag::kPav: value = estimate_pav(data, f).value; break;
      case EstimatorTag::kPape: value = estimate_pape(data, f).value; break;
      case EstimatorTag::kPavDifference:
        if (g == nullptr)
          throw Error(Errc::kDomain, "value contrast needs a second rule");
        value = estimate_pav_difference(data, f, *g).value;
        break;
      default: break;
    }
    acc.add(value);
  });
  return acc.result();
}

EnumerationResult enumerate_randomizations_ex_ante(
    const PotentialOutcomeTable& table, EstimatorTag tag,
    const RuleDecisions& f, const ExAnteDesign& design) {
  require_table_rule(table, f);
  require_design(table, design);
  if (tag != EstimatorTag::kPapeExAnte &&
      tag != EstimatorTag::kIntermediateExAnte)
    throw Error(Errc::kDomain, "not a two-stage estimator");
  auto outer = combination_count(design.n, design.n_f, kEnumerationCap);
  auto inner = combination_count(design.n_r, design.n_r1, kEnumerationCap);
  if (!outer || !inner || *outer * *inner > kEnumerationCap)
    throw Error(Errc::kTooLarge, "draw count exceeds the enumeration cap");

  std::size_t n = table.size();
  Welford acc;
  ExAnteAssignment assignment;
  assignment.design = design;
  assignment.p_hat = f.p_hat;
  assignment.itr_arm.assign(n, 0);
  assignment.treatment.assign(n, 0);

  for_each_combination(n, design.n_f, [&](const std::vector<std::size_t>& fs) {
    std::fill(assignment.itr_arm.begin(), assignment.itr_arm.end(), 0);
    for (std::size_t i : fs) assignment.itr_arm[i] = 1;
    std::vector<std::size_t> random_arm;
    random_arm.reserve(design.n_r);
    for (std::size_t i = 0; i < n; ++i)
      if (!assignment.itr_arm[i]) random_arm.push_back(i);

    for_each_combination(
        design.n_r, design.n_r1, [&](const std::vector<std::size_t>& ts) {
          std::fill(assignment.treatment.begin(), assignment.treatment.end(),
                    0);
          for (std::size_t i = 0; i < n; ++i)
            if (assignment.itr_arm[i]) assignment.treatment[i] = f.assign[i];
          for (std::size_t j : ts) assignment.treatment[random_arm[j]] = 1;
          ExAnteDataset data = realize_ex_ante(table, assignment);
          double value = tag == EstimatorTag::kPapeExAnte
                             ? estimate_pape_ex_ante(data, f).value
                             : intermediate_value_ex_ante(data);
          acc.add(value);
        });
  });
  return acc.result();
}

CrossFitOracle crossfit_estimand_oracle(const PotentialOutcomeTable& table,
                                        const ScoringAlgorithm& algo,
                                        std::size_t training_n,
                                        std::size_t training_n1,
                                        std::size_t eval_m1,
                                        std::size_t eval_m0,
                                        std::size_t replications,
                                        std::uint64_t seed) {
  std::size_t rows = table.size();
  if (rows < 2) throw Error(Errc::kBadCounts, "table too small");
  if (training_n < 2 || training_n1 < 1 || training_n1 >= training_n)
    throw Error(Errc::kBadCounts, "training draw needs both arms non-empty");
  if (eval_m1 < 1 || eval_m0 < 1)
    throw Error(Errc::kBadCounts, "evaluation arms must be non-empty");
  if (replications < 2)
    throw Error(Errc::kBadCounts, "need at least two training replications");

  double dr = as_double(rows);
  double mu1 = mean_of(table.y1);
  double mu0 = mean_of(table.y0);

  CrossFitOracle out;
  out.training_n = training_n;
  out.training_n1 = training_n1;
  out.replications = replications;
  out.f_bar.assign(rows, 0.0);

  std::vector<double> lambdas(replications), ps(replications),
      taus(replications), ite_sums(replications);
  Kahan masked1_acc, masked0_acc;

  std::vector<std::uint8_t> decision(rows);
  std::vector<double> masked1(rows), masked0(rows);
  Rng rng(seed);
  for (std::size_t r = 0; r < replications; ++r) {
    ExperimentDataset training;
    training.covariates.cols = table.covariates.cols;
    training.covariates.rows = training_n;
    training.covariates.values.reserve(training_n * table.covariates.cols);
    training.outcome.resize(training_n);
    training.treatment = draw_complete_randomization(training_n, training_n1, rng);
    for (std::size_t i = 0; i < training_n; ++i) {
      std::size_t pick = rng.next_below(rows);
      auto row = table.covariates.row(pick);
      training.covariates.values.insert(training.covariates.values.end(),
                                        row.begin(), row.end());
      training.outcome[i] =
          training.treatment[i] ? table.y1[pick] : table.y0[pick];
    }

    ScoringRule score;
    try {
      score = algo.train(training, rng.next_u64());
    } catch (const std::exception& e) {
      throw Error(Errc::kTrainFailure, "training replication " +
                                           std::to_string(r) + " failed: " +
                                           e.what());
    }

    Kahan lam, pf, ite_sum;
    for (std::size_t i = 0; i < rows; ++i) {
      decision[i] = score(table.covariates.row(i)) > 0.0 ? 1 : 0;
      out.f_bar[i] += decision[i];
      masked1[i] = decision[i] ? table.y1[i] : 0.0;
      masked0[i] = decision[i] ? 0.0 : table.y0[i];
      lam.add(decision[i] ? table.y1[i] : table.y0[i]);
      pf.add(decision[i]);
      if (decision[i]) ite_sum.add(table.ite(i));
    }
    lambdas[r] = lam.value() / dr;
    ps[r] = pf.value() / dr;
    taus[r] = lambdas[r] - ps[r] * mu1 - (1.0 - ps[r]) * mu0;
    ite_sums[r] = ite_sum.value();
    masked1_acc.add(population_variance(masked1));
    masked0_acc.add(population_variance(masked0));
  }

  double drep = as_double(replications);
  for (double& v : out.f_bar) v /= drep;
  out.lambda_F = mean_of(lambdas);
  out.p_F = mean_of(ps);
  out.tau_F = mean_of(taus);
  out.e_masked1_var = masked1_acc.value() / drep;
  out.e_masked0_var = masked0_acc.value() / drep;
  // Training-induced covariance term: for two independent table draws i, j,
  // E{Cov(f(Xi), f(Xj) | Xi, Xj) ITEi ITEj} equals Var over training of
  // sum_a f(a) ITE_a, divided by the squared table size.
  out.covariance_term = sample_variance(ite_sums) / (dr * dr);
  out.v_single = out.e_masked1_var / as_double(eval_m1) +
                 out.e_masked0_var / as_double(eval_m0) + out.covariance_term;
  out.mc_se = {
      {"lambda_F", std::sqrt(sample_variance(lambdas) / drep)},
      {"p_F", std::sqrt(sample_variance(ps) / drep)},
      {"tau_F", std::sqrt(sample_variance(taus) / drep)},
  };
  return out;
}

}  // namespace itreval
