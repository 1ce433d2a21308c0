#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "itreval/crossfit.hpp"
#include "itreval/estimators.hpp"
#include "itreval/ex_ante.hpp"
#include "itreval/oracle.hpp"

using namespace itreval;
using testutil::decisions_of;
using testutil::make_table;
using testutil::random_split_decisions;
using testutil::random_table;

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

double cov_population(std::span<const double> a, std::span<const double> b) {
  double ma = mean_of(a), mb = mean_of(b), s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("linear assignment moments agree with brute force") {
  std::vector<double> a = {0.3, -1.2, 2.0, 0.7, -0.4};
  std::vector<double> b = {1.0, 0.5, -0.25, 2.0, 0.125};
  for (std::size_t n1 : {std::size_t{1}, std::size_t{2}, std::size_t{4}}) {
    std::vector<double> sums;
    for_each_combination(5, n1, [&](const std::vector<std::size_t>& idx) {
      std::vector<bool> treated(5, false);
      for (std::size_t i : idx) treated[i] = true;
      double s = 0.0;
      for (std::size_t i = 0; i < 5; ++i) s += treated[i] ? a[i] : b[i];
      sums.push_back(s);
    });
    AssignmentMoments m = linear_assignment_moments(a, b, n1);
    CHECK(close(m.mean, mean_of(sums), 1e-12));
    CHECK(close(m.variance, population_variance(sums), 1e-12));
  }
}

TEST_CASE("closed-form randomization moments match estimator enumeration") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 5 + static_cast<std::size_t>(trial % 2);
    std::size_t n1 = 2 + rng.next_below(n - 3);
    PotentialOutcomeTable t = random_table(rng, n);
    RuleDecisions f = random_split_decisions(rng, n);
    RuleDecisions g = random_split_decisions(rng, n);

    for (EstimatorTag tag : {EstimatorTag::kAte, EstimatorTag::kPav,
                             EstimatorTag::kPape, EstimatorTag::kPavDifference}) {
      const RuleDecisions* g2 = tag == EstimatorTag::kPavDifference ? &g : nullptr;
      AssignmentMoments cm = conditional_moments(t, tag, f, g2, n1);
      EnumerationResult en = enumerate_randomizations(t, tag, f, g2, n1);
      CHECK(en.draws == *combination_count(n, n1, 1000000));
      CHECK(close(cm.mean, en.mean, 1e-12));
      CHECK(close(cm.variance, en.variance, 1e-12));
    }

    // Fixed-table means have simple closed displays.
    std::vector<double> value(n), ite(n), fvec(n);
    for (std::size_t i = 0; i < n; ++i) {
      value[i] = f.assign[i] ? t.y1[i] : t.y0[i];
      ite[i] = t.ite(i);
      fvec[i] = f.assign[i];
    }
    CHECK(close(conditional_moments(t, EstimatorTag::kAte, f, nullptr, n1).mean,
                t.tau(), 1e-12));
    CHECK(close(conditional_moments(t, EstimatorTag::kPav, f, nullptr, n1).mean,
                mean_of(value), 1e-12));
    CHECK(close(conditional_moments(t, EstimatorTag::kPape, f, nullptr, n1).mean,
                sample_covariance(fvec, ite), 1e-12));
  }
}

TEST_CASE("two-stage moments match full two-stage enumeration") {
  Rng rng(123);
  ExAnteDesign d4{4, 2, 2, 1, 1};
  ExAnteDesign d6{6, 3, 3, 1, 2};
  for (int trial = 0; trial < 5; ++trial) {
    for (const ExAnteDesign& d : {d4, d6}) {
      PotentialOutcomeTable t = random_table(rng, d.n);
      RuleDecisions f = random_split_decisions(rng, d.n);
      for (EstimatorTag tag :
           {EstimatorTag::kPapeExAnte, EstimatorTag::kIntermediateExAnte}) {
        AssignmentMoments cm = conditional_moments_ex_ante(t, tag, f, d);
        EnumerationResult en = enumerate_randomizations_ex_ante(t, tag, f, d);
        CHECK(en.draws == *combination_count(d.n, d.n_f, 1000000) *
                              *combination_count(d.n_r, d.n_r1, 1000000));
        CHECK(close(cm.mean, en.mean, 1e-12));
        CHECK(close(cm.variance, en.variance, 1e-12));
      }
    }
  }
}

TEST_CASE("two-stage mean has the double-sum form when the design is aligned") {
  struct Case {
    std::size_t n;
    std::vector<std::uint8_t> f;
    ExAnteDesign d;
  };
  std::vector<Case> cases = {
      {4, {1, 0, 1, 0}, {4, 2, 2, 1, 1}},
      {6, {1, 1, 0, 1, 0, 0}, {6, 2, 4, 2, 2}},
  };
  Rng rng(2718);
  for (const Case& c : cases) {
    PotentialOutcomeTable t = random_table(rng, c.n);
    RuleDecisions f = decisions_of(c.f);
    double dn = static_cast<double>(c.n);

    double display = 0.0;
    for (std::size_t i = 0; i < c.n; ++i)
      display += (f.assign[i] ? t.y1[i] : t.y0[i]) / dn;
    for (std::size_t i = 0; i < c.n; ++i)
      for (std::size_t j = 0; j < c.n; ++j)
        display -= (t.y1[i] * f.assign[j] + t.y0[i] * (1.0 - f.assign[j])) /
                   (dn * dn);

    AssignmentMoments inter =
        conditional_moments_ex_ante(t, EstimatorTag::kIntermediateExAnte, f, c.d);
    CHECK(close(inter.mean, display, 1e-12));

    // With the arm split matching the rule's treated fraction, the unscaled
    // statistic is (n-1)/n times the scaled one on every draw.
    AssignmentMoments scaled =
        conditional_moments_ex_ante(t, EstimatorTag::kPapeExAnte, f, c.d);
    double r = (dn - 1.0) / dn;
    CHECK(close(inter.mean, r * scaled.mean, 1e-12));
    CHECK(close(inter.variance, r * r * scaled.variance, 1e-12));

    EnumerationResult en = enumerate_randomizations_ex_ante(
        t, EstimatorTag::kIntermediateExAnte, f, c.d);
    CHECK(close(en.mean, display, 1e-12));
    if (c.n == 4) CHECK(en.draws == 12);
  }
}

TEST_CASE("sampling variances are exact over sample-and-assignment enumeration") {
  struct Pop {
    std::vector<double> y1, y0;
    std::vector<std::uint8_t> f;
  };
  std::vector<Pop> pops = {
      {{1.25, -0.5, 2.0}, {0.75, 1.5, -0.25}, {1, 0, 1}},
      {{-0.375, 2.5, 0.625}, {1.125, -0.75, 0.5}, {1, 0, 0}},
  };
  const std::size_t n = 4, n1 = 2;
  const double dn = 4.0;

  for (const Pop& pop : pops) {
    PotentialOutcomeTable t = make_table(pop.y1, pop.y0);
    RuleDecisions f = decisions_of(pop.f);
    const std::size_t rows = 3;

    std::vector<double> value(rows), ite(rows), fvec(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      value[i] = f.assign[i] ? t.y1[i] : t.y0[i];
      ite[i] = t.ite(i);
      fvec[i] = f.assign[i];
    }
    double lambda_f = mean_of(value);
    double tau_f = cov_population(fvec, ite);
    double tau = t.tau();
    double p_f = f.p_hat;

    // Every ordered i.i.d. draw of 4 units from the 3-row population.
    std::vector<double> pav_means, pav_vars, pape_means, pape_vars;
    double e_sf = 0.0, e_p2s1 = 0.0, e_q2s0 = 0.0;
    std::array<std::size_t, 4> pick{};
    std::size_t draws = 0;
    for (pick[0] = 0; pick[0] < rows; ++pick[0])
      for (pick[1] = 0; pick[1] < rows; ++pick[1])
        for (pick[2] = 0; pick[2] < rows; ++pick[2])
          for (pick[3] = 0; pick[3] < rows; ++pick[3]) {
            ++draws;
            std::vector<double> y1(n), y0(n), vs(n);
            std::vector<std::uint8_t> fs(n);
            for (std::size_t i = 0; i < n; ++i) {
              y1[i] = t.y1[pick[i]];
              y0[i] = t.y0[pick[i]];
              fs[i] = f.assign[pick[i]];
              vs[i] = fs[i] ? y1[i] : y0[i];
            }
            PotentialOutcomeTable st = make_table(y1, y0);
            RuleDecisions sf = decisions_of(fs);

            EnumerationResult pav =
                enumerate_randomizations(st, EstimatorTag::kPav, sf, nullptr, n1);
            pav_means.push_back(pav.mean);
            pav_vars.push_back(pav.variance);
            EnumerationResult pape =
                enumerate_randomizations(st, EstimatorTag::kPape, sf, nullptr, n1);
            pape_means.push_back(pape.mean);
            pape_vars.push_back(pape.variance);

            e_sf += sample_variance(vs);
            e_p2s1 += sf.p_hat * sf.p_hat * sample_variance(y1);
            e_q2s0 += (1.0 - sf.p_hat) * (1.0 - sf.p_hat) * sample_variance(y0);
          }
    CHECK(draws == 81);
    double dd = static_cast<double>(draws);
    e_sf /= dd;
    e_p2s1 /= dd;
    e_q2s0 /= dd;

    // Law of total variance across the two stages of randomness.
    double pav_mean = mean_of(pav_means);
    double pav_total = mean_of(pav_vars) + population_variance(pav_means);
    CHECK(close(pav_mean, lambda_f, 1e-12));
    CHECK(close(pav_total, sampling_variance_pav(t, f, n1, n - n1), 1e-12));

    double pape_mean = mean_of(pape_means);
    double pape_total = mean_of(pape_vars) + population_variance(pape_means);
    CHECK(close(pape_mean, tau_f, 1e-12));
    CHECK(close(pape_total, sampling_variance_pape(t, f, n1, n - n1), 1e-12));

    // The expected sample variance of realized rule values equals the
    // population variance of those values.
    CHECK(close(e_sf, population_variance(value), 1e-12));

    // Two-stage displays assembled from the enumerated expectations.
    ExAnteDesign d{4, 2, 2, 1, 1};
    double bracket = tau_f * tau_f - dn * p_f * (1.0 - p_f) * tau * tau +
                     2.0 * (dn - 1.0) * (2.0 * p_f - 1.0) * tau_f * tau;
    double core = e_sf / 2.0 + e_p2s1 / 1.0 + e_q2s0 / 1.0 + bracket / (dn * dn);
    double c = dn / (dn - 1.0);
    CHECK(close(c * c * core, sampling_variance_pape_ex_ante(t, f, d), 1e-12));
    CHECK(close(core, sampling_variance_intermediate(t, f, d), 1e-12));
  }
}

TEST_CASE("ground-truth summary is internally consistent") {
  Rng rng(555);
  for (int trial = 0; trial < 10; ++trial) {
    PotentialOutcomeTable t = random_table(rng, 7);
    RuleDecisions f = random_split_decisions(rng, 7);
    OracleTruth ot = oracle_truth(t, f, 3, 4);

    std::vector<double> fvec(7), ite(7);
    for (std::size_t i = 0; i < 7; ++i) {
      fvec[i] = f.assign[i];
      ite[i] = t.ite(i);
    }
    CHECK(close(ot.tau_f, cov_population(fvec, ite), 1e-10));
    CHECK(ot.normalized_pape >= -1.0 - 1e-12);
    CHECK(ot.normalized_pape <= 1.0 + 1e-12);
    CHECK(std::abs(ot.tau_f) <= ot.pape_bound + 1e-12);
    CHECK(ot.var_pav == sampling_variance_pav(t, f, 3, 4));
    CHECK(ot.var_pape == sampling_variance_pape(t, f, 3, 4));
    CHECK(ot.var_pav > 0.0);
    CHECK(ot.cell_means.has_value());
    CHECK_FALSE(ot.var_pape_ex_ante.has_value());
    CHECK(ot.mc_se.count("tau_f") == 1);

    ExAnteDesign d{7, 3, 4, 2, 2};
    OracleTruth two = oracle_truth(t, f, 3, 4, d);
    REQUIRE(two.var_pape_ex_ante.has_value());
    REQUIRE(two.var_intermediate.has_value());
    CHECK(*two.var_pape_ex_ante == sampling_variance_pape_ex_ante(t, f, d));
    CHECK(*two.var_intermediate == sampling_variance_intermediate(t, f, d));
  }

  PotentialOutcomeTable same = make_table({1, 2, 3, 4}, {1, 2, 3, 4});
  OracleTruth flat = oracle_truth(same, decisions_of({1, 0, 1, 0}), 2, 2);
  CHECK(flat.tau == 0.0);
  CHECK(close(flat.tau_f, 0.0, 1e-14));
  CHECK(flat.normalized_pape == 0.0);
  CHECK(flat.ite_variance == 0.0);

  PotentialOutcomeTable t2 = make_table({2, 4, 6, 8}, {1, 1, 1, 1});
  OracleTruth all1 = oracle_truth(t2, decisions_of({1, 1, 1, 1}), 2, 2);
  CHECK(all1.p_f == 1.0);
  CHECK(close(all1.lambda_f, 5.0, 1e-14));
  CHECK(close(all1.tau_f, 0.0, 1e-14));
  CHECK_FALSE(all1.cell_means.has_value());
  CHECK(all1.mc_se.at("p_f") == 0.0);

  CHECK(thrown_code([&] { oracle_truth(t2, decisions_of({1, 1, 1, 1}), 0, 4); }) ==
        Errc::kBadCounts);
}

TEST_CASE("learned-rule ground truth ties out") {
  Rng rng(777);
  PotentialOutcomeTable t;
  t.covariates = Matrix::zeros(6, 1);
  t.y1.resize(6);
  t.y0.resize(6);
  for (std::size_t i = 0; i < 6; ++i) {
    t.covariates.at(i, 0) = rng.next_normal();
    t.y1[i] = 2.0 * rng.next_normal() + 1.0;
    t.y0[i] = 2.0 * rng.next_normal();
  }

  ScoringAlgorithm algo = stratum_cate_algorithm(0, 2);
  CrossFitOracle co = crossfit_estimand_oracle(t, algo, 8, 4, 3, 3, 300, 42);
  CHECK(co.replications == 300);
  REQUIRE(co.f_bar.size() == 6);
  std::vector<double> ite(6);
  for (std::size_t i = 0; i < 6; ++i) ite[i] = t.ite(i);
  CHECK(close(co.tau_F, cov_population(co.f_bar, ite), 1e-10));
  CHECK(co.p_F >= 0.0);
  CHECK(co.p_F <= 1.0);
  CHECK(close(co.v_single,
              co.e_masked1_var / 3.0 + co.e_masked0_var / 3.0 +
                  co.covariance_term,
              1e-12));
  CHECK(co.covariance_term >= 0.0);

  CrossFitOracle again = crossfit_estimand_oracle(t, algo, 8, 4, 3, 3, 300, 42);
  CHECK(again.tau_F == co.tau_F);
  CHECK(again.f_bar == co.f_bar);

  CrossFitOracle cc =
      crossfit_estimand_oracle(t, constant_algorithm(1), 8, 4, 2, 5, 50, 9);
  CHECK(cc.p_F == 1.0);
  CHECK(close(cc.lambda_F, mean_of(t.y1), 1e-12));
  CHECK(close(cc.tau_F, 0.0, 1e-12));
  CHECK(cc.e_masked0_var == 0.0);
  CHECK(close(cc.covariance_term, 0.0, 1e-12));

  CHECK(thrown_code([&] {
          crossfit_estimand_oracle(t, algo, 8, 4, 3, 3, 1, 42);
        }) == Errc::kBadCounts);
  CHECK(thrown_code([&] {
          crossfit_estimand_oracle(t, algo, 8, 4, 0, 3, 10, 42);
        }) == Errc::kBadCounts);
  CHECK(thrown_code([&] {
          crossfit_estimand_oracle(t, algo, 8, 8, 3, 3, 10, 42);
        }) == Errc::kBadCounts);
}

TEST_CASE("combinatorics utilities") {
  CHECK(*combination_count(5, 2, 1000) == 10);
  CHECK(*combination_count(52, 5, 10000000) == 2598960);
  CHECK(*combination_count(4, 0, 10) == 1);
  CHECK(*combination_count(3, 5, 10) == 0);
  CHECK_FALSE(combination_count(30, 15, 1000000).has_value());

  std::vector<std::vector<std::size_t>> seen;
  for_each_combination(4, 2, [&](const std::vector<std::size_t>& idx) {
    seen.push_back(idx);
  });
  std::vector<std::vector<std::size_t>> want = {{0, 1}, {0, 2}, {0, 3},
                                                {1, 2}, {1, 3}, {2, 3}};
  CHECK(seen == want);

  Rng rng(31);
  PotentialOutcomeTable big = random_table(rng, 40);
  RuleDecisions fb = random_split_decisions(rng, 40);
  CHECK(thrown_code([&] {
          enumerate_randomizations(big, EstimatorTag::kPav, fb, nullptr, 20);
        }) == Errc::kTooLarge);

  PotentialOutcomeTable small = random_table(rng, 4);
  RuleDecisions fs = random_split_decisions(rng, 4);
  CHECK(thrown_code([&] {
          enumerate_randomizations(small, EstimatorTag::kPapeExAnte, fs, nullptr,
                                   2);
        }) == Errc::kDomain);
  CHECK(thrown_code([&] {
          enumerate_randomizations(small, EstimatorTag::kPav, fs, nullptr, 0);
        }) == Errc::kBadCounts);
  CHECK(thrown_code([&] {
          conditional_moments(small, EstimatorTag::kPapeExAnte, fs, nullptr, 2);
        }) == Errc::kDomain);
  CHECK(thrown_code([&] {
          conditional_moments(small, EstimatorTag::kPavDifference, fs, nullptr,
                              2);
        }) == Errc::kDomain);
  ExAnteDesign bad{4, 2, 2, 2, 1};
  CHECK(thrown_code([&] {
          conditional_moments_ex_ante(small, EstimatorTag::kPapeExAnte, fs, bad);
        }) == Errc::kBadCounts);
  CHECK(thrown_code([&] {
          conditional_moments_ex_ante(small, EstimatorTag::kPav, fs,
                                      ExAnteDesign{4, 2, 2, 1, 1});
        }) == Errc::kDomain);

  CHECK(std::string(estimator_tag_name(EstimatorTag::kPape)) == "pape");
  CHECK(std::string(estimator_tag_name(EstimatorTag::kIntermediateExAnte)) ==
        "intermediate_ex_ante");
}
