#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "itreval/dgp.hpp"

using namespace itreval;

namespace {

std::vector<double> zero_row() { return std::vector<double>(54, 0.0); }

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("anchor points of the outcome surface") {
  std::vector<double> x = zero_row();
  CHECK(acic28_mean_outcome(x, 1) == doctest::Approx(-0.69).epsilon(1e-12));
  CHECK(acic28_mean_outcome(x, 0) == doctest::Approx(-1.84).epsilon(1e-12));
  CHECK(acic28_cate(x) == doctest::Approx(1.15).epsilon(1e-12));
}

TEST_CASE("shared cubic vanishes at its root") {
  std::vector<double> x = zero_row();
  double base = acic28_mean_outcome(x, 0);
  x[28] = 0.98;  // only the linear term survives under control
  CHECK(acic28_mean_outcome(x, 0) ==
        doctest::Approx(base + 0.53 * 0.98).epsilon(1e-12));
}

TEST_CASE("surface rejects bad inputs") {
  std::vector<double> narrow(10, 0.0);
  CHECK_THROWS_AS(acic28_mean_outcome(narrow, 1), Error);
  std::vector<double> x = zero_row();
  CHECK_THROWS_AS(acic28_mean_outcome(x, 2), Error);
}

TEST_CASE("oracle rule follows the sign of the modeled effect") {
  DgpSpec spec;
  spec.noise_sd = 0.0;
  PotentialOutcomeTable t = generate_population(spec, 64, 5);
  TreatmentRule rule = cate_oracle_rule();
  RuleDecisions d = apply_rule(t.covariates, rule);
  for (std::size_t i = 0; i < t.size(); ++i) {
    double effect = acic28_cate(t.covariates.row(i));
    CHECK(d.assign[i] == (effect > 0.0 ? 1 : 0));
  }
}

TEST_CASE("no noise makes the unit effect a function of covariates") {
  DgpSpec spec;
  spec.noise_sd = 0.0;
  PotentialOutcomeTable t = generate_population(spec, 32, 11);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(t.y1[i] == doctest::Approx(acic28_mean_outcome(t.covariates.row(i), 1))
                         .epsilon(1e-12));
    CHECK(t.ite(i) == doctest::Approx(acic28_cate(t.covariates.row(i)))
                          .epsilon(1e-12));
  }
}

TEST_CASE("population generation is seed-deterministic") {
  DgpSpec spec;
  PotentialOutcomeTable a = generate_population(spec, 40, 7);
  PotentialOutcomeTable b = generate_population(spec, 40, 7);
  PotentialOutcomeTable c = generate_population(spec, 40, 8);
  CHECK(a.y1 == b.y1);
  CHECK(a.y0 == b.y0);
  CHECK(a.covariates.values == b.covariates.values);
  CHECK(a.y1 != c.y1);
}

TEST_CASE("covariate marginals match their documented distributions") {
  DgpSpec spec;
  const std::size_t n = 20000;
  PotentialOutcomeTable t = generate_population(spec, n, 13);

  // Sign columns are centered coins.
  for (std::size_t col : {std::size_t{3}, std::size_t{41}}) {
    double plus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double v = t.covariates.at(i, col);
      CHECK(std::abs(v) == 1.0);
      plus += v > 0.0;
    }
    CHECK(std::abs(plus / n - 0.5) < 0.02);
  }

  // Continuous columns: Kolmogorov-Smirnov distance against the standard
  // normal, well under a generous 0.1%-level band.
  for (std::size_t col : {std::size_t{16}, std::size_t{28}, std::size_t{53}}) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = t.covariates.at(i, col);
    std::sort(v.begin(), v.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double cdf = normal_cdf(v[i]);
      double lo = static_cast<double>(i) / n;
      double hi = static_cast<double>(i + 1) / n;
      d = std::max({d, std::abs(cdf - lo), std::abs(cdf - hi)});
    }
    CHECK(d < 1.95 / std::sqrt(static_cast<double>(n)));
  }

  // Unused columns stay at zero.
  CHECK(t.covariates.at(0, 0) == 0.0);
  CHECK(t.covariates.at(5, 10) == 0.0);
}

TEST_CASE("large-sample summaries stabilize across seeds") {
  DgpSpec spec;
  TreatmentRule rule = cate_oracle_rule();
  PopulationMoments a = population_moments(spec, rule, 1000000, 21);
  PopulationMoments b = population_moments(spec, rule, 1000000, 22);
  double combined = std::sqrt(a.se_ate * a.se_ate + b.se_ate * b.se_ate);
  CHECK(std::abs(a.ate - b.ate) < 4.0 * combined);
  double combined_l =
      std::sqrt(a.se_lambda_f * a.se_lambda_f + b.se_lambda_f * b.se_lambda_f);
  CHECK(std::abs(a.lambda_f - b.lambda_f) < 4.0 * combined_l);
  CHECK(a.p_f > 0.0);
  CHECK(a.p_f < 1.0);
}

TEST_CASE("summary moments agree with a direct pass over a table") {
  DgpSpec spec;
  const std::size_t n = 500;
  // Same seed: population_moments draws the identical stream as
  // generate_population, so the summaries must match table averages.
  PotentialOutcomeTable t = generate_population(spec, n, 3);
  PopulationMoments m = population_moments(spec, cate_oracle_rule(), n, 3);
  CHECK(m.ate == doctest::Approx(t.tau()).epsilon(1e-12));
  CHECK(m.mean_y1 == doctest::Approx(mean_of(t.y1)).epsilon(1e-12));

  RuleDecisions d = apply_rule(t.covariates, cate_oracle_rule());
  double lambda = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    lambda += d.assign[i] ? t.y1[i] : t.y0[i];
  lambda /= static_cast<double>(n);
  CHECK(m.lambda_f == doctest::Approx(lambda).epsilon(1e-12));
  CHECK(m.p_f == doctest::Approx(d.p_hat).epsilon(1e-14));
}

TEST_CASE("spec validation") {
  DgpSpec spec;
  spec.width = 10;
  CHECK_THROWS_AS(generate_population(spec, 4, 1), Error);
  DgpSpec neg;
  neg.noise_sd = -1.0;
  CHECK_THROWS_AS(generate_population(neg, 4, 1), Error);
}
