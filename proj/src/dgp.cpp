#include "itreval/dgp.hpp"

#include <cmath>

namespace itreval {

namespace {

// 0-based positions of the used covariates.
constexpr std::size_t kX4 = 3, kX17 = 16, kX27 = 26, kX29 = 28, kX30 = 29,
                      kX37 = 36, kX42 = 41, kX54 = 53;

inline double ind(bool cond) { return cond ? 1.0 : 0.0; }

}  // namespace

double acic28_mean_outcome(std::span<const double> x, int t) {
  if (t != 0 && t != 1)
    throw Error(Errc::kDomain, "treatment must be 0 or 1");
  if (x.size() <= kX54)
    throw Error(Errc::kMissingCovariate,
                "outcome model needs covariate positions up to 54, row has " +
                    std::to_string(x.size()));
  const double x4 = x[kX4], x17 = x[kX17], x27 = x[kX27], x29 = x[kX29],
               x30 = x[kX30], x37 = x[kX37], x42 = x[kX42], x54 = x[kX54];

  double value = 1.60;
  value += 0.53 * x29;
  value -= 3.80 * x29 * (x29 - 0.98) * (x29 + 0.86);
  value -= 0.32 * ind(x17 > 0.0);
  value += 0.21 * ind(x42 > 0.0);
  value -= 0.63 * x27;
  value += 4.68 * ind(x27 < -0.61);
  value -= 0.39 * (x27 + 0.91) * ind(x27 < -0.91);
  value += 0.75 * ind(x30 <= 0.0);
  value -= 1.22 * ind(x54 <= 0.0);
  value += 0.11 * x37 * ind(x4 <= 0.0);
  value -= 0.71 * ind(x17 <= 0.0 && t == 0);
  value -= 1.82 * ind(x42 <= 0.0 && t == 1);
  value += 0.28 * ind(x30 <= 0.0 && t == 0);
  if (t == 1)
    value += 0.58 * x29 - 9.42 * x29 * (x29 - 0.67) * (x29 + 0.34);
  if (t == 0)
    value += 0.44 * x27 - 4.87 * ind(x27 < -0.80);
  value -= 2.54 * ind(t == 0 && x54 <= 0.0);
  return value;
}

double acic28_cate(std::span<const double> x) {
  return acic28_mean_outcome(x, 1) - acic28_mean_outcome(x, 0);
}

TreatmentRule cate_oracle_rule() {
  return {"cate_oracle",
          [](std::span<const double> x) { return acic28_cate(x) > 0.0 ? 1 : 0; }};
}

namespace {

// Covariate draw order is fixed; changing it would silently change every
// seeded result downstream.
void fill_row(std::span<double> row, Rng& rng) {
  row[kX4] = rng.next_below(2) ? 1.0 : -1.0;
  row[kX17] = rng.next_normal();
  row[kX27] = rng.next_normal();
  row[kX29] = rng.next_normal();
  row[kX30] = rng.next_normal();
  row[kX37] = rng.next_normal();
  row[kX42] = rng.next_below(2) ? 1.0 : -1.0;
  row[kX54] = rng.next_normal();
}

}  // namespace

PotentialOutcomeTable generate_population(const DgpSpec& spec, std::size_t n,
                                          std::uint64_t seed) {
  if (spec.width <= kX54)
    throw Error(Errc::kConfig, "covariate width must exceed 54");
  if (spec.noise_sd < 0.0)
    throw Error(Errc::kConfig, "noise sd must be non-negative");
  PotentialOutcomeTable table;
  table.covariates = Matrix::zeros(n, spec.width);
  table.y1.resize(n);
  table.y0.resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> row{table.covariates.values.data() + i * spec.width,
                          spec.width};
    fill_row(row, rng);
    double eps1 = rng.next_normal();
    double eps0 = rng.next_normal();
    table.y1[i] = acic28_mean_outcome(row, 1) + spec.noise_sd * eps1;
    table.y0[i] = acic28_mean_outcome(row, 0) + spec.noise_sd * eps0;
  }
  return table;
}

PopulationMoments population_moments(const DgpSpec& spec,
                                     const TreatmentRule& rule, std::size_t n,
                                     std::uint64_t seed) {
  if (spec.width <= kX54)
    throw Error(Errc::kConfig, "covariate width must exceed 54");
  PopulationMoments out;
  out.n = n;
  // Accumulate sums and squared sums; values are O(10), n <= 1e7, so double
  // accumulators with compensation are exact enough for MC-error reporting.
  double s_y1 = 0, s_y1_sq = 0, s_y0 = 0, s_y0_sq = 0, s_d = 0, s_d_sq = 0;
  double s_f = 0, s_lam = 0, s_lam_sq = 0;
  std::vector<double> row(spec.width, 0.0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    fill_row(row, rng);
    double eps1 = rng.next_normal();
    double eps0 = rng.next_normal();
    double y1 = acic28_mean_outcome(row, 1) + spec.noise_sd * eps1;
    double y0 = acic28_mean_outcome(row, 0) + spec.noise_sd * eps0;
    double f = static_cast<double>(rule.assign(row));
    double lam = f * y1 + (1.0 - f) * y0;
    s_y1 += y1;
    s_y1_sq += y1 * y1;
    s_y0 += y0;
    s_y0_sq += y0 * y0;
    s_d += y1 - y0;
    s_d_sq += (y1 - y0) * (y1 - y0);
    s_f += f;
    s_lam += lam;
    s_lam_sq += lam * lam;
  }
  double dn = static_cast<double>(n);
  auto finish = [dn](double sum, double sum_sq, double& mean, double& se) {
    mean = sum / dn;
    double var = sum_sq / dn - mean * mean;
    se = std::sqrt(std::max(var, 0.0) / dn);
  };
  finish(s_y1, s_y1_sq, out.mean_y1, out.se_mean_y1);
  finish(s_y0, s_y0_sq, out.mean_y0, out.se_mean_y0);
  finish(s_d, s_d_sq, out.ate, out.se_ate);
  finish(s_f, s_f, out.p_f, out.se_p_f);  // f^2 = f for binary decisions
  finish(s_lam, s_lam_sq, out.lambda_f, out.se_lambda_f);
  return out;
}

}  // namespace itreval
