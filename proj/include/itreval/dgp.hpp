#pragma once

#include <cstdint>
#include <span>

#include "itreval/data.hpp"

namespace itreval {

// Synthetic data-generating process built around a published benchmark
// outcome surface (ACIC 2016 competition, process 28). The surface reads
// eight covariates by fixed position; the generator fills those positions
// with documented synthetic marginals (standard normal for the continuous
// ones, +/-1 coin flips for the two used only through their sign) and adds
// independent mean-zero Gaussian noise per potential outcome.
struct DgpSpec {
  double noise_sd = 1.0;     // additive noise per arm
  std::size_t width = 54;    // covariate row width; must cover index 54
};

// Used 1-based covariate positions: 4, 17, 27, 29, 30, 37, 42, 54.
inline constexpr std::size_t kOutcomeModelColumns[8] = {3, 16, 26, 28, 29,
                                                        36, 41, 53};

// Mean outcome surface E(Y(t) | x). Throws MISSING_COVARIATE when the row
// is too short to provide the positions above.
double acic28_mean_outcome(std::span<const double> x, int t);

// Conditional effect surface E(Y(1)|x) - E(Y(0)|x).
double acic28_cate(std::span<const double> x);

// Treats exactly where the true conditional effect is positive.
TreatmentRule cate_oracle_rule();

PotentialOutcomeTable generate_population(const DgpSpec& spec, std::size_t n,
                                          std::uint64_t seed);

// Streaming moment pass over freshly generated rows; nothing is stored, so
// very large draws (default elsewhere: 1e6) stay cheap. Standard errors are
// the usual i.i.d. MC errors of each mean.
struct PopulationMoments {
  std::size_t n = 0;
  double mean_y1 = 0.0, se_mean_y1 = 0.0;
  double mean_y0 = 0.0, se_mean_y0 = 0.0;
  double ate = 0.0, se_ate = 0.0;
  double p_f = 0.0, se_p_f = 0.0;
  double lambda_f = 0.0, se_lambda_f = 0.0;
};

PopulationMoments population_moments(const DgpSpec& spec,
                                     const TreatmentRule& rule, std::size_t n,
                                     std::uint64_t seed);

}  // namespace itreval
