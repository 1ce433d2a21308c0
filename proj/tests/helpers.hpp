#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "itreval/data.hpp"
#include "itreval/rng.hpp"

namespace testutil {

using itreval::ExperimentDataset;
using itreval::Matrix;
using itreval::PotentialOutcomeTable;
using itreval::Rng;
using itreval::RuleDecisions;

inline PotentialOutcomeTable make_table(std::vector<double> y1,
                                        std::vector<double> y0,
                                        std::size_t cols = 0) {
  PotentialOutcomeTable t;
  t.covariates = Matrix::zeros(y1.size(), cols);
  t.y1 = std::move(y1);
  t.y0 = std::move(y0);
  return t;
}

inline ExperimentDataset make_dataset(std::vector<double> outcome,
                                      std::vector<std::uint8_t> treatment,
                                      std::size_t cols = 0) {
  ExperimentDataset d;
  d.covariates = Matrix::zeros(outcome.size(), cols);
  d.outcome = std::move(outcome);
  d.treatment = std::move(treatment);
  return d;
}

inline RuleDecisions decisions_of(std::vector<std::uint8_t> assign) {
  RuleDecisions d;
  double treated = 0.0;
  for (auto v : assign) treated += v;
  d.p_hat = assign.empty() ? 0.0 : treated / static_cast<double>(assign.size());
  d.assign = std::move(assign);
  return d;
}

inline PotentialOutcomeTable random_table(Rng& rng, std::size_t n) {
  std::vector<double> y1(n), y0(n);
  for (std::size_t i = 0; i < n; ++i) {
    y1[i] = 2.0 * rng.next_normal() + 1.0;
    y0[i] = 2.0 * rng.next_normal();
  }
  return make_table(std::move(y1), std::move(y0));
}

// Random decisions guaranteed to treat at least one unit and spare at least
// one, so conditional cell means exist.
inline RuleDecisions random_split_decisions(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> a(n);
  for (;;) {
    std::size_t ones = 0;
    for (auto& v : a) {
      v = static_cast<std::uint8_t>(rng.next_below(2));
      ones += v;
    }
    if (ones > 0 && ones < n) break;
  }
  return decisions_of(a);
}

}  // namespace testutil
