#include "itreval/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <thread>
#include <utility>

#include "itreval/estimators.hpp"
#include "itreval/ex_ante.hpp"
#include "itreval/shift.hpp"

namespace itreval {
namespace {

struct Accum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

// splitmix64, used to give each parallel_reps phase its own seed so replication
// streams never collide across phases.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + salt * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<std::size_t> draw_rows(std::size_t population, std::size_t n,
                                   Rng& rng) {
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = static_cast<std::size_t>(rng.next_below(population));
  return rows;
}

RuleDecisions subset_decisions(const std::vector<std::uint8_t>& pop_assign,
                               std::span<const std::size_t> rows) {
  RuleDecisions d;
  d.assign.resize(rows.size());
  std::size_t treated = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.assign[i] = pop_assign[rows[i]];
    treated += d.assign[i];
  }
  d.p_hat = rows.empty() ? 0.0
                         : static_cast<double>(treated) /
                               static_cast<double>(rows.size());
  return d;
}

// The decision-based estimators never read covariates, so the replication
// loops build datasets with a zero-width covariate block (row count must
// still match for the length validation).
void realize_sample(const PotentialOutcomeTable& table,
                    std::span<const std::size_t> rows,
                    std::vector<std::uint8_t> treatment,
                    ExperimentDataset& out) {
  out.covariates = Matrix::zeros(rows.size(), 0);
  out.treatment = std::move(treatment);
  out.outcome.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.outcome[i] =
        out.treatment[i] ? table.y1[rows[i]] : table.y0[rows[i]];
}

ExAnteDataset realize_two_stage(const PotentialOutcomeTable& table,
                                std::span<const std::size_t> rows,
                                const RuleDecisions& decisions,
                                const ExAnteDesign& design, Rng& rng) {
  ExAnteDataset d;
  d.covariates = Matrix::zeros(design.n, 0);
  d.design = design;
  d.itr_arm = draw_complete_randomization(design.n, design.n_f, rng);
  std::vector<std::uint8_t> random_t =
      draw_complete_randomization(design.n_r, design.n_r1, rng);
  d.treatment.resize(design.n);
  d.outcome.resize(design.n);
  std::size_t r = 0;
  for (std::size_t i = 0; i < design.n; ++i) {
    d.treatment[i] = d.itr_arm[i] ? decisions.assign[i] : random_t[r++];
    d.outcome[i] = d.treatment[i] ? table.y1[rows[i]] : table.y0[rows[i]];
  }
  return d;
}

std::vector<std::size_t> identity_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

void require_counts(bool ok, const char* what) {
  if (!ok) throw Error(Errc::kBadCounts, what);
}

}  // namespace

McSummary summarize_reps(std::span<const double> values) {
  McSummary s;
  s.replications = values.size();
  if (values.empty()) return s;
  s.mean = mean_of(values);
  if (values.size() < 2) return s;
  Accum m2;
  Accum m4;
  for (double v : values) {
    double d = v - s.mean;
    double d2 = d * d;
    m2.add(d2);
    m4.add(d2 * d2);
  }
  double r = static_cast<double>(values.size());
  s.variance = m2.value() / (r - 1.0);
  s.sd = std::sqrt(std::max(0.0, s.variance));
  s.se_mean = s.sd / std::sqrt(r);
  // Kurtosis-aware error of the sample variance:
  // Var(s^2) = (mu4 - sigma^4 (r-3)/(r-1)) / r.
  double mu4 = m4.value() / r;
  double var_of_var =
      (mu4 - (r - 3.0) / (r - 1.0) * s.variance * s.variance) / r;
  s.se_variance = std::sqrt(std::max(0.0, var_of_var));
  s.se_sd = s.sd > 0.0 ? s.se_variance / (2.0 * s.sd) : 0.0;
  return s;
}

void parallel_reps(std::size_t reps, std::size_t threads, std::uint64_t seed,
                   const std::function<void(std::size_t, Rng&)>& body) {
  if (reps == 0) return;
  if (threads == 0) {
    threads = std::thread::hardware_concurrency();
    if (threads == 0) threads = 1;
  }
  threads = std::min(threads, reps);
  // Streams below 2^32 are reserved for generators internal to the library.
  constexpr std::uint64_t kRepStreamBase = std::uint64_t{1} << 32;
  if (threads <= 1) {
    for (std::size_t rep = 0; rep < reps; ++rep) {
      Rng rng(seed, kRepStreamBase + rep);
      body(rep, rng);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      std::size_t rep = next.fetch_add(1, std::memory_order_relaxed);
      if (rep >= reps) return;
      try {
        Rng rng(seed, kRepStreamBase + rep);
        body(rep, rng);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

ShiftCurveResult run_shift_curve(const ShiftCurveConfig& config) {
  require_counts(config.population_size >= 2, "population_size must be >= 2");
  require_counts(config.n >= 2 && config.n1 >= 1 && config.n1 < config.n,
                 "need 1 <= n1 < n with n >= 2");
  std::size_t n = config.n;
  std::size_t n1 = config.n1;
  std::size_t n0 = n - n1;

  PotentialOutcomeTable raw =
      generate_population(config.dgp, config.population_size, config.seed);
  RuleDecisions pop_dec = apply_rule(raw.covariates, config.rule);
  RuleCellMeans cells = rule_cell_means(raw, pop_dec);

  ShiftCurveResult result;
  // Shift the whole population so the variance-minimizing shift is 0; the
  // penalty curve is then symmetric about the origin and its minimum sits at
  // delta = 0 by construction.
  result.centering_shift = optimal_shift(cells.m11, cells.m00, n1, n0);
  PotentialOutcomeTable table = shifted(raw, result.centering_shift);
  result.kappa11 = cells.m11 + result.centering_shift;
  result.kappa00 = cells.m00 + result.centering_shift;
  result.delta_star = optimal_shift(result.kappa11, result.kappa00, n1, n0);
  result.p_f = pop_dec.p_hat;
  result.replications = config.replications;

  std::vector<double> deltas = config.deltas;
  if (deltas.empty()) {
    for (int i = -5; i <= 5; ++i) deltas.push_back(0.6 * i);
  }
  std::size_t zero_idx = 0;
  for (std::size_t i = 1; i < deltas.size(); ++i)
    if (std::abs(deltas[i]) < std::abs(deltas[zero_idx])) zero_idx = i;

  std::size_t reps = config.replications;
  result.rep_values.assign(deltas.size(), std::vector<double>(reps, 0.0));

  parallel_reps(reps, config.threads, mix_seed(config.seed, 1),
                [&](std::size_t rep, Rng& rng) {
                  std::vector<std::size_t> rows =
                      draw_rows(table.size(), n, rng);
                  RuleDecisions dec = subset_decisions(pop_dec.assign, rows);
                  ExperimentDataset data;
                  realize_sample(table, rows,
                                 draw_complete_randomization(n, n1, rng), data);
                  std::vector<double> base = data.outcome;
                  // Common draw across the grid: only the outcome shift
                  // changes between points.
                  for (std::size_t di = 0; di < deltas.size(); ++di) {
                    for (std::size_t i = 0; i < base.size(); ++i)
                      data.outcome[i] = base[i] + deltas[di];
                    result.rep_values[di][rep] =
                        estimate_pav(data, dec).value;
                  }
                });

  std::vector<McSummary> summaries(deltas.size());
  for (std::size_t di = 0; di < deltas.size(); ++di)
    summaries[di] = summarize_reps(result.rep_values[di]);
  double base_variance = reps >= 2 ? summaries[zero_idx].variance : 0.0;
  for (std::size_t di = 0; di < deltas.size(); ++di) {
    ShiftCurvePoint p;
    p.delta = deltas[di];
    p.se_pav = summaries[di].sd;
    p.mc_err = summaries[di].se_sd;
    p.variance = summaries[di].variance;
    p.se_variance = summaries[di].se_variance;
    p.penalty_empirical = summaries[di].variance - base_variance;
    p.penalty_formula = variance_penalty_pav(
        deltas[di] - deltas[zero_idx], result.kappa11 + deltas[zero_idx],
        result.kappa00 + deltas[zero_idx], result.p_f, n1, n0);
    result.points.push_back(p);
  }
  return result;
}

ExAnteScenarioResult run_ex_ante_vs_ex_post(const ExAnteScenarioConfig& config) {
  require_counts(config.population_size >= 2, "population_size must be >= 2");
  for (std::size_t n : config.n_grid)
    require_counts(n >= 8 && n % 4 == 0,
                   "size grid entries must be >= 8 and divisible by 4");

  PotentialOutcomeTable table =
      generate_population(config.dgp, config.population_size, config.seed);
  RuleDecisions pop_dec = apply_rule(table.covariates, config.rule);

  ExAnteScenarioResult result;
  result.replications = config.replications;
  std::size_t reps = config.replications;
  result.rep_ex_ante.assign(config.n_grid.size(),
                            std::vector<double>(reps, 0.0));
  result.rep_ex_post.assign(config.n_grid.size(),
                            std::vector<double>(reps, 0.0));

  for (std::size_t ni = 0; ni < config.n_grid.size(); ++ni) {
    std::size_t n = config.n_grid[ni];
    ExAnteDesign design{n, n / 2, n / 2, n / 4, n / 4};
    std::vector<double>& ante = result.rep_ex_ante[ni];
    std::vector<double>& post = result.rep_ex_post[ni];

    parallel_reps(reps, config.threads, mix_seed(config.seed, 100 + ni),
                  [&](std::size_t rep, Rng& rng) {
                    // One sample, two independent experimental designs on it.
                    std::vector<std::size_t> rows =
                        draw_rows(table.size(), n, rng);
                    RuleDecisions dec =
                        subset_decisions(pop_dec.assign, rows);
                    ExperimentDataset data;
                    realize_sample(table, rows,
                                   draw_complete_randomization(n, n / 2, rng),
                                   data);
                    post[rep] = estimate_pape(data, dec).value;
                    ExAnteDataset two_stage =
                        realize_two_stage(table, rows, dec, design, rng);
                    ante[rep] = estimate_pape_ex_ante(two_stage, dec).value;
                  });

    ExAntePoint point;
    point.n = n;
    McSummary sa = summarize_reps(ante);
    McSummary sp = summarize_reps(post);
    point.se_ex_ante = sa.sd;
    point.mc_err_ex_ante = sa.se_sd;
    point.se_ex_post = sp.sd;
    point.mc_err_ex_post = sp.se_sd;
    point.var_ex_ante = sa.variance;
    point.var_ex_post = sp.variance;
    point.closed_form_var_diff =
        variance_difference_ex_ante_vs_ex_post(table, pop_dec, n);
    result.points.push_back(point);
  }
  return result;
}

VarianceFidelityResult run_variance_fidelity(
    const VarianceFidelityConfig& config) {
  std::size_t n = config.n;
  require_counts(n >= 4 && config.n1 >= 1 && config.n1 < n,
                 "need 1 <= n1 < n with n >= 4");
  require_counts(config.n_f >= 1 && config.n_f < n, "need 1 <= n_f < n");
  std::size_t n_r = n - config.n_f;
  require_counts(config.n_r1 >= 1 && config.n_r1 < n_r,
                 "need 1 <= n_r1 < n - n_f");

  PotentialOutcomeTable table =
      generate_population(config.dgp, n, config.seed);
  RuleDecisions dec = apply_rule(table.covariates, config.rule);
  ExAnteDesign design{n, config.n_f, n_r, config.n_r1, n_r - config.n_r1};

  struct Entry {
    EstimatorTag tag;
    AssignmentMoments oracle;
  };
  std::vector<Entry> entries;
  entries.push_back(
      {EstimatorTag::kAte,
       conditional_moments(table, EstimatorTag::kAte, dec, nullptr, config.n1)});
  entries.push_back(
      {EstimatorTag::kPav,
       conditional_moments(table, EstimatorTag::kPav, dec, nullptr, config.n1)});
  entries.push_back(
      {EstimatorTag::kPape,
       conditional_moments(table, EstimatorTag::kPape, dec, nullptr,
                           config.n1)});
  entries.push_back({EstimatorTag::kPapeExAnte,
                     conditional_moments_ex_ante(
                         table, EstimatorTag::kPapeExAnte, dec, design)});
  entries.push_back({EstimatorTag::kIntermediateExAnte,
                     conditional_moments_ex_ante(
                         table, EstimatorTag::kIntermediateExAnte, dec, design)});

  VarianceFidelityResult result;
  result.replications = config.replications;
  std::size_t reps = config.replications;
  result.rep_values.assign(entries.size(), std::vector<double>(reps, 0.0));

  std::vector<std::size_t> rows = identity_rows(n);
  parallel_reps(
      reps, config.threads, mix_seed(config.seed, 2),
      [&](std::size_t rep, Rng& rng) {
        ExperimentDataset data;
        realize_sample(table, rows,
                       draw_complete_randomization(n, config.n1, rng), data);
        result.rep_values[0][rep] = estimate_ate(data).value;
        result.rep_values[1][rep] = estimate_pav(data, dec).value;
        result.rep_values[2][rep] = estimate_pape(data, dec).value;
        ExAnteDataset two_stage =
            realize_two_stage(table, rows, dec, design, rng);
        result.rep_values[3][rep] = estimate_pape_ex_ante(two_stage, dec).value;
        result.rep_values[4][rep] = intermediate_value_ex_ante(two_stage);
      });

  for (std::size_t e = 0; e < entries.size(); ++e) {
    McSummary s = summarize_reps(result.rep_values[e]);
    VarianceFidelityRow row;
    row.estimator = estimator_tag_name(entries[e].tag);
    row.empirical_mean = s.mean;
    row.oracle_mean = entries[e].oracle.mean;
    row.empirical_variance = s.variance;
    row.mc_err = s.se_variance;
    row.oracle_variance = entries[e].oracle.variance;
    row.relative_error =
        entries[e].oracle.variance != 0.0
            ? (s.variance - entries[e].oracle.variance) /
                  entries[e].oracle.variance
            : s.variance;
    result.rows.push_back(row);
  }
  return result;
}

CrossFitScenarioResult run_crossfit_validation(
    const CrossFitScenarioConfig& config) {
  std::size_t n = config.n;
  std::size_t n1 = config.n1;
  std::size_t K = config.K;
  require_counts(config.population_size >= 2, "population_size must be >= 2");
  require_counts(K >= 2, "need K >= 2");
  require_counts(n1 >= 1 && n1 < n, "need 1 <= n1 < n");
  require_counts(n % K == 0 && n1 % K == 0,
                 "K must divide both n and the treated count");

  PotentialOutcomeTable table =
      generate_population(config.dgp, config.population_size, config.seed);

  CrossFitScenarioResult result;
  result.replications = config.replications;
  result.K = K;
  std::size_t reps = config.replications;
  result.rep_pooled.assign(reps, 0.0);
  result.rep_fold_estimates.assign(reps * K, 0.0);
  result.rep_s_f_sq.assign(reps, 0.0);
  std::vector<double> plugin_single(reps, 0.0);
  std::vector<double> plugin_pooled(reps, 0.0);
  std::atomic<std::size_t> plugin_misses{0};

  std::size_t threads = config.learner.parallel_safe ? config.threads : 1;
  parallel_reps(
      reps, threads, mix_seed(config.seed, 3),
      [&](std::size_t rep, Rng& rng) {
        std::vector<std::size_t> rows = draw_rows(table.size(), n, rng);
        ExperimentDataset data;
        realize_sample(table, rows, draw_complete_randomization(n, n1, rng),
                       data);
        // The learner does read covariates; replace the zero-width block
        // with the sampled rows.
        data.covariates.rows = n;
        data.covariates.cols = table.covariates.cols;
        data.covariates.values.resize(n * table.covariates.cols);
        for (std::size_t i = 0; i < n; ++i) {
          std::span<const double> src = table.covariates.row(rows[i]);
          std::copy(src.begin(), src.end(),
                    data.covariates.values.begin() +
                        static_cast<std::ptrdiff_t>(i * table.covariates.cols));
        }
        FoldPlan plan = make_folds(data, K, rng.next_u64());
        CrossFitResult fit = cross_fit_pav(data, config.learner, plan);
        result.rep_pooled[rep] = fit.pooled.value;
        std::vector<double> fold_values(K, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
          fold_values[k] = fit.per_fold[k].value;
          result.rep_fold_estimates[rep * K + k] = fold_values[k];
        }
        result.rep_s_f_sq[rep] = sample_variance(fold_values);
        Accum single;
        bool all_plugins = true;
        for (const FoldEstimate& fe : fit.per_fold) {
          if (fe.variance_plugin)
            single.add(*fe.variance_plugin);
          else
            all_plugins = false;
        }
        if (all_plugins && fit.pooled.std_error) {
          plugin_single[rep] = single.value() / static_cast<double>(K);
          plugin_pooled[rep] =
              (*fit.pooled.std_error) * (*fit.pooled.std_error);
        } else {
          plugin_misses.fetch_add(1, std::memory_order_relaxed);
        }
      });

  McSummary pooled = summarize_reps(result.rep_pooled);
  result.mean_pooled = pooled.mean;
  result.se_mean_pooled = pooled.se_mean;

  // Fold-indexed columns of the replication-by-fold matrix.
  std::vector<double> col_a(reps, 0.0);
  std::vector<double> col_b(reps, 0.0);
  Accum var_single;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t rep = 0; rep < reps; ++rep)
      col_a[rep] = result.rep_fold_estimates[rep * K + k];
    var_single.add(reps >= 2 ? sample_variance(col_a) : 0.0);
  }
  result.var_single_fold = var_single.value() / static_cast<double>(K);
  Accum cov_pairs;
  std::size_t pair_count = 0;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t rep = 0; rep < reps; ++rep)
      col_a[rep] = result.rep_fold_estimates[rep * K + k];
    for (std::size_t l = k + 1; l < K; ++l) {
      for (std::size_t rep = 0; rep < reps; ++rep)
        col_b[rep] = result.rep_fold_estimates[rep * K + l];
      cov_pairs.add(reps >= 2 ? sample_covariance(col_a, col_b) : 0.0);
      ++pair_count;
    }
  }
  result.cov_between_folds =
      pair_count > 0 ? cov_pairs.value() / static_cast<double>(pair_count)
                     : 0.0;
  result.e_s_f_sq = reps > 0 ? mean_of(result.rep_s_f_sq) : 0.0;
  result.identity_gap =
      result.cov_between_folds -
      (result.var_single_fold - result.e_s_f_sq);
  std::size_t misses = plugin_misses.load();
  if (reps > misses) {
    // Means over the replications whose plug-ins all existed.
    Accum ms;
    Accum mp;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      ms.add(plugin_single[rep]);
      mp.add(plugin_pooled[rep]);
    }
    result.mean_plugin_single =
        ms.value() / static_cast<double>(reps - misses);
    result.mean_plugin_pooled =
        mp.value() / static_cast<double>(reps - misses);
  }

  std::size_t m = n / K;
  std::size_t m1 = n1 / K;
  result.oracle = crossfit_estimand_oracle(
      table, config.learner, n - m, n1 - m1, m1, m - m1, config.oracle_draws,
      mix_seed(config.seed, 4));
  return result;
}

}  // namespace itreval
