#include "itreval/crossfit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace itreval {

TreatmentRule rule_from_score(const ScoringRule& score, std::string label) {
  return {std::move(label),
          [score](std::span<const double> x) { return score(x) > 0.0 ? 1 : 0; }};
}

FoldPlan make_folds(const ExperimentDataset& data, std::size_t K,
                    std::uint64_t seed) {
  std::size_t n = data.n();
  std::size_t n1 = data.n_treated();
  if (K < 2)
    throw Error(Errc::kBadCounts, "cross-fitting needs K >= 2");
  if (n == 0 || n % K != 0 || n1 % K != 0)
    throw Error(Errc::kIndivisible,
                "K = " + std::to_string(K) + " must divide both n = " +
                    std::to_string(n) + " and n1 = " + std::to_string(n1));

  FoldPlan plan;
  plan.K = K;
  plan.m = n / K;
  plan.m1 = n1 / K;
  plan.m0 = plan.m - plan.m1;
  plan.seed = seed;
  plan.assignment.resize(n);

  // Uniform stratified partition: shuffle each arm's indices, deal blocks.
  std::vector<std::size_t> treated, control;
  for (std::size_t i = 0; i < n; ++i)
    (data.treatment[i] ? treated : control).push_back(i);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(treated));
  rng.shuffle(std::span<std::size_t>(control));
  for (std::size_t j = 0; j < treated.size(); ++j)
    plan.assignment[treated[j]] = static_cast<std::uint32_t>(j / plan.m1);
  for (std::size_t j = 0; j < control.size(); ++j)
    plan.assignment[control[j]] = static_cast<std::uint32_t>(j / plan.m0);
  return plan;
}

NadeauBengio nadeau_bengio_decomposition(std::span<const double> fold_estimates,
                                         std::span<const double> plugins) {
  if (fold_estimates.size() < 2 || fold_estimates.size() != plugins.size())
    throw Error(Errc::kDomain,
                "decomposition needs K >= 2 fold estimates with matching plugins");
  NadeauBengio out;
  out.v_single = mean_of(plugins);
  out.s_f_sq = sample_variance(fold_estimates);
  double k = static_cast<double>(fold_estimates.size());
  out.v_pooled = out.v_single - (k - 1.0) / k * out.s_f_sq;
  return out;
}

namespace {

ExperimentDataset subset_by_fold(const ExperimentDataset& data,
                                 const FoldPlan& plan, std::size_t fold,
                                 bool complement) {
  ExperimentDataset out;
  out.covariates.cols = data.covariates.cols;
  out.covariate_names = data.covariate_names;
  for (std::size_t i = 0; i < data.n(); ++i) {
    bool in_fold = plan.assignment[i] == fold;
    if (in_fold == complement) continue;
    auto row = data.covariates.row(i);
    out.covariates.values.insert(out.covariates.values.end(), row.begin(),
                                 row.end());
    ++out.covariates.rows;
    out.treatment.push_back(data.treatment[i]);
    out.outcome.push_back(data.outcome[i]);
  }
  return out;
}

std::uint64_t fold_seed(std::uint64_t base, std::size_t fold) {
  return base * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(fold) + 1;
}

enum class FoldEstimand { kPav, kPape };

CrossFitResult cross_fit_impl(const ExperimentDataset& data,
                              const ScoringAlgorithm& algo, const FoldPlan& plan,
                              FoldEstimand kind) {
  if (plan.assignment.size() != data.n() || plan.K < 2 ||
      plan.m * plan.K != data.n())
    throw Error(Errc::kIndivisible, "fold plan does not match the dataset");

  CrossFitResult result;
  std::vector<double> fold_values, fold_plugins, fold_p;
  bool all_plugins = true;
  bool any_clipped = false;
  std::vector<std::string> pooled_warnings;

  for (std::size_t k = 0; k < plan.K; ++k) {
    ExperimentDataset training = subset_by_fold(data, plan, k, true);
    ExperimentDataset eval = subset_by_fold(data, plan, k, false);

    ScoringRule score;
    try {
      score = algo.train(training, fold_seed(plan.seed, k));
    } catch (const std::exception& e) {
      throw Error(Errc::kTrainFailure, "training failed on fold " +
                                           std::to_string(k) + ": " + e.what());
    }
    TreatmentRule rule =
        rule_from_score(score, algo.label + "#" + std::to_string(k));
    RuleDecisions decisions = apply_rule(eval.covariates, rule);

    FoldEstimate fe;
    fe.fold = k;
    fe.rule_label = rule.label;
    fe.p_hat = decisions.p_hat;

    Estimate est = (kind == FoldEstimand::kPav)
                       ? estimate_pav(eval, decisions)
                       : estimate_pape(eval, decisions);
    fe.value = est.value;
    fe.warnings = est.warnings;
    if (est.has_warning(warn::kClipped)) any_clipped = true;
    if (kind == FoldEstimand::kPape && est.has_warning(warn::kDegenerateRule)) {
      // A degenerate fold rule makes that fold's estimator identically zero,
      // so its variance contribution is exactly zero.
      fe.variance_plugin = 0.0;
    } else if (est.std_error) {
      fe.variance_plugin = est.variance_components.at("total");
    }
    for (const std::string& w : fe.warnings)
      if (std::find(pooled_warnings.begin(), pooled_warnings.end(), w) ==
          pooled_warnings.end())
        pooled_warnings.push_back(w);

    fold_values.push_back(fe.value);
    fold_p.push_back(fe.p_hat);
    if (fe.variance_plugin)
      fold_plugins.push_back(*fe.variance_plugin);
    else
      all_plugins = false;
    result.per_fold.push_back(std::move(fe));
  }

  Estimate& pooled = result.pooled;
  pooled.estimand = (kind == FoldEstimand::kPav) ? Estimand::kPavCrossFit
                                                 : Estimand::kPapeCrossFit;
  pooled.n = data.n();
  pooled.n1 = data.n_treated();
  pooled.n0 = pooled.n - pooled.n1;
  pooled.value = mean_of(fold_values);
  pooled.treated_proportion = mean_of(fold_p);
  pooled.warnings = std::move(pooled_warnings);
  if (kind == FoldEstimand::kPape) pooled.warnings.push_back(warn::kHeuristic);

  if (all_plugins) {
    result.decomposition = nadeau_bengio_decomposition(fold_values, fold_plugins);
    double total = result.decomposition.v_pooled;
    bool clipped = total < 0.0;
    if (clipped) total = 0.0;
    pooled.variance_components = {
        {"within_fold_mean", result.decomposition.v_single},
        {"across_fold_s_sq", result.decomposition.s_f_sq},
        {"covariance_adjustment", 0.0},
        {"total", total},
        {"clipped", clipped || any_clipped ? 1.0 : 0.0}};
    if (clipped) pooled.warnings.push_back(warn::kClipped);
    pooled.std_error = std::sqrt(total);
  } else {
    if (!pooled.has_warning(warn::kArmTooSmall))
      pooled.warnings.push_back(warn::kArmTooSmall);
  }
  return result;
}

}  // namespace

CrossFitResult cross_fit_pav(const ExperimentDataset& data,
                             const ScoringAlgorithm& algo, const FoldPlan& plan) {
  return cross_fit_impl(data, algo, plan, FoldEstimand::kPav);
}

CrossFitResult cross_fit_pape(const ExperimentDataset& data,
                              const ScoringAlgorithm& algo,
                              const FoldPlan& plan) {
  return cross_fit_impl(data, algo, plan, FoldEstimand::kPape);
}

namespace {

struct StratumModel {
  std::vector<double> edges;
  std::vector<double> value_by_bin;

  std::size_t bin(double x) const {
    std::size_t b = 0;
    for (double e : edges)
      if (x > e) ++b;
    return b;
  }
};

std::vector<double> quantile_edges(std::vector<double> values,
                                   std::size_t bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> edges;
  for (std::size_t j = 1; j < bins; ++j)
    edges.push_back(values[j * values.size() / bins]);
  return edges;
}

void require_column(const ExperimentDataset& data, std::size_t column) {
  if (column >= data.covariates.cols)
    throw Error(Errc::kMissingCovariate,
                "learner column " + std::to_string(column) +
                    " out of range (width " +
                    std::to_string(data.covariates.cols) + ")");
  if (data.n() == 0) throw Error(Errc::kEmptyArm, "empty training data");
}

}  // namespace

ScoringAlgorithm stratum_cate_algorithm(std::size_t column, std::size_t bins) {
  ScoringAlgorithm algo;
  algo.label = "stratum_cate_x" + std::to_string(column) + "_b" +
               std::to_string(bins);
  algo.train = [column, bins](const ExperimentDataset& data, std::uint64_t) {
    require_column(data, column);
    std::size_t b = std::max<std::size_t>(bins, 1);
    std::vector<double> col(data.n());
    for (std::size_t i = 0; i < data.n(); ++i)
      col[i] = data.covariates.at(i, column);

    StratumModel model;
    model.edges = quantile_edges(col, b);
    std::vector<double> t_sum(b, 0.0), c_sum(b, 0.0);
    std::vector<std::size_t> t_cnt(b, 0), c_cnt(b, 0);
    for (std::size_t i = 0; i < data.n(); ++i) {
      std::size_t s = model.bin(col[i]);
      if (data.treatment[i]) {
        t_sum[s] += data.outcome[i];
        ++t_cnt[s];
      } else {
        c_sum[s] += data.outcome[i];
        ++c_cnt[s];
      }
    }
    model.value_by_bin.resize(b);
    for (std::size_t s = 0; s < b; ++s) {
      // A stratum missing either arm carries no effect evidence; score 0
      // (the induced rule then withholds treatment there).
      model.value_by_bin[s] =
          (t_cnt[s] && c_cnt[s])
              ? t_sum[s] / static_cast<double>(t_cnt[s]) -
                    c_sum[s] / static_cast<double>(c_cnt[s])
              : 0.0;
    }
    return ScoringRule{[model, column](std::span<const double> x) {
      if (column >= x.size())
        throw Error(Errc::kMissingCovariate,
                    "score column " + std::to_string(column) + " out of range");
      return model.value_by_bin[model.bin(x[column])];
    }};
  };
  return algo;
}

ScoringAlgorithm baseline_risk_algorithm(std::size_t column, std::size_t bins,
                                         double threshold) {
  ScoringAlgorithm algo;
  algo.label = "baseline_risk_x" + std::to_string(column) + "_b" +
               std::to_string(bins);
  algo.train = [column, bins, threshold](const ExperimentDataset& data,
                                         std::uint64_t) {
    require_column(data, column);
    std::size_t b = std::max<std::size_t>(bins, 1);
    std::vector<double> col(data.n());
    for (std::size_t i = 0; i < data.n(); ++i)
      col[i] = data.covariates.at(i, column);

    StratumModel model;
    model.edges = quantile_edges(col, b);
    std::vector<double> c_sum(b, 0.0);
    std::vector<std::size_t> c_cnt(b, 0);
    double all_sum = 0.0;
    std::size_t all_cnt = 0;
    for (std::size_t i = 0; i < data.n(); ++i) {
      if (data.treatment[i]) continue;
      std::size_t s = model.bin(col[i]);
      c_sum[s] += data.outcome[i];
      ++c_cnt[s];
      all_sum += data.outcome[i];
      ++all_cnt;
    }
    if (all_cnt == 0)
      throw Error(Errc::kEmptyArm, "baseline-risk learner needs control units");
    double fallback = all_sum / static_cast<double>(all_cnt);
    model.value_by_bin.resize(b);
    for (std::size_t s = 0; s < b; ++s)
      model.value_by_bin[s] =
          c_cnt[s] ? c_sum[s] / static_cast<double>(c_cnt[s]) : fallback;
    return ScoringRule{[model, column, threshold](std::span<const double> x) {
      if (column >= x.size())
        throw Error(Errc::kMissingCovariate,
                    "score column " + std::to_string(column) + " out of range");
      return model.value_by_bin[model.bin(x[column])] - threshold;
    }};
  };
  return algo;
}

ScoringAlgorithm constant_algorithm(int value) {
  ScoringAlgorithm algo;
  algo.label = value ? "const_1" : "const_0";
  algo.train = [value](const ExperimentDataset&, std::uint64_t) {
    return ScoringRule{
        [value](std::span<const double>) { return value ? 1.0 : -1.0; }};
  };
  return algo;
}

ScoringAlgorithm fixed_rule_algorithm(TreatmentRule rule) {
  ScoringAlgorithm algo;
  algo.label = "fixed_" + rule.label;
  algo.train = [rule](const ExperimentDataset&, std::uint64_t) {
    return ScoringRule{[rule](std::span<const double> x) {
      return rule.assign(x) ? 1.0 : -1.0;
    }};
  };
  return algo;
}

}  // namespace itreval
