#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "itreval/csv.hpp"
#include "itreval/dgp.hpp"
#include "itreval/error.hpp"
#include "itreval/estimators.hpp"
#include "itreval/mc.hpp"
#include "itreval/report.hpp"
#include "itreval/shift.hpp"

namespace {

using namespace itreval;

std::string slurp(const std::string& path, Errc errc) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string now_rfc3339() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error(Errc::kConfig, "cannot open '" + out_path + "' for writing");
  out << text;
  if (!out) throw Error(Errc::kConfig, "write failed for '" + out_path + "'");
}

std::vector<std::string> split_spec(const std::string& spec) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t colon = spec.find(':', start);
    if (colon == std::string::npos) {
      parts.push_back(spec.substr(start));
      return parts;
    }
    parts.push_back(spec.substr(start, colon - start));
    start = colon + 1;
  }
}

std::size_t parse_count(const std::string& token, const std::string& what) {
  if (token.empty() ||
      token.find_first_not_of("0123456789") != std::string::npos)
    throw Error(Errc::kConfig, what + " must be a nonnegative integer, got '" +
                                   token + "'");
  return static_cast<std::size_t>(std::stoull(token));
}

double parse_real(const std::string& token, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::kConfig, what + " must be a number, got '" + token + "'");
  }
}

std::size_t resolve_column(const std::string& token,
                           const std::vector<std::string>& names,
                           std::size_t width) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == token) return i;
  if (!token.empty() &&
      token.find_first_not_of("0123456789") == std::string::npos) {
    std::size_t idx = static_cast<std::size_t>(std::stoull(token));
    if (idx < width) return idx;
    throw Error(Errc::kMissingCovariate,
                "column index " + token + " out of range (covariate width " +
                    std::to_string(width) + ")");
  }
  throw Error(Errc::kMissingCovariate, "unknown column '" + token + "'");
}

TreatmentRule load_linear_rule(const std::string& path) {
  std::string text = slurp(path, Errc::kConfig);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::kConfig, path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("weights") || !j["weights"].is_array())
    throw Error(Errc::kConfig,
                path + ": expected {\"weights\": [...], \"intercept\": x}");
  std::vector<double> weights;
  for (const auto& w : j["weights"]) {
    if (!w.is_number())
      throw Error(Errc::kConfig, path + ": weights must be numbers");
    weights.push_back(w.get<double>());
  }
  double intercept = 0.0;
  if (j.contains("intercept")) {
    if (!j["intercept"].is_number())
      throw Error(Errc::kConfig, path + ": intercept must be a number");
    intercept = j["intercept"].get<double>();
  }
  std::string label = j.value("label", std::string("linear_threshold"));
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "weights" && key != "intercept" && key != "label")
      throw Error(Errc::kConfig, path + ": unknown field '" + key + "'");
  }
  return linear_threshold_rule(std::move(weights), intercept, std::move(label));
}

TreatmentRule parse_rule_spec(const std::string& spec,
                              const std::vector<std::string>& names,
                              std::size_t width) {
  if (spec == "const:1") return constant_rule(1);
  if (spec == "const:0") return constant_rule(0);
  if (spec == "cate_oracle") return cate_oracle_rule();
  if (spec.rfind("linear:", 0) == 0) return load_linear_rule(spec.substr(7));
  if (spec.rfind("col:", 0) == 0) {
    std::string token = spec.substr(4);
    return column_rule(resolve_column(token, names, width), "col_" + token);
  }
  throw Error(Errc::kConfig,
              "unknown rule spec '" + spec +
                  "'; expected const:1, const:0, cate_oracle, linear:<file>, "
                  "or col:<column>");
}

ScoringAlgorithm parse_algo_spec(const std::string& spec,
                                 const std::vector<std::string>& names,
                                 std::size_t width) {
  std::vector<std::string> parts = split_spec(spec);
  if (parts[0] == "const" && parts.size() == 2 &&
      (parts[1] == "0" || parts[1] == "1"))
    return constant_algorithm(parts[1] == "1" ? 1 : 0);
  if (parts[0] == "stratum_cate" && parts.size() == 3) {
    std::size_t col = resolve_column(parts[1], names, width);
    std::size_t bins = parse_count(parts[2], "stratum_cate bins");
    return stratum_cate_algorithm(col, bins);
  }
  if (parts[0] == "baseline_risk" && parts.size() == 4) {
    std::size_t col = resolve_column(parts[1], names, width);
    std::size_t bins = parse_count(parts[2], "baseline_risk bins");
    double threshold = parse_real(parts[3], "baseline_risk threshold");
    return baseline_risk_algorithm(col, bins, threshold);
  }
  throw Error(Errc::kConfig,
              "unknown algorithm spec '" + spec +
                  "'; expected const:0, const:1, stratum_cate:<column>:<bins>, "
                  "or baseline_risk:<column>:<bins>:<threshold>");
}

// Exit code 3 signals that every estimate carrying a standard error had its
// variance clipped at zero.
int degeneracy_exit(const std::vector<std::pair<std::string, Estimate>>& ests) {
  bool any = false;
  for (const auto& [name, est] : ests) {
    (void)name;
    if (!est.std_error) continue;
    any = true;
    if (!est.has_warning(warn::kClipped)) return 0;
  }
  return any ? 3 : 0;
}

int run_evaluate(const std::string& data_path, const std::string& rule_spec,
                 const std::string& rule2_spec,
                 const std::optional<double>& shift_delta, std::uint64_t seed,
                 const std::string& out_path, bool timestamp) {
  std::string data_bytes = slurp(data_path, Errc::kParse);
  ExperimentDataset data = load_experiment_csv(data_path);
  validate_dataset(data);
  TreatmentRule rule =
      parse_rule_spec(rule_spec, data.covariate_names, data.covariates.cols);

  ExperimentDataset eval = shift_delta ? shifted(data, *shift_delta) : data;
  RuleDecisions dec = apply_rule(eval.covariates, rule);

  EvaluationReport report;
  report.meta.command = "evaluate";
  report.meta.seed = seed;
  std::vector<std::string> parts = {
      "evaluate",
      data_bytes,
      rule_spec,
      rule2_spec,
      shift_delta ? format_double(*shift_delta) : "",
      std::to_string(seed)};
  report.meta.config_hash = config_hash(parts);
  if (timestamp) report.meta.timestamp = now_rfc3339();
  report.n = data.n();
  report.n1 = data.n_treated();
  report.n0 = data.n_control();
  report.applied_shift = shift_delta;
  report.notes.push_back("rule: " + rule.label);

  auto add = [&report](const std::string& name, Estimate est) {
    merge_warnings(report.warnings, est.warnings);
    report.estimates.emplace_back(name, std::move(est));
  };
  add("ate", estimate_ate(eval));
  add("pav", estimate_pav(eval, dec));
  Estimate pape = estimate_pape(eval, dec);
  double pape_value = pape.value;
  add("pape", std::move(pape));

  if (!rule2_spec.empty()) {
    TreatmentRule rule2 =
        parse_rule_spec(rule2_spec, data.covariate_names, data.covariates.cols);
    RuleDecisions dec2 = apply_rule(eval.covariates, rule2);
    report.notes.push_back("rule2: " + rule2.label);
    add("pav_rule2", estimate_pav(eval, dec2));
    Estimate pape2 = estimate_pape(eval, dec2);
    double pape2_value = pape2.value;
    add("pape_rule2", std::move(pape2));
    add("pav_difference", estimate_pav_difference(eval, dec, dec2));
    Estimate pape_diff;
    pape_diff.estimand = Estimand::kPape;
    pape_diff.value = pape_value - pape2_value;
    pape_diff.warnings.push_back(warn::kHeuristic);
    pape_diff.n = eval.n();
    pape_diff.n1 = eval.n_treated();
    pape_diff.n0 = eval.n_control();
    pape_diff.treated_proportion = dec.p_hat;
    add("pape_difference", std::move(pape_diff));
    report.notes.push_back(
        "pape_difference is the difference of the two gain estimates; no "
        "plug-in standard error is attached");
  }

  try {
    report.shift = shift_diagnostics(eval, dec);
    merge_warnings(report.warnings, report.shift->warnings);
  } catch (const Error& e) {
    if (e.code() != Errc::kEmptyCell && e.code() != Errc::kEmptyArm) throw;
    report.notes.push_back(std::string("shift diagnostics unavailable: ") +
                           e.what());
  }

  emit(out_path, render_json(report_json(report)));
  return degeneracy_exit(report.estimates);
}

std::string nearest_valid_k(std::size_t n, std::size_t n1, std::size_t k) {
  auto divides_both = [&](std::size_t c) {
    return c >= 2 && c <= n && n % c == 0 && n1 % c == 0;
  };
  auto divides_n = [&](std::size_t c) { return c >= 2 && c <= n && n % c == 0; };
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t d = 1; d <= n; ++d) {
      for (std::size_t cand : {k > d ? k - d : 0, k + d}) {
        if (cand < 2 || cand > n) continue;
        if (pass == 0 ? divides_both(cand) : divides_n(cand))
          return "; nearest valid K is " + std::to_string(cand) +
                 (pass == 0 ? "" : " (divides n only)");
      }
    }
  }
  return "";
}

int run_crossfit(const std::string& data_path, const std::string& algo_spec,
                 std::size_t k, std::uint64_t seed, const std::string& out_path,
                 bool timestamp) {
  std::string data_bytes = slurp(data_path, Errc::kParse);
  ExperimentDataset data = load_experiment_csv(data_path);
  validate_dataset(data);
  ScoringAlgorithm algo =
      parse_algo_spec(algo_spec, data.covariate_names, data.covariates.cols);

  FoldPlan plan;
  try {
    plan = make_folds(data, k, seed);
  } catch (const Error& e) {
    if (e.code() == Errc::kIndivisible)
      throw Error(Errc::kIndivisible,
                  std::string(e.what()) +
                      nearest_valid_k(data.n(), data.n_treated(), k));
    throw;
  }

  CrossFitReport report;
  report.meta.command = "crossfit";
  report.meta.seed = seed;
  std::vector<std::string> parts = {"crossfit", data_bytes, algo_spec,
                                    std::to_string(k), std::to_string(seed)};
  report.meta.config_hash = config_hash(parts);
  if (timestamp) report.meta.timestamp = now_rfc3339();
  report.algorithm = algo.label;
  report.K = k;
  report.pav = cross_fit_pav(data, algo, plan);
  report.pape = cross_fit_pape(data, algo, plan);
  merge_warnings(report.warnings, report.pav.pooled.warnings);
  merge_warnings(report.warnings, report.pape.pooled.warnings);

  emit(out_path, render_json(crossfit_json(report)));
  std::vector<std::pair<std::string, Estimate>> pooled;
  pooled.emplace_back("pav", report.pav.pooled);
  pooled.emplace_back("pape", report.pape.pooled);
  return degeneracy_exit(pooled);
}

// Flat JSON config with defaults for every knob; unknown fields are errors.
class ConfigView {
 public:
  explicit ConfigView(const nlohmann::json& j) : j_(j) {
    if (!j_.is_object())
      throw Error(Errc::kConfig, "config root must be a JSON object");
  }

  std::string get_string(const std::string& key, const std::string& def) {
    const nlohmann::json* v = find(key);
    if (!v) return def;
    if (!v->is_string()) fail(key, "a string");
    return v->get<std::string>();
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
    const nlohmann::json* v = find(key);
    if (!v) return def;
    if (!v->is_number_unsigned()) fail(key, "a nonnegative integer");
    return v->get<std::uint64_t>();
  }
  std::size_t get_size(const std::string& key, std::size_t def) {
    return static_cast<std::size_t>(get_u64(key, def));
  }
  double get_double(const std::string& key, double def) {
    const nlohmann::json* v = find(key);
    if (!v) return def;
    if (!v->is_number()) fail(key, "a number");
    return v->get<double>();
  }
  std::vector<double> get_doubles(const std::string& key,
                                  std::vector<double> def) {
    const nlohmann::json* v = find(key);
    if (!v) return def;
    if (!v->is_array()) fail(key, "an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number())
        fail(key + "[" + std::to_string(i) + "]", "a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }
  std::vector<std::size_t> get_sizes(const std::string& key,
                                     std::vector<std::size_t> def) {
    const nlohmann::json* v = find(key);
    if (!v) return def;
    if (!v->is_array()) fail(key, "an array of nonnegative integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number_unsigned())
        fail(key + "[" + std::to_string(i) + "]", "a nonnegative integer");
      out.push_back((*v)[i].get<std::size_t>());
    }
    return out;
  }
  void finish() {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (!used_.count(key))
        throw Error(Errc::kConfig, "config: unknown field '" + key + "'");
    }
  }

 private:
  const nlohmann::json* find(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) return nullptr;
    return &j_.at(key);
  }
  [[noreturn]] void fail(const std::string& path, const std::string& want) {
    throw Error(Errc::kConfig,
                "config field '" + path + "' must be " + want);
  }

  const nlohmann::json& j_;
  std::set<std::string> used_;
};

nlohmann::json summary_stub(const std::string& scenario, std::uint64_t seed,
                            const std::string& config_text,
                            const nlohmann::json& cfg) {
  nlohmann::json s;
  s["command"] = "simulate";
  s["scenario"] = scenario;
  s["seed"] = seed;
  s["config"] = cfg;
  std::vector<std::string> parts = {"simulate", config_text};
  s["config_hash"] = config_hash(parts);
  return s;
}

int run_simulate(const std::string& config_path, const std::string& out_dir) {
  std::string text = slurp(config_path, Errc::kConfig);
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::kConfig, config_path + ": " + e.what());
  }
  ConfigView v(cfg);
  std::string scenario = v.get_string("scenario", "");
  if (scenario.empty())
    throw Error(Errc::kConfig,
                "config field 'scenario' is required: one of shift_curve, "
                "ex_ante_vs_ex_post, variance_fidelity, crossfit_validation");
  std::uint64_t seed = v.get_u64("seed", 1);
  std::size_t threads = v.get_size("threads", 0);
  DgpSpec dgp{v.get_double("noise_sd", 1.0), v.get_size("covariate_width", 54)};

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw Error(Errc::kConfig,
                "cannot create output directory '" + out_dir + "': " +
                    ec.message());
  auto path_in = [&out_dir](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  nlohmann::json summary = summary_stub(scenario, seed, text, cfg);

  if (scenario == "shift_curve") {
    ShiftCurveConfig c;
    c.dgp = dgp;
    c.population_size = v.get_size("population_size", 100000);
    c.n = v.get_size("n", 100);
    c.n1 = v.get_size("n1", c.n / 2);
    c.deltas = v.get_doubles("deltas", {});
    c.replications = v.get_size("replications", 10000);
    c.threads = threads;
    c.seed = seed;
    c.rule = parse_rule_spec(v.get_string("rule", "cate_oracle"), {}, dgp.width);
    v.finish();
    ShiftCurveResult r = run_shift_curve(c);

    std::vector<std::string> header = {"delta", "se_pav", "mc_err"};
    std::vector<std::vector<double>> rows;
    if (r.replications > 0)
      for (const ShiftCurvePoint& p : r.points)
        rows.push_back({p.delta, p.se_pav, p.mc_err});
    write_csv(path_in("shift_curve.csv"), header, rows);

    std::vector<std::string> rep_header = {"rep", "delta", "value"};
    std::vector<std::vector<double>> rep_rows;
    for (std::size_t rep = 0; rep < r.replications; ++rep)
      for (std::size_t di = 0; di < r.points.size(); ++di)
        rep_rows.push_back({static_cast<double>(rep), r.points[di].delta,
                            r.rep_values[di][rep]});
    write_csv(path_in("shift_curve_reps.csv"), rep_header, rep_rows);

    summary["oracle"] = {{"centering_shift", r.centering_shift},
                         {"kappa11", r.kappa11},
                         {"kappa00", r.kappa00},
                         {"delta_star", r.delta_star},
                         {"p_f", r.p_f}};
    summary["replications"] = r.replications;
    summary["points"] = nlohmann::json::array();
    for (const ShiftCurvePoint& p : r.points) {
      nlohmann::json pj;
      pj["delta"] = p.delta;
      pj["penalty_formula"] = p.penalty_formula;
      if (r.replications > 0) {
        pj["se_pav"] = p.se_pav;
        pj["mc_err"] = p.mc_err;
        pj["variance"] = p.variance;
        pj["se_variance"] = p.se_variance;
        pj["penalty_empirical"] = p.penalty_empirical;
      }
      summary["points"].push_back(pj);
    }
  } else if (scenario == "ex_ante_vs_ex_post") {
    ExAnteScenarioConfig c;
    c.dgp = dgp;
    c.population_size = v.get_size("population_size", 100000);
    c.n_grid = v.get_sizes("n_grid", {100, 200, 300, 400, 500});
    c.replications = v.get_size("replications", 20000);
    c.threads = threads;
    c.seed = seed;
    c.rule = parse_rule_spec(v.get_string("rule", "cate_oracle"), {}, dgp.width);
    v.finish();
    ExAnteScenarioResult r = run_ex_ante_vs_ex_post(c);

    std::vector<std::string> header = {"n", "se_ex_ante", "se_ex_post",
                                       "mc_err_ex_ante", "mc_err_ex_post"};
    std::vector<std::vector<double>> rows;
    if (r.replications > 0)
      for (const ExAntePoint& p : r.points)
        rows.push_back({static_cast<double>(p.n), p.se_ex_ante, p.se_ex_post,
                        p.mc_err_ex_ante, p.mc_err_ex_post});
    write_csv(path_in("ex_ante_vs_ex_post.csv"), header, rows);

    std::vector<std::string> rep_header = {"rep", "n", "ex_ante", "ex_post"};
    std::vector<std::vector<double>> rep_rows;
    for (std::size_t ni = 0; ni < r.points.size(); ++ni)
      for (std::size_t rep = 0; rep < r.replications; ++rep)
        rep_rows.push_back({static_cast<double>(rep),
                            static_cast<double>(r.points[ni].n),
                            r.rep_ex_ante[ni][rep], r.rep_ex_post[ni][rep]});
    write_csv(path_in("ex_ante_vs_ex_post_reps.csv"), rep_header, rep_rows);

    summary["replications"] = r.replications;
    summary["points"] = nlohmann::json::array();
    for (const ExAntePoint& p : r.points) {
      nlohmann::json pj;
      pj["n"] = p.n;
      pj["closed_form_var_diff"] = p.closed_form_var_diff;
      if (r.replications > 0) {
        pj["se_ex_ante"] = p.se_ex_ante;
        pj["mc_err_ex_ante"] = p.mc_err_ex_ante;
        pj["se_ex_post"] = p.se_ex_post;
        pj["mc_err_ex_post"] = p.mc_err_ex_post;
        pj["var_ex_ante"] = p.var_ex_ante;
        pj["var_ex_post"] = p.var_ex_post;
        pj["empirical_var_diff"] = p.var_ex_ante - p.var_ex_post;
      }
      summary["points"].push_back(pj);
    }
  } else if (scenario == "variance_fidelity") {
    VarianceFidelityConfig c;
    c.dgp = dgp;
    c.n = v.get_size("n", 200);
    c.n1 = v.get_size("n1", c.n / 2);
    c.n_f = v.get_size("n_f", c.n / 2);
    c.n_r1 = v.get_size("n_r1", c.n / 4);
    c.replications = v.get_size("replications", 100000);
    c.threads = threads;
    c.seed = seed;
    c.rule = parse_rule_spec(v.get_string("rule", "cate_oracle"), {}, dgp.width);
    v.finish();
    VarianceFidelityResult r = run_variance_fidelity(c);

    std::vector<std::string> header = {"estimator", "empirical_var", "mc_err",
                                       "oracle_var", "rel_err"};
    std::vector<std::vector<std::string>> rows;
    if (r.replications > 0)
      for (const VarianceFidelityRow& row : r.rows)
        rows.push_back({row.estimator, format_double(row.empirical_variance),
                        format_double(row.mc_err),
                        format_double(row.oracle_variance),
                        format_double(row.relative_error)});
    write_csv_text(path_in("variance_fidelity.csv"), header, rows);

    std::vector<std::string> rep_header = {"rep"};
    for (const VarianceFidelityRow& row : r.rows)
      rep_header.push_back(row.estimator);
    std::vector<std::vector<double>> rep_rows;
    for (std::size_t rep = 0; rep < r.replications; ++rep) {
      std::vector<double> line = {static_cast<double>(rep)};
      for (std::size_t e = 0; e < r.rows.size(); ++e)
        line.push_back(r.rep_values[e][rep]);
      rep_rows.push_back(std::move(line));
    }
    write_csv(path_in("variance_fidelity_reps.csv"), rep_header, rep_rows);

    summary["replications"] = r.replications;
    summary["rows"] = nlohmann::json::array();
    for (const VarianceFidelityRow& row : r.rows) {
      nlohmann::json rj;
      rj["estimator"] = row.estimator;
      rj["oracle_mean"] = row.oracle_mean;
      rj["oracle_variance"] = row.oracle_variance;
      if (r.replications > 0) {
        rj["empirical_mean"] = row.empirical_mean;
        rj["empirical_variance"] = row.empirical_variance;
        rj["mc_err"] = row.mc_err;
        rj["relative_error"] = row.relative_error;
      }
      summary["rows"].push_back(rj);
    }
  } else if (scenario == "crossfit_validation") {
    CrossFitScenarioConfig c;
    c.dgp = dgp;
    c.population_size = v.get_size("population_size", 100000);
    c.n = v.get_size("n", 80);
    c.n1 = v.get_size("n1", c.n / 2);
    c.K = v.get_size("k", 4);
    c.learner =
        parse_algo_spec(v.get_string("algo", "stratum_cate:53:2"), {}, dgp.width);
    c.replications = v.get_size("replications", 20000);
    c.oracle_draws = v.get_size("oracle_draws", 400);
    c.threads = threads;
    c.seed = seed;
    v.finish();
    CrossFitScenarioResult r = run_crossfit_validation(c);

    std::vector<std::string> header = {"metric", "value", "mc_err"};
    std::vector<std::vector<std::string>> rows;
    if (r.replications > 0) {
      auto push = [&rows](const std::string& name, double value,
                          double mc_err) {
        rows.push_back({name, format_double(value),
                        mc_err >= 0.0 ? format_double(mc_err) : ""});
      };
      push("mean_pooled", r.mean_pooled, r.se_mean_pooled);
      push("var_single_fold", r.var_single_fold, -1.0);
      push("cov_between_folds", r.cov_between_folds, -1.0);
      push("e_s_f_sq", r.e_s_f_sq, -1.0);
      push("identity_gap", r.identity_gap, -1.0);
      push("mean_plugin_single", r.mean_plugin_single, -1.0);
      push("mean_plugin_pooled", r.mean_plugin_pooled, -1.0);
      push("oracle_lambda_F", r.oracle.lambda_F,
           r.oracle.mc_se.count("lambda_F") ? r.oracle.mc_se.at("lambda_F")
                                            : -1.0);
      push("oracle_p_F", r.oracle.p_F,
           r.oracle.mc_se.count("p_F") ? r.oracle.mc_se.at("p_F") : -1.0);
      push("oracle_tau_F", r.oracle.tau_F,
           r.oracle.mc_se.count("tau_F") ? r.oracle.mc_se.at("tau_F") : -1.0);
      push("oracle_v_single", r.oracle.v_single, -1.0);
      push("oracle_covariance_term", r.oracle.covariance_term, -1.0);
    }
    write_csv_text(path_in("crossfit_validation.csv"), header, rows);

    std::vector<std::string> rep_header = {"rep", "pooled", "s_f_sq"};
    for (std::size_t k = 0; k < r.K; ++k)
      rep_header.push_back("fold_" + std::to_string(k));
    std::vector<std::vector<double>> rep_rows;
    for (std::size_t rep = 0; rep < r.replications; ++rep) {
      std::vector<double> line = {static_cast<double>(rep), r.rep_pooled[rep],
                                  r.rep_s_f_sq[rep]};
      for (std::size_t k = 0; k < r.K; ++k)
        line.push_back(r.rep_fold_estimates[rep * r.K + k]);
      rep_rows.push_back(std::move(line));
    }
    write_csv(path_in("crossfit_validation_reps.csv"), rep_header, rep_rows);

    summary["replications"] = r.replications;
    nlohmann::json oj;
    oj["training_n"] = r.oracle.training_n;
    oj["training_n1"] = r.oracle.training_n1;
    oj["replications"] = r.oracle.replications;
    oj["lambda_F"] = r.oracle.lambda_F;
    oj["p_F"] = r.oracle.p_F;
    oj["tau_F"] = r.oracle.tau_F;
    oj["e_masked1_var"] = r.oracle.e_masked1_var;
    oj["e_masked0_var"] = r.oracle.e_masked0_var;
    oj["covariance_term"] = r.oracle.covariance_term;
    oj["v_single"] = r.oracle.v_single;
    oj["mc_se"] = nlohmann::json::object();
    for (const auto& [key, value] : r.oracle.mc_se) oj["mc_se"][key] = value;
    summary["oracle"] = oj;
    if (r.replications > 0) {
      summary["empirical"] = {{"mean_pooled", r.mean_pooled},
                              {"se_mean_pooled", r.se_mean_pooled},
                              {"var_single_fold", r.var_single_fold},
                              {"cov_between_folds", r.cov_between_folds},
                              {"e_s_f_sq", r.e_s_f_sq},
                              {"identity_gap", r.identity_gap},
                              {"mean_plugin_single", r.mean_plugin_single},
                              {"mean_plugin_pooled", r.mean_plugin_pooled}};
    }
  } else {
    throw Error(Errc::kConfig,
                "config field 'scenario' has unknown value '" + scenario +
                    "'; expected shift_curve, ex_ante_vs_ex_post, "
                    "variance_fidelity, or crossfit_validation");
  }

  emit(path_in("summary.json"), render_json(summary));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experimental evaluation of individualized treatment rules"};
  app.require_subcommand(1);

  std::string data_path, rule_spec, rule2_spec, out_path, algo_spec;
  std::string config_path, out_dir;
  std::optional<double> shift_delta;
  std::uint64_t seed = 1;
  std::size_t k = 2;
  bool timestamp = false;

  CLI::App* ev = app.add_subcommand(
      "evaluate", "Estimate rule value and gain from an experiment CSV");
  ev->add_option("--data", data_path,
                 "CSV with 'outcome' and 'treatment' columns; all other "
                 "columns are covariates")
      ->required();
  ev->add_option("--rule", rule_spec,
                 "const:1 | const:0 | cate_oracle | linear:<file> | "
                 "col:<column>")
      ->required();
  ev->add_option("--rule2", rule2_spec,
                 "second rule; adds value and gain contrasts");
  ev->add_option("--shift", shift_delta,
                 "add a constant to every outcome before estimation");
  ev->add_option("--seed", seed, "recorded in the report for replay");
  ev->add_option("--out", out_path, "report path (stdout when omitted)");
  ev->add_flag("--timestamp", timestamp, "stamp the report with UTC time");

  CLI::App* cf = app.add_subcommand(
      "crossfit", "Cross-fitted evaluation of a learning algorithm");
  cf->add_option("--data", data_path, "experiment CSV")->required();
  cf->add_option("--algo", algo_spec,
                 "const:0 | const:1 | stratum_cate:<column>:<bins> | "
                 "baseline_risk:<column>:<bins>:<threshold>")
      ->required();
  cf->add_option("--k", k, "fold count; must divide n and the treated count")
      ->required();
  cf->add_option("--seed", seed, "fold shuffle seed");
  cf->add_option("--out", out_path, "report path (stdout when omitted)");
  cf->add_flag("--timestamp", timestamp, "stamp the report with UTC time");

  CLI::App* sim = app.add_subcommand(
      "simulate", "Run a simulation scenario from a JSON config");
  sim->add_option("--config", config_path, "JSON scenario config")->required();
  sim->add_option("--out-dir", out_dir, "directory for CSV and JSON output")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 4;
  }

  try {
    if (ev->parsed())
      return run_evaluate(data_path, rule_spec, rule2_spec, shift_delta, seed,
                          out_path, timestamp);
    if (cf->parsed())
      return run_crossfit(data_path, algo_spec, k, seed, out_path, timestamp);
    return run_simulate(config_path, out_dir);
  } catch (const ValidationError& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
    for (const ValidationIssue& issue : e.issues()) {
      std::cerr << "  - [" << errc_name(issue.code) << "] ";
      if (issue.unit) std::cerr << "unit " << *issue.unit << ": ";
      std::cerr << issue.message << "\n";
    }
    return 2;
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
    return e.code() == Errc::kConfig ? 4 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
