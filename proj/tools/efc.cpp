#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "efc/causal_models.hpp"
#include "efc/confounder.hpp"
#include "efc/csv.hpp"
#include "efc/dataset.hpp"
#include "efc/diagnostics.hpp"
#include "efc/errors.hpp"
#include "efc/estimators.hpp"
#include "efc/gwas.hpp"
#include "efc/parallel.hpp"
#include "efc/regression.hpp"
#include "efc/surrogate_flow.hpp"
#include "efc/sweep.hpp"

using namespace efc;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Base RNG seed");
  app->add_option("--out", c.out, "Output path (stdout when omitted, where applicable)");
  app->add_option("--threads", c.threads, "Worker threads (0 = hardware concurrency)");
}

// Writes to --out when given, otherwise stdout.
template <typename Fn>
void emit(const std::string& out, Fn&& write) {
  if (out.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream f(out);
  if (!f) fail(Errc::Io, "cannot write " + out);
  write(f);
}

std::string require_out(const Common& c, const char* what) {
  if (c.out.empty()) fail(Errc::InvalidArgument, std::string(what) + " needs --out");
  return c.out;
}

struct ModelOpts {
  std::string family = "A";
  Index dim = 20;
  double gamma = 1.0;
  double alpha = 1.0;
  double sigma = 1.0;
  double noise_sd = std::sqrt(0.1);
};

void add_model_opts(CLI::App* app, ModelOpts& m) {
  app->add_option("--family", m.family, "Causal model family (A or B)");
  app->add_option("--dim", m.dim, "Dimension T of t (even)");
  app->add_option("--gamma", m.gamma, "Confounding strength");
  app->add_option("--alpha", m.alpha, "Outcome smoothness in h");
  app->add_option("--sigma", m.sigma, "Standard deviation of t");
  app->add_option("--noise-sd", m.noise_sd, "Outcome noise standard deviation");
}

ModelSpec to_spec(const ModelOpts& m) {
  ModelSpec s;
  s.family = family_from_string(m.family);
  s.dim = m.dim;
  s.gamma = m.gamma;
  s.alpha = m.alpha;
  s.sigma = m.sigma;
  s.noise_sd = m.noise_sd;
  s.validate();
  return s;
}

struct FlowOpts {
  FlowConfig cfg;
};

void add_flow_opts(CLI::App* app, FlowOpts& f) {
  app->add_option("--step-size", f.cfg.step_size, "Euler step size");
  app->add_option("--tolerance", f.cfg.rel_tolerance, "Relative mismatch tolerance");
  app->add_option("--max-steps", f.cfg.max_steps, "Euler step cap");
  app->add_option("--divergence-factor", f.cfg.divergence_factor, "Growth factor flagged as divergence");
}

// "linear_sum:GAMMA:DIM", "pairwise_bilinear:GAMMA:DIM" or a LinearMap CSV path.
FunctionalConfounder parse_confounder(const std::string& text) {
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string kind = text.substr(0, colon);
    std::stringstream rest(text.substr(colon + 1));
    std::string g, d;
    std::getline(rest, g, ':');
    std::getline(rest, d, ':');
    const double gamma = csv::parse_double(g);
    const auto dim = static_cast<Index>(csv::parse_double(d));
    if (kind == "linear_sum") return FunctionalConfounder::linear_sum(gamma, dim);
    if (kind == "pairwise_bilinear") return FunctionalConfounder::pairwise_bilinear(gamma, dim);
    fail(Errc::InvalidArgument, "unknown confounder kind '" + kind + "'");
  }
  return load_linear_map(text);
}

Vector parse_vector(const std::string& text) {
  std::vector<double> values;
  for (const auto& cell : csv::split_line(text)) values.push_back(csv::parse_double(cell));
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> values;
  if (text.empty()) return values;
  for (const auto& cell : csv::split_line(text)) values.push_back(csv::parse_double(cell));
  return values;
}

// ---- subcommands ----------------------------------------------------------

void run_simulate(const Common& c, const ModelOpts& m, Index n, const std::string& queries_out) {
  const auto spec = to_spec(m);
  const auto path = require_out(c, "simulate");
  const Dataset data = sample_model(spec, n, RngSeed{c.seed, 0});
  save_dataset(data, path);
  write_metadata(path, {{"dim", spec.dim},
                        {"model", to_string(spec.family)},
                        {"seed", c.seed},
                        {"n", n},
                        {"gamma", spec.gamma},
                        {"alpha", spec.alpha},
                        {"sigma", spec.sigma},
                        {"noise_sd", spec.noise_sd}});
  if (!queries_out.empty()) {
    save_queries(make_eval_queries(data, spec.confounder(), RngSeed{c.seed, 3}), queries_out);
  }
}

void run_fit(const Common& c, const std::string& data_path, const std::string& kind, double lambda,
             const std::string& grid, int folds, double offset) {
  const auto path = require_out(c, "fit");
  const bool lasso = kind == "lasso";
  if (!lasso && kind != "krr") fail(Errc::InvalidArgument, "--kind must be krr or lasso");
  const Dataset data = load_dataset(data_path, true);
  double chosen = lambda;
  nlohmann::json report{{"kind", kind}};
  if (const auto g = parse_list(grid); !g.empty()) {
    const auto cv = cross_validate(data, folds, g, lasso ? ModelKind::LogisticLasso : ModelKind::KernelRidge,
                                   RngSeed{c.seed, 4}, offset);
    chosen = cv.chosen_lambda;
    report["cv_lambdas"] = cv.lambdas;
    report["cv_mean_loss"] = cv.mean_loss;
  } else if (chosen < 0.0) {
    chosen = lasso ? 0.01 : default_krr_lambda(data.size());
  }
  report["lambda"] = chosen;
  const OutcomeModel model = lasso ? fit_logistic_lasso(data, chosen) : fit_krr(data, chosen, offset);
  model.save(path);
  std::cerr << report.dump() << '\n';
}

void run_estimate(const Common& c, const std::string& model_path, const std::string& conf_text,
                  const std::string& queries_path, const FlowOpts& f, const std::string& method) {
  const auto model = OutcomeModel::load(model_path);
  const auto conf = parse_confounder(conf_text);
  const auto queries = load_queries(queries_path);
  const bool lode = method == "lode" || method == "both";
  const bool base = method == "baseline" || method == "both";
  if (!lode && !base) fail(Errc::InvalidArgument, "--method must be lode, baseline or both");

  std::vector<EffectEstimate> lode_est(lode ? queries.size() : 0);
  if (lode) {
    parallel_for(queries.size(), c.threads, [&](std::size_t q) {
      lode_est[q] = lode_conditional_effect(model, conf, queries[q], f.cfg);
    });
  }
  emit(c.out, [&](std::ostream& out) {
    out << "query_id,method,value,steps,final_mismatch,status\n";
    for (std::size_t q = 0; q < queries.size(); ++q) {
      if (lode) {
        const auto& e = lode_est[q];
        out << q << ",lode," << (e.value ? csv::format_double(*e.value) : "nan") << ',' << e.surrogate.steps_taken
            << ',' << csv::format_double(e.surrogate.final_mismatch) << ',' << to_string(e.surrogate.status) << '\n';
      }
      if (base) {
        const auto e = baseline_conditional_effect(model, queries[q]);
        out << q << ",baseline," << csv::format_double(*e.value) << ",0,nan,NotApplicable\n";
      }
    }
  });
}

void run_sweep_cmd(const Common& c, const std::string& config_path, const std::string& experiment, int seeds,
                   bool seed_given, bool threads_given) {
  SweepConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) fail(Errc::Io, "cannot open " + config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::MalformedFile, config_path + ": " + e.what());
    }
    cfg = SweepConfig::from_json(j);
  } else if (!experiment.empty()) {
    cfg = SweepConfig::defaults(experiment_from_string(experiment));
  } else {
    fail(Errc::InvalidArgument, "sweep needs --config or --experiment");
  }
  if (seed_given) cfg.base_seed = c.seed;
  if (threads_given) cfg.threads = c.threads;
  if (seeds > 0) cfg.n_seeds = seeds;
  cfg.finalize();
  std::string out = c.out;
  if (out.empty() && cfg.output) out = cfg.output->string();

  if (cfg.experiment == Experiment::Gwas) {
    const auto rows = run_gwas_sweep(cfg);
    emit(out, [&](std::ostream& o) { write_gwas_sweep_csv(rows, o); });
  } else {
    const auto rows = run_sweep(cfg);
    emit(out, [&](std::ostream& o) { write_sweep_csv(rows, o); });
  }
}

void run_summarize(const Common& c, const std::string& in) {
  const auto rows = summarize(read_sweep_csv(in));
  emit(c.out, [&](std::ostream& o) { write_summary_csv(rows, o); });
}

std::vector<Vector> random_points(const ModelSpec& spec, Index n, RngSeed rng) {
  auto engine = make_engine(rng);
  std::normal_distribution<double> d(0.0, spec.sigma);
  std::vector<Vector> pts;
  for (Index i = 0; i < n; ++i) {
    Vector t(spec.dim);
    for (Index j = 0; j < spec.dim; ++j) t(j) = d(engine);
    pts.push_back(std::move(t));
  }
  return pts;
}

void run_check_cred(const Common& c, const ModelOpts& m, Index n_points, const std::string& model_path) {
  const auto spec = to_spec(m);
  const auto conf = spec.confounder();
  const auto ts = random_points(spec, n_points, RngSeed{c.seed, 0});
  const auto hs = random_points(spec, n_points, RngSeed{c.seed, 1});
  std::vector<CredPoint> points;
  for (std::size_t i = 0; i < ts.size(); ++i) points.push_back({ts[i], conf.value(hs[i])});

  nlohmann::json report{{"check", "cred"}, {"points", n_points}};
  if (model_path.empty()) {
    report["source"] = "analytic";
    report["residual"] = cred_residual(
        [&](const Vector& t, const Vector& h2) { return conditional_effect_gradient(spec, t, h2(0)); }, conf, points);
  } else {
    report["source"] = model_path;
    report["residual"] = cred_residual(fitted_gradient(OutcomeModel::load(model_path)), conf, points);
  }
  emit(c.out, [&](std::ostream& o) { o << report.dump() << '\n'; });
}

void run_check_bound(const Common& c, const ModelOpts& m, const FlowOpts& f, const std::string& t_text,
                     double h_target, double radius) {
  const auto spec = to_spec(m);
  const auto conf = spec.confounder();
  Vector t_star;
  double h2 = h_target;
  if (!t_text.empty()) {
    t_star = parse_vector(t_text);
  } else {
    t_star = random_points(spec, 1, RngSeed{c.seed, 0}).front();
  }
  if (std::isnan(h2)) h2 = conf.value(random_points(spec, 1, RngSeed{c.seed, 1}).front())(0);

  FlowConfig cfg = f.cfg;
  cfg.record_trajectory = true;
  const InterventionQuery query{t_star, Vector::Constant(1, h2)};
  const auto s = conf.is_linear() ? closed_form_linear(conf, query) : euler_solve(conf, query, cfg);
  double r = radius > 0.0 ? radius : default_domain_radius(spec);
  if (radius <= 0.0) {
    for (const auto& t : s.trajectory) r = std::max(r, t.norm());
    r = std::max(r, s.t_hat.norm());
  }
  const auto consts = analytic_constants(spec, r);
  const auto report = surrogate_error_bound(consts, s, cfg);
  auto j = report.to_json();
  j["check"] = "bound";
  j["domain_radius"] = r;
  j["steps"] = s.steps_taken;
  j["status"] = to_string(s.status);
  j["oracle_error"] =
      std::abs(oracle_regression(spec, s.t_hat) - true_conditional_effect(spec, t_star, h2));
  emit(c.out, [&](std::ostream& o) { o << j.dump() << '\n'; });
}

void run_check_support(const Common& c, const std::string& data_path, const std::string& point, Index k) {
  const Dataset data = load_dataset(data_path, false);
  auto j = support_score(data, parse_vector(point), k).to_json();
  j["check"] = "support";
  emit(c.out, [&](std::ostream& o) { o << j.dump() << '\n'; });
}

void run_check_fpos(const Common& c, const std::string& path) {
  const auto table = csv::read(path);
  const long g_col = table.column("g");
  if (g_col < 0) fail(Errc::MalformedFile, path + ": needs a 'g' column");
  std::vector<long> h_cols;
  for (std::size_t j = 0;; ++j) {
    const long col = table.column("h_" + std::to_string(j));
    if (col < 0) break;
    h_cols.push_back(col);
  }
  if (h_cols.empty()) fail(Errc::MalformedFile, path + ": needs h_0.. columns");
  const auto n = static_cast<Index>(table.rows.size());
  Vector g(n);
  Matrix h(n, static_cast<Index>(h_cols.size()));
  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    g(i) = csv::parse_double(row[static_cast<std::size_t>(g_col)]);
    for (std::size_t j = 0; j < h_cols.size(); ++j) {
      h(i, static_cast<Index>(j)) = csv::parse_double(row[static_cast<std::size_t>(h_cols[j])]);
    }
  }
  nlohmann::json j{{"check", "fpos"}, {"score", fpos_dependence_check(g, h)}, {"rows", n}};
  emit(c.out, [&](std::ostream& o) { o << j.dump() << '\n'; });
}

void run_gwas_sim(const Common& c, const GenotypeSimConfig& sim) {
  const auto path = require_out(c, "gwas-sim");
  const auto geno = generate_genotypes(sim, RngSeed{c.seed, 1});
  save_genotypes(geno, path);
  nlohmann::json causal = nlohmann::json::array();
  for (const auto& s : geno.causal_snps) causal.push_back({{"snp", s.index}, {"beta", s.beta}});
  write_metadata(path, {{"n", sim.n},
                        {"snps", sim.snps},
                        {"n_pops", sim.n_pops},
                        {"fst", sim.fst},
                        {"pop_effect", sim.pop_effect},
                        {"prevalence", sim.prevalence},
                        {"seed", c.seed},
                        {"causal_snps", causal},
                        {"pop_labels", geno.pop_labels}});
}

void run_gwas_run(const Common& c, const std::string& data_path, GwasPipelineConfig pipe, const std::string& grid) {
  const auto geno = load_genotypes(data_path, RngSeed{c.seed, 9});
  pipe.lambda_grid = parse_list(grid);
  pipe.threads = c.threads;
  const auto result = run_gwas_pipeline(geno, pipe, RngSeed{c.seed, 2});
  const auto path = require_out(c, "gwas-run");
  save_ranked_effects(result, path);
  std::cerr << nlohmann::json{{"chosen_lambda", result.chosen_lambda}, {"skipped", result.skipped}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal effect estimation with functional confounders"};
  app.require_subcommand(1);

  // simulate
  Common sim_c;
  ModelOpts sim_m;
  Index sim_n = 1000;
  std::string sim_queries;
  auto* simulate = app.add_subcommand("simulate", "Sample a dataset from causal model A or B");
  add_common(simulate, sim_c);
  add_model_opts(simulate, sim_m);
  simulate->add_option("--n", sim_n, "Number of rows");
  simulate->add_option("--queries", sim_queries, "Also write evaluation queries built from the sample");

  // fit
  Common fit_c;
  std::string fit_data, fit_kind = "krr", fit_grid;
  double fit_lambda = -1.0, fit_offset = 1.0;
  int fit_folds = 5;
  auto* fit = app.add_subcommand("fit", "Fit an outcome model");
  add_common(fit, fit_c);
  fit->add_option("--data", fit_data, "Dataset CSV with a y column")->required();
  fit->add_option("--kind", fit_kind, "krr or lasso");
  fit->add_option("--lambda", fit_lambda, "Regularisation constant");
  fit->add_option("--cv-grid", fit_grid, "Comma-separated lambdas to select from by cross-validation");
  fit->add_option("--folds", fit_folds, "Cross-validation folds");
  fit->add_option("--offset", fit_offset, "Polynomial kernel offset");

  // estimate
  Common est_c;
  FlowOpts est_f;
  std::string est_model, est_conf, est_queries, est_method = "both";
  auto* estimate = app.add_subcommand("estimate", "Estimate conditional effects for a query file");
  add_common(estimate, est_c);
  add_flow_opts(estimate, est_f);
  estimate->add_option("--model", est_model, "Model JSON from `fit`")->required();
  estimate->add_option("--confounder", est_conf,
                       "linear_sum:GAMMA:DIM, pairwise_bilinear:GAMMA:DIM or a linear map CSV")
      ->required();
  estimate->add_option("--queries", est_queries, "Query CSV (t_*, h_* columns)")->required();
  estimate->add_option("--method", est_method, "lode, baseline or both");

  // sweep
  Common sw_c;
  std::string sw_config, sw_experiment;
  int sw_seeds = 0;
  auto* sweep = app.add_subcommand("sweep", "Run a simulation or GWAS sweep");
  add_common(sweep, sw_c);
  auto* sw_seed_opt = sweep->get_option("--seed");
  auto* sw_threads_opt = sweep->get_option("--threads");
  sweep->add_option("--config", sw_config, "Sweep configuration JSON");
  sweep->add_option("--experiment", sw_experiment,
                    "Use default grids: confounding_strength, positivity_sigma, mismatch_delta, step_size, gwas");
  sweep->add_option("--seeds", sw_seeds, "Override the number of seeds");

  // summarize
  Common sum_c;
  std::string sum_in;
  auto* summarize_cmd = app.add_subcommand("summarize", "Mean and sd per cell of a sweep CSV");
  add_common(summarize_cmd, sum_c);
  summarize_cmd->add_option("--in", sum_in, "Sweep results CSV")->required();

  // check
  auto* check = app.add_subcommand("check", "Diagnostics, one JSON line each");
  check->require_subcommand(1);
  Common cred_c;
  ModelOpts cred_m;
  Index cred_n = 1000;
  std::string cred_model;
  auto* cred = check->add_subcommand("cred", "C-redundancy residual");
  add_common(cred, cred_c);
  add_model_opts(cred, cred_m);
  cred->add_option("--points", cred_n, "Random probe points");
  cred->add_option("--model", cred_model, "Fitted model JSON (analytic outcome when omitted)");

  Common bound_c;
  ModelOpts bound_m;
  FlowOpts bound_f;
  std::string bound_t;
  double bound_h = std::nan("");
  double bound_r = 0.0;
  auto* bound = check->add_subcommand("bound", "Surrogate error bound for one query with an oracle outcome");
  add_common(bound, bound_c);
  add_model_opts(bound, bound_m);
  add_flow_opts(bound, bound_f);
  bound->add_option("--t-star", bound_t, "Comma-separated intervention (random when omitted)");
  bound->add_option("--h-target", bound_h, "Confounder target (random when omitted)");
  bound->add_option("--radius", bound_r, "Domain radius for the constants (covers the trajectory when omitted)");

  Common sup_c;
  std::string sup_data, sup_point;
  Index sup_k = 5;
  auto* support = check->add_subcommand("support", "k-NN support score of a point");
  add_common(support, sup_c);
  support->add_option("--data", sup_data, "Dataset CSV (t_* columns; a y column is ignored)")->required();
  support->add_option("--point", sup_point, "Comma-separated probe")->required();
  support->add_option("--k", sup_k, "Neighbour rank");

  Common fpos_c;
  std::string fpos_in;
  auto* fpos = check->add_subcommand("fpos", "Dependence of g on h");
  add_common(fpos, fpos_c);
  fpos->add_option("--in", fpos_in, "CSV with g and h_0.. columns")->required();

  // gwas
  Common gs_c;
  GenotypeSimConfig gs;
  auto* gwas_sim = app.add_subcommand("gwas-sim", "Simulate structured genotypes and a phenotype");
  add_common(gwas_sim, gs_c);
  gwas_sim->add_option("--n", gs.n, "Individuals");
  gwas_sim->add_option("--snps", gs.snps, "SNPs");
  gwas_sim->add_option("--pops", gs.n_pops, "Populations");
  gwas_sim->add_option("--fst", gs.fst, "Differentiation F");
  gwas_sim->add_option("--causal", gs.n_causal, "Planted causal SNPs");
  gwas_sim->add_option("--effect", gs.effect_size, "Causal log-odds magnitude");
  gwas_sim->add_option("--pop-effect", gs.pop_effect, "Population log-odds effect");
  gwas_sim->add_option("--prevalence", gs.prevalence, "Target case fraction");

  Common gr_c;
  GwasPipelineConfig gr;
  std::string gr_data, gr_grid;
  auto* gwas_run = app.add_subcommand("gwas-run", "Per-SNP effects with the PCA confounder");
  add_common(gwas_run, gr_c);
  gwas_run->add_option("--data", gr_data, "Genotype CSV (snp_*, y)")->required();
  gwas_run->add_option("--components", gr.components, "Principal components in h");
  gwas_run->add_option("--folds", gr.folds, "Cross-validation folds");
  gwas_run->add_option("--threshold", gr.threshold, "Selection threshold on |effect|");
  gwas_run->add_option("--train-fraction", gr.train_fraction, "Training share of individuals");
  gwas_run->add_option("--lambda-grid", gr_grid, "Comma-separated lasso penalties");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) run_simulate(sim_c, sim_m, sim_n, sim_queries);
    if (*fit) run_fit(fit_c, fit_data, fit_kind, fit_lambda, fit_grid, fit_folds, fit_offset);
    if (*estimate) run_estimate(est_c, est_model, est_conf, est_queries, est_f, est_method);
    if (*sweep) run_sweep_cmd(sw_c, sw_config, sw_experiment, sw_seeds, sw_seed_opt->count() > 0, sw_threads_opt->count() > 0);
    if (*summarize_cmd) run_summarize(sum_c, sum_in);
    if (*cred) run_check_cred(cred_c, cred_m, cred_n, cred_model);
    if (*bound) run_check_bound(bound_c, bound_m, bound_f, bound_t, bound_h, bound_r);
    if (*support) run_check_support(sup_c, sup_data, sup_point, sup_k);
    if (*fpos) run_check_fpos(fpos_c, fpos_in);
    if (*gwas_sim) run_gwas_sim(gs_c, gs);
    if (*gwas_run) run_gwas_run(gr_c, gr_data, gr, gr_grid);
  } catch (const Error& e) {
    std::cerr << "efc: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "efc: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
