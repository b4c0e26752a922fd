#include "efc/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <tuple>

#include "efc/csv.hpp"
#include "efc/errors.hpp"
#include "efc/estimators.hpp"
#include "efc/parallel.hpp"

namespace efc {

namespace {

struct ExperimentName {
  Experiment e;
  const char* name;
};

constexpr ExperimentName kExperiments[] = {
    {Experiment::ConfoundingStrength, "confounding_strength"},
    {Experiment::PositivitySigma, "positivity_sigma"},
    {Experiment::MismatchDelta, "mismatch_delta"},
    {Experiment::StepSize, "step_size"},
    {Experiment::Gwas, "gwas"},
};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

const char* to_string(Experiment e) noexcept {
  for (const auto& x : kExperiments) {
    if (x.e == e) return x.name;
  }
  return "unknown";
}

Experiment experiment_from_string(const std::string& name) {
  for (const auto& x : kExperiments) {
    if (name == x.name) return x.e;
  }
  fail(Errc::InvalidArgument, "unknown experiment '" + name + "'");
}

SweepConfig SweepConfig::defaults(Experiment e) {
  SweepConfig c;
  c.experiment = e;
  const std::vector<double> gammas{0.25, 0.5, 1.0, 2.0, 4.0};
  switch (e) {
    case Experiment::ConfoundingStrength:
      c.families = {Family::A, Family::B};
      c.gammas = gammas;
      break;
    case Experiment::PositivitySigma:
      c.families = {Family::A, Family::B};
      c.gammas = gammas;
      c.sigmas = {0.5, 1.0, 2.0};
      c.eval_sigma = 1.0;
      break;
    case Experiment::MismatchDelta:
      c.families = {Family::A, Family::B};
      c.gammas = {2.0};
      c.alphas = {0.1, 1.0, 2.0};
      c.deltas = {0.0, 0.25, 0.5, 1.0, 2.0};
      break;
    case Experiment::StepSize:
      c.families = {Family::B};
      c.gammas = gammas;
      c.step_sizes = {0.01, 0.1, 0.5, 1.0, 2.0};
      break;
    case Experiment::Gwas:
      break;
  }
  c.finalize();
  return c;
}

void SweepConfig::finalize() {
  if (families.empty()) families = {Family::A};
  if (gammas.empty()) gammas = {1.0};
  if (sigmas.empty()) sigmas = {1.0};
  if (alphas.empty()) alphas = {1.0};
  if (deltas.empty()) deltas = {0.0};
  if (step_sizes.empty()) step_sizes = {flow.step_size};
  if (krr_lambdas.empty()) krr_lambdas = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};

  require(n_train > 0 && n_eval > 0 && n_seeds > 0, Errc::InvalidArgument, "counts must be positive");
  require(dim >= 2 && dim % 2 == 0, Errc::InvalidArgument, "dimension must be even and >= 2");
  require(noise_sd >= 0.0, Errc::InvalidArgument, "noise_sd must be >= 0");
  require(cv_folds >= 2, Errc::InvalidArgument, "cv_folds must be >= 2");
  require(recall_at >= 1, Errc::InvalidArgument, "recall_at must be >= 1");
  for (double s : sigmas) require(s > 0.0, Errc::InvalidArgument, "sigma must be positive");
  require(!eval_sigma || *eval_sigma > 0.0, Errc::InvalidArgument, "eval_sigma must be positive");
  for (double d : deltas) require(d >= 0.0, Errc::InvalidArgument, "delta must be >= 0");
  for (double l : step_sizes) {
    require(l > 0.0, Errc::InvalidArgument, "step sizes must be positive");
    require(allow_large_steps || l <= 2.0, Errc::InvalidArgument,
            "step sizes above 2 need allow_large_steps (many surrogates diverge there)");
  }
  for (double l : krr_lambdas) require(l > 0.0, Errc::InvalidArgument, "ridge lambdas must be positive");
  flow.validate();
  gwas_sim.validate();
}

namespace {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

SweepConfig SweepConfig::from_json(const nlohmann::json& j) {
  try {
    SweepConfig c;
    const auto exp = j.at("experiment").get<std::string>();
    c = defaults(experiment_from_string(exp));
    if (j.contains("families")) {
      c.families.clear();
      for (const auto& f : j.at("families")) c.families.push_back(family_from_string(f.get<std::string>()));
    }
    if (j.contains("family")) c.families = {family_from_string(j.at("family").get<std::string>())};
    read_if(j, "gammas", c.gammas);
    read_if(j, "sigmas", c.sigmas);
    read_if(j, "alphas", c.alphas);
    read_if(j, "deltas", c.deltas);
    read_if(j, "step_sizes", c.step_sizes);
    read_if(j, "dim", c.dim);
    read_if(j, "noise_sd", c.noise_sd);
    read_if(j, "n_train", c.n_train);
    read_if(j, "n_eval", c.n_eval);
    read_if(j, "n_seeds", c.n_seeds);
    read_if(j, "base_seed", c.base_seed);
    read_if(j, "mean_objective_steps", c.mean_objective_steps);
    if (j.contains("eval_sigma")) {
      if (j.at("eval_sigma").is_null()) {
        c.eval_sigma.reset();
      } else {
        c.eval_sigma = j.at("eval_sigma").get<double>();
      }
    }
    read_if(j, "krr_lambdas", c.krr_lambdas);
    read_if(j, "krr_offset", c.krr_offset);
    read_if(j, "cv_folds", c.cv_folds);
    read_if(j, "allow_large_steps", c.allow_large_steps);
    read_if(j, "threads", c.threads);
    read_if(j, "recall_at", c.recall_at);
    if (j.contains("flow")) {
      const auto& f = j.at("flow");
      read_if(f, "step_size", c.flow.step_size);
      read_if(f, "rel_tolerance", c.flow.rel_tolerance);
      read_if(f, "max_steps", c.flow.max_steps);
      read_if(f, "divergence_factor", c.flow.divergence_factor);
    }
    if (j.contains("gwas_sim")) {
      const auto& g = j.at("gwas_sim");
      read_if(g, "n", c.gwas_sim.n);
      read_if(g, "snps", c.gwas_sim.snps);
      read_if(g, "n_pops", c.gwas_sim.n_pops);
      read_if(g, "fst", c.gwas_sim.fst);
      read_if(g, "n_causal", c.gwas_sim.n_causal);
      read_if(g, "effect_size", c.gwas_sim.effect_size);
      read_if(g, "pop_effect", c.gwas_sim.pop_effect);
      read_if(g, "prevalence", c.gwas_sim.prevalence);
    }
    if (j.contains("gwas_pipeline")) {
      const auto& g = j.at("gwas_pipeline");
      read_if(g, "components", c.gwas_pipeline.components);
      read_if(g, "lambda_grid", c.gwas_pipeline.lambda_grid);
      read_if(g, "folds", c.gwas_pipeline.folds);
      read_if(g, "train_fraction", c.gwas_pipeline.train_fraction);
      read_if(g, "threshold", c.gwas_pipeline.threshold);
    }
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    c.finalize();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::MalformedFile, std::string("bad sweep config: ") + e.what());
  }
}

nlohmann::json SweepConfig::to_json() const {
  std::vector<std::string> fams;
  for (auto f : families) fams.emplace_back(efc::to_string(f));
  nlohmann::json j{{"experiment", efc::to_string(experiment)},
                   {"families", fams},
                   {"gammas", gammas},
                   {"sigmas", sigmas},
                   {"alphas", alphas},
                   {"deltas", deltas},
                   {"step_sizes", step_sizes},
                   {"dim", dim},
                   {"noise_sd", noise_sd},
                   {"n_train", n_train},
                   {"n_eval", n_eval},
                   {"n_seeds", n_seeds},
                   {"base_seed", base_seed},
                   {"mean_objective_steps", mean_objective_steps},
                   {"eval_sigma", eval_sigma ? nlohmann::json(*eval_sigma) : nlohmann::json(nullptr)},
                   {"krr_lambdas", krr_lambdas},
                   {"krr_offset", krr_offset},
                   {"cv_folds", cv_folds},
                   {"allow_large_steps", allow_large_steps},
                   {"recall_at", recall_at},
                   {"flow",
                    {{"step_size", flow.step_size},
                     {"rel_tolerance", flow.rel_tolerance},
                     {"max_steps", flow.max_steps},
                     {"divergence_factor", flow.divergence_factor}}},
                   {"gwas_sim",
                    {{"n", gwas_sim.n},
                     {"snps", gwas_sim.snps},
                     {"n_pops", gwas_sim.n_pops},
                     {"fst", gwas_sim.fst},
                     {"n_causal", gwas_sim.n_causal},
                     {"effect_size", gwas_sim.effect_size},
                     {"pop_effect", gwas_sim.pop_effect},
                     {"prevalence", gwas_sim.prevalence}}},
                   {"gwas_pipeline",
                    {{"components", gwas_pipeline.components},
                     {"lambda_grid", gwas_pipeline.grid()},
                     {"folds", gwas_pipeline.folds},
                     {"train_fraction", gwas_pipeline.train_fraction},
                     {"threshold", gwas_pipeline.threshold}}}};
  if (output) j["output"] = output->string();
  return j;
}

SweepRow run_cell(const SweepConfig& cfg, const CellSpec& cell) {
  SweepRow row;
  row.experiment = to_string(cfg.experiment);
  row.family = to_string(cell.family);
  row.gamma = cell.gamma;
  row.sigma = cell.sigma;
  row.alpha = cell.alpha;
  row.delta = cell.delta;
  row.step_size = cell.step_size;
  row.seed = cell.seed;
  row.rmse_lode = kNaN;
  row.rmse_baseline = kNaN;
  try {
    ModelSpec spec;
    spec.family = cell.family;
    spec.dim = cfg.dim;
    spec.gamma = cell.gamma;
    spec.alpha = cell.alpha;
    spec.sigma = cell.sigma;
    spec.noise_sd = cfg.noise_sd;
    spec.validate();
    const auto conf = spec.confounder();

    // Streams by role: every cell with the same seed sees the same base draws.
    const Dataset train = sample_model(spec, cfg.n_train, RngSeed{cell.seed, 1});
    ModelSpec eval_spec = spec;
    if (cfg.eval_sigma) eval_spec.sigma = *cfg.eval_sigma;
    const Dataset eval = sample_model(eval_spec, cfg.n_eval, RngSeed{cell.seed, 2});
    const auto queries = make_eval_queries(eval, conf, RngSeed{cell.seed, 3});

    const auto cv = cross_validate(train, cfg.cv_folds, cfg.krr_lambdas, ModelKind::KernelRidge,
                                   RngSeed{cell.seed, 4}, cfg.krr_offset);
    const auto model = fit_krr(train, cv.chosen_lambda, cfg.krr_offset);

    FlowConfig flow = cfg.flow;
    flow.step_size = cell.step_size;
    if (cfg.mean_objective_steps) flow.step_size /= static_cast<double>(queries.size());

    std::vector<SurrogateResult> surrogates;
    if (cfg.experiment == Experiment::MismatchDelta) {
      surrogates = batch_solve_to_mismatch(conf, queries, cell.delta, flow);
    } else {
      surrogates.resize(queries.size());
      const bool integrate = cfg.experiment == Experiment::StepSize || !conf.is_linear();
      std::optional<LinearProjector> projector;
      if (!integrate && conf.linear_weights().squaredNorm() > 0.0) projector.emplace(conf);
      for (std::size_t q = 0; q < queries.size(); ++q) {
        if (integrate) {
          surrogates[q] = euler_solve(conf, queries[q], flow);
        } else if (projector) {
          surrogates[q] = closed_form_linear(conf, *projector, queries[q]);
        } else {
          surrogates[q] = closed_form_linear(conf, queries[q]);
        }
      }
    }

    double se_lode = 0.0, se_base = 0.0, steps = 0.0;
    Index used = 0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const auto& query = queries[q];
      const double truth = true_conditional_effect(spec, query.t_star, query.h_target(0));
      const double base = model.predict(query.t_star) - truth;
      se_base += base * base;
      steps += static_cast<double>(surrogates[q].steps_taken);
      if (surrogates[q].status == FlowStatus::Diverged) {
        ++row.diverged_count;
        continue;
      }
      const double lode = model.predict(surrogates[q].t_hat) - truth;
      se_lode += lode * lode;
      ++used;
    }
    const auto nq = static_cast<double>(queries.size());
    row.rmse_baseline = std::sqrt(se_base / nq);
    row.mean_steps = steps / nq;
    if (used > 0) {
      row.rmse_lode = std::sqrt(se_lode / static_cast<double>(used));
    } else {
      row.error = "AllDiverged";
    }
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

std::vector<SweepRow> run_sweep(const SweepConfig& cfg_in) {
  SweepConfig cfg = cfg_in;
  cfg.finalize();
  require(cfg.experiment != Experiment::Gwas, Errc::InvalidArgument, "use run_gwas_sweep for the GWAS experiment");
  std::vector<CellSpec> cells;
  for (Family f : cfg.families)
    for (double g : cfg.gammas)
      for (double s : cfg.sigmas)
        for (double a : cfg.alphas)
          for (double d : cfg.deltas)
            for (double l : cfg.step_sizes)
              for (int k = 0; k < cfg.n_seeds; ++k)
                cells.push_back({f, g, s, a, d, l, cfg.base_seed + static_cast<std::uint64_t>(k)});

  std::vector<SweepRow> rows(cells.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) { rows[i] = run_cell(cfg, cells[i]); });
  return rows;
}

namespace {

double recall(const std::vector<Index>& ranking, const std::vector<CausalSnp>& causal, Index at) {
  if (causal.empty()) return kNaN;
  const auto top = std::min<std::size_t>(static_cast<std::size_t>(at), ranking.size());
  Index hits = 0;
  for (std::size_t r = 0; r < top; ++r) {
    for (const auto& c : causal) hits += c.index == ranking[r] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(causal.size());
}

}  // namespace

std::vector<GwasSweepRow> run_gwas_sweep(const SweepConfig& cfg_in) {
  SweepConfig cfg = cfg_in;
  cfg.finalize();
  struct Job {
    std::string scenario;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const char* scenario : {"planted", "null"})
    for (int k = 0; k < cfg.n_seeds; ++k) jobs.push_back({scenario, cfg.base_seed + static_cast<std::uint64_t>(k)});

  std::vector<GwasSweepRow> rows(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    auto& row = rows[i];
    row.scenario = jobs[i].scenario;
    row.seed = jobs[i].seed;
    row.recall_lode = row.recall_coef = row.selected_fraction = row.chosen_lambda = kNaN;
    try {
      GenotypeSimConfig sim = cfg.gwas_sim;
      if (row.scenario == "null") {
        sim.n_causal = 0;
        sim.pop_effect = 0.0;
      }
      const auto geno = generate_genotypes(sim, RngSeed{row.seed, 1});
      GwasPipelineConfig pipe = cfg.gwas_pipeline;
      pipe.threads = 1;
      const auto result = run_gwas_pipeline(geno, pipe, RngSeed{row.seed, 2});

      std::vector<Index> by_effect;
      Vector coef(static_cast<Index>(result.ranked.size()));
      for (const auto& r : result.ranked) {
        by_effect.push_back(r.snp);
        coef(r.snp) = r.coef;
        row.selected += r.selected ? 1 : 0;
      }
      row.recall_lode = recall(by_effect, geno.causal_snps, cfg.recall_at);
      row.recall_coef = recall(rank_by_magnitude(coef), geno.causal_snps, cfg.recall_at);
      row.selected_fraction = static_cast<double>(row.selected) / static_cast<double>(result.ranked.size());
      row.chosen_lambda = result.chosen_lambda;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return rows;
}

namespace {

std::string cell(double v) { return std::isnan(v) ? "nan" : csv::format_double(v); }

// Errors may contain commas or quotes; keep the CSV rectangular.
std::string clean(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '"', '\'');
  return s;
}

double parse_cell(const std::string& s) { return s == "nan" || s.empty() ? kNaN : csv::parse_double(s); }

}  // namespace

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << kSweepHeader << '\n';
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.family << ',' << cell(r.gamma) << ',' << cell(r.sigma) << ','
        << cell(r.alpha) << ',' << cell(r.delta) << ',' << cell(r.step_size) << ',' << r.seed << ','
        << cell(r.rmse_lode) << ',' << cell(r.rmse_baseline) << ',' << r.diverged_count << ','
        << cell(r.mean_steps) << ',' << clean(r.error) << '\n';
  }
}

void write_gwas_sweep_csv(const std::vector<GwasSweepRow>& rows, std::ostream& out) {
  out << kGwasSweepHeader << '\n';
  for (const auto& r : rows) {
    out << "gwas," << r.scenario << ',' << r.seed << ',' << cell(r.recall_lode) << ',' << cell(r.recall_coef)
        << ',' << r.selected << ',' << cell(r.selected_fraction) << ',' << cell(r.chosen_lambda) << ','
        << clean(r.error) << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  std::string joined;
  for (std::size_t i = 0; i < table.header.size(); ++i) joined += (i ? "," : "") + table.header[i];
  if (joined != kSweepHeader) fail(Errc::MalformedFile, path.string() + ": not a sweep results file");
  std::vector<SweepRow> rows;
  for (const auto& c : table.rows) {
    SweepRow r;
    r.experiment = c[0];
    r.family = c[1];
    r.gamma = parse_cell(c[2]);
    r.sigma = parse_cell(c[3]);
    r.alpha = parse_cell(c[4]);
    r.delta = parse_cell(c[5]);
    r.step_size = parse_cell(c[6]);
    try {
      r.seed = std::stoull(c[7]);
      r.diverged_count = std::stoll(c[10]);
    } catch (const std::exception&) {
      fail(Errc::MalformedFile, path.string() + ": bad integer cell");
    }
    r.rmse_lode = parse_cell(c[8]);
    r.rmse_baseline = parse_cell(c[9]);
    r.mean_steps = parse_cell(c[11]);
    r.error = c[12];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<SweepRow>& rows) {
  using Key = std::tuple<std::string, std::string, double, double, double, double, double>;
  std::map<Key, std::vector<const SweepRow*>> groups;
  for (const auto& r : rows) {
    groups[{r.experiment, r.family, r.gamma, r.sigma, r.alpha, r.delta, r.step_size}].push_back(&r);
  }
  auto stats = [](const std::vector<double>& v) -> std::pair<double, double> {
    if (v.empty()) return {kNaN, kNaN};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, kNaN};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
  };

  std::vector<SummaryRow> out;
  for (auto& [key, members] : groups) {
    // Sort by seed so the floating-point sums do not depend on input order.
    std::sort(members.begin(), members.end(), [](const SweepRow* a, const SweepRow* b) { return a->seed < b->seed; });
    SummaryRow s;
    std::tie(s.experiment, s.family, s.gamma, s.sigma, s.alpha, s.delta, s.step_size) = key;
    std::vector<double> lode, base;
    double steps = 0.0;
    for (const auto* r : members) {
      if (!std::isnan(r->rmse_lode)) lode.push_back(r->rmse_lode);
      if (!std::isnan(r->rmse_baseline)) base.push_back(r->rmse_baseline);
      s.diverged_total += static_cast<double>(r->diverged_count);
      steps += r->mean_steps;
    }
    s.n = static_cast<Index>(members.size());
    std::tie(s.mean_lode, s.sd_lode) = stats(lode);
    std::tie(s.mean_baseline, s.sd_baseline) = stats(base);
    s.mean_steps = steps / static_cast<double>(members.size());
    out.push_back(s);
  }
  return out;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "experiment,family,gamma,sigma,alpha,delta,step_size,n,mean_rmse_lode,sd_rmse_lode,"
         "mean_rmse_baseline,sd_rmse_baseline,diverged_total,mean_steps\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.family << ',' << cell(r.gamma) << ',' << cell(r.sigma) << ','
        << cell(r.alpha) << ',' << cell(r.delta) << ',' << cell(r.step_size) << ',' << r.n << ','
        << cell(r.mean_lode) << ',' << cell(r.sd_lode) << ',' << cell(r.mean_baseline) << ','
        << cell(r.sd_baseline) << ',' << cell(r.diverged_total) << ',' << cell(r.mean_steps) << '\n';
  }
}

}  // namespace efc
