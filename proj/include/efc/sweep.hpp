#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "efc/causal_models.hpp"
#include "efc/gwas.hpp"
#include "efc/surrogate_flow.hpp"

namespace efc {

enum class Experiment { ConfoundingStrength, PositivitySigma, MismatchDelta, StepSize, Gwas };

const char* to_string(Experiment e) noexcept;
Experiment experiment_from_string(const std::string& name);

struct SweepConfig {
  Experiment experiment = Experiment::ConfoundingStrength;
  std::vector<Family> families{Family::A};
  std::vector<double> gammas;
  std::vector<double> sigmas;
  std::vector<double> alphas;
  std::vector<double> deltas;
  std::vector<double> step_sizes;
  Index dim = 20;
  double noise_sd = std::sqrt(0.1);
  Index n_train = 1000;
  Index n_eval = 1000;
  int n_seeds = 10;
  std::uint64_t base_seed = 0;
  FlowConfig flow;
  /// Step sizes refer to the evaluation-set mean objective, so each query
  /// moves with step_size / n_eval. Off: step_size applies per query.
  bool mean_objective_steps = true;
  /// Standard deviation of the evaluation draws. Unset: the cell's sigma.
  /// The positivity experiment fixes it at 1 so that only the training
  /// density around the queries changes with sigma.
  std::optional<double> eval_sigma;
  /// Ridge grid for 5-fold selection; a single entry is used as is.
  std::vector<double> krr_lambdas;
  double krr_offset = 1.0;
  int cv_folds = 5;
  bool allow_large_steps = false;
  unsigned threads = 0;

  /// GWAS experiment only.
  GenotypeSimConfig gwas_sim;
  GwasPipelineConfig gwas_pipeline;
  Index recall_at = 20;

  std::optional<std::filesystem::path> output;

  /// Fills empty grids with the experiment's defaults and checks invariants.
  void finalize();

  static SweepConfig defaults(Experiment e);
  static SweepConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// One cell x seed of a simulation sweep.
struct SweepRow {
  std::string experiment;
  std::string family;
  double gamma = 0, sigma = 0, alpha = 0, delta = 0, step_size = 0;
  std::uint64_t seed = 0;
  double rmse_lode = 0, rmse_baseline = 0;
  Index diverged_count = 0;
  double mean_steps = 0;
  std::string error;
};

inline constexpr const char* kSweepHeader =
    "experiment,family,gamma,sigma,alpha,delta,step_size,seed,rmse_lode,rmse_baseline,"
    "diverged_count,mean_steps,error";

/// One replicate of the synthetic GWAS study.
struct GwasSweepRow {
  std::string scenario;  // "planted" or "null"
  std::uint64_t seed = 0;
  double recall_lode = 0, recall_coef = 0;
  Index selected = 0;
  double selected_fraction = 0;
  double chosen_lambda = 0;
  std::string error;
};

inline constexpr const char* kGwasSweepHeader =
    "experiment,scenario,seed,recall_lode,recall_coef,selected_count,selected_fraction,"
    "chosen_lambda,error";

struct CellSpec {
  Family family = Family::A;
  double gamma = 1, sigma = 1, alpha = 1, delta = 0, step_size = 0.05;
  std::uint64_t seed = 0;
};

/// Runs a single simulation cell; failures are reported in the error column.
SweepRow run_cell(const SweepConfig& cfg, const CellSpec& cell);

/// All cells x seeds in grid order. Throws for the GWAS experiment.
std::vector<SweepRow> run_sweep(const SweepConfig& cfg);
std::vector<GwasSweepRow> run_gwas_sweep(const SweepConfig& cfg);

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);
void write_gwas_sweep_csv(const std::vector<GwasSweepRow>& rows, std::ostream& out);
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

struct SummaryRow {
  std::string experiment, family;
  double gamma = 0, sigma = 0, alpha = 0, delta = 0, step_size = 0;
  Index n = 0;
  double mean_lode = 0, sd_lode = 0, mean_baseline = 0, sd_baseline = 0;
  double diverged_total = 0, mean_steps = 0;
};

/// Per-cell mean and sample standard deviation across seeds, in first-seen
/// cell order after sorting by the grid columns. sd is NaN for a single seed.
std::vector<SummaryRow> summarize(const std::vector<SweepRow>& rows);
void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);

}  // namespace efc
