#pragma once

#include <string>
#include <vector>

#include "efc/confounder.hpp"
#include "efc/dataset.hpp"
#include "efc/regression.hpp"
#include "efc/rng.hpp"
#include "efc/surrogate_flow.hpp"

namespace efc {

struct CausalSnp {
  Index index = 0;
  double beta = 0.0;
};

/// Synthetic genotypes in {0, 0.5, 1} with binary phenotype and ground truth.
struct GenotypeData {
  Matrix genotypes;  // n x S
  Vector phenotype;  // n, in {0, 1}
  std::vector<int> pop_labels;
  std::vector<CausalSnp> causal_snps;
  Vector allele_freqs;  // ancestral frequencies, S
  Matrix population_freqs;  // n_pops x S, synthetic only

  void validate() const;
  Dataset as_dataset() const;
};

struct GenotypeSimConfig {
  Index n = 2000;
  Index snps = 200;
  int n_pops = 2;
  double fst = 0.1;
  Index n_causal = 10;
  double effect_size = 1.0;
  double pop_effect = 2.0;
  double prevalence = 3796.0 / 11950.0;

  void validate() const;
};

/// Balding-Nichols style simulation: ancestral p_s ~ U(0.05, 0.95), population
/// frequencies ~ Beta(p(1-F)/F, (1-p)(1-F)/F), genotype = mean of two
/// Bernoulli alleles. The phenotype logit is sum beta_j g_j + pop_effect *
/// centred population + intercept, with the intercept solved so the expected
/// prevalence matches `prevalence`. Causal effects get random signs.
GenotypeData generate_genotypes(const GenotypeSimConfig& cfg, RngSeed rng);

struct PcaConfounder {
  /// LinearMap with h(t) = W^T (t - p_hat).
  FunctionalConfounder confounder;
  Vector singular_values;          // top K, descending
  Matrix right_singular_vectors;   // S_kept x K, of the normalised matrix
  std::vector<Index> kept_columns; // original SNP index of each kept column
  Vector column_means;             // p_hat over all S columns
  Index components = 0;
  std::vector<std::string> warnings;
};

/// (G - p_hat) / sqrt(p_hat (1 - p_hat)) over the given columns.
Matrix normalize_genotypes(const Matrix& genotypes, const std::vector<Index>& columns,
                           const Vector& column_means);

/// Top-K SVD of the normalised genotype matrix, folded into raw-genotype
/// coordinates: W_s = V_s Sigma / sqrt(p_s (1 - p_s)). Monomorphic columns get
/// zero rows in W.
PcaConfounder build_pca_confounder(const Matrix& genotypes, Index components);

struct GwasPipelineConfig {
  Index components = 10;
  std::vector<double> lambda_grid;  // empty: half-decade grid 1e-4 .. 1e1
  int folds = 5;
  double train_fraction = 0.6;
  double threshold = 0.1;
  FlowConfig flow;
  unsigned threads = 0;

  std::vector<double> grid() const;
};

struct SnpEffectRow {
  Index snp = 0;
  double effect = 0.0;
  double coef = 0.0;
  bool selected = false;
};

struct GwasResult {
  std::vector<SnpEffectRow> ranked;  // by |effect| descending, then index
  double chosen_lambda = 0.0;
  CvResult cv;
  Index skipped = 0;
};

/// 60/40 split, CV over the lasso grid on the training rows, lasso fit on the
/// training rows, then per-SNP effects on all individuals.
GwasResult run_gwas_pipeline(const GenotypeData& geno, const GwasPipelineConfig& cfg, RngSeed rng);

/// SNP indices ordered by |value| descending, ties by index.
std::vector<Index> rank_by_magnitude(const Vector& values);

/// Genotype CSV: snp_0..snp_{S-1}, y; cells in {0, 0.5, 1, NA}. Missing cells
/// are imputed by sampling from the observed values of that column.
void save_genotypes(const GenotypeData& geno, const std::filesystem::path& path);
GenotypeData load_genotypes(const std::filesystem::path& path, RngSeed rng);

void save_ranked_effects(const GwasResult& result, const std::filesystem::path& path);

}  // namespace efc
