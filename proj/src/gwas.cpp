#include "efc/gwas.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "efc/csv.hpp"
#include "efc/errors.hpp"
#include "efc/estimators.hpp"
#include "efc/parallel.hpp"

namespace efc {

void GenotypeData::validate() const {
  const Index n = genotypes.rows();
  const Index S = genotypes.cols();
  require(n > 0 && S > 0, Errc::EmptyDataset, "genotype matrix is empty");
  for (Index i = 0; i < n; ++i) {
    for (Index s = 0; s < S; ++s) {
      const double g = genotypes(i, s);
      require(g == 0.0 || g == 0.5 || g == 1.0, Errc::InvalidArgument, "genotypes must be 0, 0.5 or 1");
    }
  }
  require(phenotype.size() == n, Errc::DimensionMismatch, "phenotype length must equal individual count");
  for (Index i = 0; i < n; ++i) {
    require(phenotype(i) == 0.0 || phenotype(i) == 1.0, Errc::InvalidArgument, "phenotype must be 0 or 1");
  }
  require(pop_labels.empty() || static_cast<Index>(pop_labels.size()) == n, Errc::DimensionMismatch,
          "population labels must cover every individual");
  for (const auto& c : causal_snps) {
    require(c.index >= 0 && c.index < S, Errc::InvalidArgument, "causal SNP index out of range");
  }
  require(allele_freqs.size() == 0 || allele_freqs.size() == S, Errc::DimensionMismatch,
          "allele frequencies must cover every SNP");
  for (Index s = 0; s < allele_freqs.size(); ++s) {
    require(allele_freqs(s) > 0.0 && allele_freqs(s) < 1.0, Errc::InvalidArgument,
            "allele frequencies must lie in (0, 1)");
  }
}

Dataset GenotypeData::as_dataset() const { return Dataset(genotypes, phenotype); }

void GenotypeSimConfig::validate() const {
  require(n >= 2 && snps >= 1, Errc::InvalidArgument, "need at least 2 individuals and 1 SNP");
  require(n_pops >= 2, Errc::InvalidArgument, "need at least 2 populations");
  require(fst > 0.0 && fst < 1.0, Errc::InvalidArgument, "F must lie in (0, 1)");
  require(n_causal >= 0 && n_causal <= snps, Errc::InvalidArgument, "causal count must be in [0, S]");
  require(std::isfinite(effect_size) && std::isfinite(pop_effect), Errc::InvalidArgument, "effects must be finite");
  require(prevalence > 0.0 && prevalence < 1.0, Errc::InvalidArgument, "prevalence must lie in (0, 1)");
}

namespace {

double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double beta_draw(Engine& engine, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(engine);
  const double y = gb(engine);
  const double s = x + y;
  return s > 0.0 ? x / s : 0.5;
}

// Intercept b with mean_i sigmoid(eta_i + b) = target; the left side is increasing in b.
double solve_intercept(const Vector& eta, double target) {
  double lo = -50.0, hi = 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (Index i = 0; i < eta.size(); ++i) mean += sigmoid(eta(i) + mid);
    mean /= static_cast<double>(eta.size());
    (mean < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

GenotypeData generate_genotypes(const GenotypeSimConfig& cfg, RngSeed rng) {
  cfg.validate();
  const Index n = cfg.n;
  const Index S = cfg.snps;
  GenotypeData g;

  auto freq_engine = make_engine(rng.substream(1));
  std::uniform_real_distribution<double> anc(0.05, 0.95);
  g.allele_freqs.resize(S);
  for (Index s = 0; s < S; ++s) g.allele_freqs(s) = anc(freq_engine);
  const double shape = (1.0 - cfg.fst) / cfg.fst;
  Matrix pop_freqs(cfg.n_pops, S);
  for (int k = 0; k < cfg.n_pops; ++k) {
    for (Index s = 0; s < S; ++s) {
      const double p = g.allele_freqs(s);
      pop_freqs(k, s) = beta_draw(freq_engine, p * shape, (1.0 - p) * shape);
    }
  }
  g.population_freqs = pop_freqs;

  // Balanced population sizes, randomly assigned.
  auto label_engine = make_engine(rng.substream(2));
  g.pop_labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) g.pop_labels[static_cast<std::size_t>(i)] = static_cast<int>(i % cfg.n_pops);
  std::shuffle(g.pop_labels.begin(), g.pop_labels.end(), label_engine);

  auto geno_engine = make_engine(rng.substream(3));
  g.genotypes.resize(n, S);
  for (Index i = 0; i < n; ++i) {
    const int k = g.pop_labels[static_cast<std::size_t>(i)];
    for (Index s = 0; s < S; ++s) {
      std::bernoulli_distribution allele(pop_freqs(k, s));
      const int count = static_cast<int>(allele(geno_engine)) + static_cast<int>(allele(geno_engine));
      g.genotypes(i, s) = 0.5 * count;
    }
  }

  auto causal_engine = make_engine(rng.substream(4));
  std::vector<Index> all(static_cast<std::size_t>(S));
  std::iota(all.begin(), all.end(), Index{0});
  std::shuffle(all.begin(), all.end(), causal_engine);
  std::bernoulli_distribution sign(0.5);
  for (Index c = 0; c < cfg.n_causal; ++c) {
    g.causal_snps.push_back({all[static_cast<std::size_t>(c)], sign(causal_engine) ? cfg.effect_size : -cfg.effect_size});
  }
  std::sort(g.causal_snps.begin(), g.causal_snps.end(),
            [](const CausalSnp& a, const CausalSnp& b) { return a.index < b.index; });

  const double pop_mid = 0.5 * static_cast<double>(cfg.n_pops - 1);
  Vector eta(n);
  for (Index i = 0; i < n; ++i) {
    double z = cfg.pop_effect * (static_cast<double>(g.pop_labels[static_cast<std::size_t>(i)]) - pop_mid);
    for (const auto& c : g.causal_snps) z += c.beta * g.genotypes(i, c.index);
    eta(i) = z;
  }
  const double intercept = solve_intercept(eta, cfg.prevalence);
  auto pheno_engine = make_engine(rng.substream(5));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  g.phenotype.resize(n);
  for (Index i = 0; i < n; ++i) g.phenotype(i) = unif(pheno_engine) < sigmoid(eta(i) + intercept) ? 1.0 : 0.0;
  return g;
}

Matrix normalize_genotypes(const Matrix& genotypes, const std::vector<Index>& columns, const Vector& column_means) {
  Matrix out(genotypes.rows(), static_cast<Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const Index s = columns[k];
    const double p = column_means(s);
    const double scale = std::sqrt(p * (1.0 - p));
    require(scale > 0.0, Errc::InvalidArgument, "cannot normalise a monomorphic column");
    out.col(static_cast<Index>(k)) = (genotypes.col(s).array() - p) / scale;
  }
  return out;
}

PcaConfounder build_pca_confounder(const Matrix& genotypes, Index components) {
  require(genotypes.rows() > 0 && genotypes.cols() > 0, Errc::EmptyDataset, "genotype matrix is empty");
  require(genotypes.allFinite(), Errc::NonFinite, "genotypes must be finite");
  const Vector means = genotypes.colwise().mean().transpose();
  std::vector<Index> kept_columns;
  std::vector<std::string> warnings;
  for (Index s = 0; s < genotypes.cols(); ++s) {
    const double p = means(s);
    if (p > 0.0 && p < 1.0) {
      kept_columns.push_back(s);
    } else {
      warnings.push_back("dropped monomorphic SNP " + std::to_string(s));
    }
  }
  const auto kept = static_cast<Index>(kept_columns.size());
  require(components >= 1 && components <= std::min(genotypes.rows(), kept), Errc::InvalidArgument,
          "component count must be in [1, min(n, polymorphic SNPs)]");

  const Matrix norm = normalize_genotypes(genotypes, kept_columns, means);
  Eigen::BDCSVD<Matrix> svd(norm, Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success || !svd.singularValues().allFinite()) {
    fail(Errc::SvdFailure, "SVD of the normalised genotype matrix failed");
  }
  const Vector sv = svd.singularValues().head(components);
  const Matrix v = svd.matrixV().leftCols(components);

  Matrix w = Matrix::Zero(genotypes.cols(), components);
  for (Index k = 0; k < kept; ++k) {
    const Index s = kept_columns[static_cast<std::size_t>(k)];
    const double p = means(s);
    w.row(s) = v.row(k).cwiseProduct(sv.transpose()) / std::sqrt(p * (1.0 - p));
  }
  return PcaConfounder{FunctionalConfounder::linear_map(std::move(w), means),
                       sv,
                       v,
                       std::move(kept_columns),
                       means,
                       components,
                       std::move(warnings)};
}

std::vector<double> GwasPipelineConfig::grid() const {
  if (!lambda_grid.empty()) return lambda_grid;
  std::vector<double> g;
  for (int k = 0; k <= 10; ++k) g.push_back(std::pow(10.0, -4.0 + 0.5 * k));
  return g;
}

std::vector<Index> rank_by_magnitude(const Vector& values) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return std::abs(values(a)) > std::abs(values(b)); });
  return order;
}

GwasResult run_gwas_pipeline(const GenotypeData& geno, const GwasPipelineConfig& cfg, RngSeed rng) {
  geno.validate();
  require(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0, Errc::InvalidArgument,
          "train fraction must lie in (0, 1)");
  require(cfg.threshold >= 0.0, Errc::InvalidArgument, "threshold must be >= 0");
  const Index n = geno.genotypes.rows();
  const Index S = geno.genotypes.cols();

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto split_engine = make_engine(rng.substream(1));
  std::shuffle(order.begin(), order.end(), split_engine);
  const auto n_train = std::clamp<Index>(static_cast<Index>(std::llround(cfg.train_fraction * n)), 1, n);
  std::vector<Index> train(order.begin(), order.begin() + n_train);
  std::sort(train.begin(), train.end());

  const Dataset all = geno.as_dataset();
  const Dataset train_set = all.subset(train);
  const auto pca = build_pca_confounder(geno.genotypes, cfg.components);

  GwasResult result;
  result.cv = cross_validate(train_set, cfg.folds, cfg.grid(), ModelKind::LogisticLasso, rng.substream(2));
  result.chosen_lambda = result.cv.chosen_lambda;
  const OutcomeModel model = fit_logistic_lasso(train_set, result.chosen_lambda);
  const Vector& coef = model.logistic_lasso().weights;

  // h over everyone once; every SNP reuses it.
  Matrix h_all(n, pca.components);
  for (Index i = 0; i < n; ++i) h_all.row(i) = pca.confounder.value(all.point(i)).transpose();
  const Dataset effect_data(geno.genotypes, geno.phenotype, h_all);

  std::vector<GwasEffect> effects(static_cast<std::size_t>(S));
  const RngSeed person_rng = rng.substream(3);
  parallel_for(static_cast<std::size_t>(S), cfg.threads, [&](std::size_t s) {
    effects[s] = gwas_snp_effect(model, pca.confounder, effect_data, static_cast<Index>(s), cfg.flow, person_rng);
  });

  Vector values(S);
  for (Index s = 0; s < S; ++s) {
    values(s) = effects[static_cast<std::size_t>(s)].value;
    result.skipped += effects[static_cast<std::size_t>(s)].skipped;
  }
  for (Index s : rank_by_magnitude(values)) {
    result.ranked.push_back({s, values(s), coef(s), std::abs(values(s)) > cfg.threshold});
  }
  return result;
}

void save_genotypes(const GenotypeData& geno, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  for (Index s = 0; s < geno.genotypes.cols(); ++s) out << "snp_" << s << ',';
  out << "y\n";
  for (Index i = 0; i < geno.genotypes.rows(); ++i) {
    for (Index s = 0; s < geno.genotypes.cols(); ++s) out << csv::format_double(geno.genotypes(i, s)) << ',';
    out << csv::format_double(geno.phenotype(i)) << '\n';
  }
}

GenotypeData load_genotypes(const std::filesystem::path& path, RngSeed rng) {
  const auto table = csv::read(path);
  const auto& header = table.header;
  if (header.size() < 2 || header.back() != "y") fail(Errc::MalformedFile, path.string() + ": last column must be 'y'");
  const Index S = static_cast<Index>(header.size()) - 1;
  for (Index s = 0; s < S; ++s) {
    if (header[static_cast<std::size_t>(s)] != "snp_" + std::to_string(s)) {
      fail(Errc::MalformedFile, path.string() + ": expected column snp_" + std::to_string(s));
    }
  }
  if (table.rows.empty()) fail(Errc::EmptyFile, path.string() + " has no data rows");
  const auto n = static_cast<Index>(table.rows.size());

  GenotypeData g;
  g.genotypes.resize(n, S);
  g.phenotype.resize(n);
  std::vector<std::pair<Index, Index>> missing;
  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    for (Index s = 0; s < S; ++s) {
      const auto& cell = row[static_cast<std::size_t>(s)];
      if (cell == "NA") {
        g.genotypes(i, s) = std::numeric_limits<double>::quiet_NaN();
        missing.emplace_back(i, s);
      } else {
        g.genotypes(i, s) = csv::parse_double(cell);
      }
    }
    g.phenotype(i) = csv::parse_double(row.back());
  }

  // Marginal-sampling imputation: a missing cell takes the value of a uniformly
  // chosen observed individual in the same column.
  std::vector<std::vector<double>> observed(static_cast<std::size_t>(S));
  for (Index s = 0; s < S; ++s) {
    for (Index r = 0; r < n; ++r) {
      if (!std::isnan(g.genotypes(r, s))) observed[static_cast<std::size_t>(s)].push_back(g.genotypes(r, s));
    }
  }
  auto engine = make_engine(rng);
  for (const auto& [i, s] : missing) {
    const auto& pool = observed[static_cast<std::size_t>(s)];
    if (pool.empty()) fail(Errc::MalformedFile, "SNP column " + std::to_string(s) + " has no observed values");
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    g.genotypes(i, s) = pool[pick(engine)];
  }
  g.validate();
  return g;
}

void save_ranked_effects(const GwasResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  out << "snp,effect,coef,selected_flag\n";
  for (const auto& r : result.ranked) {
    out << r.snp << ',' << csv::format_double(r.effect) << ',' << csv::format_double(r.coef) << ','
        << (r.selected ? 1 : 0) << '\n';
  }
}

}  // namespace efc
