#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "efc/gwas.hpp"
#include "helpers.hpp"

using namespace efc;
using doctest::Approx;
using efc::test::error_code;

namespace {
// Mean silhouette of the best 2-means split of scalar values.
double two_means_silhouette(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  std::size_t best = 1;
  double best_ss = INFINITY;
  for (std::size_t cut = 1; cut < n; ++cut) {
    auto ss = [&](std::size_t a, std::size_t b) {
      const double m = std::accumulate(v.begin() + a, v.begin() + b, 0.0) / static_cast<double>(b - a);
      double s = 0;
      for (std::size_t i = a; i < b; ++i) s += (v[i] - m) * (v[i] - m);
      return s;
    };
    const double total = ss(0, cut) + ss(cut, n);
    if (total < best_ss) {
      best_ss = total;
      best = cut;
    }
  }
  double sil = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double own = 0, other = 0;
    const bool left = i < best;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      ((j < best) == left ? own : other) += std::abs(v[i] - v[j]);
    }
    const double own_n = static_cast<double>(left ? best - 1 : n - best - 1);
    const double other_n = static_cast<double>(left ? n - best : best);
    const double a = own_n > 0 ? own / own_n : 0.0;
    const double b = other / other_n;
    sil += (b - a) / std::max(a, b);
  }
  return sil / static_cast<double>(n);
}
}  // namespace

TEST_CASE("genotype simulation") {
  SUBCASE("small F keeps population frequencies near ancestral") {
    GenotypeSimConfig c;
    c.n = 20;
    c.snps = 1000;
    c.fst = 1e-4;
    const auto g = generate_genotypes(c, {1, 0});
    for (int k = 0; k < c.n_pops; ++k) {
      CHECK((g.population_freqs.row(k).transpose() - g.allele_freqs).cwiseAbs().maxCoeff() <= 0.02);
    }
  }
  SUBCASE("null model has no SNP-phenotype correlation beyond 4/sqrt(n)") {
    GenotypeSimConfig c;
    c.n_causal = 0;
    c.pop_effect = 0.0;
    const auto g = generate_genotypes(c, {2, 0});
    const Vector y = g.phenotype.array() - g.phenotype.mean();
    for (Index s = 0; s < c.snps; ++s) {
      const Vector x = g.genotypes.col(s).array() - g.genotypes.col(s).mean();
      if (x.norm() == 0.0) continue;
      CHECK(std::abs(x.dot(y) / (x.norm() * y.norm())) <= 4.0 / std::sqrt(static_cast<double>(c.n)));
    }
  }
  SUBCASE("deterministic, valid, and near the target prevalence") {
    GenotypeSimConfig c;
    c.n = 500;
    c.snps = 50;
    const auto a = generate_genotypes(c, {3, 0});
    const auto b = generate_genotypes(c, {3, 0});
    CHECK(a.genotypes == b.genotypes);
    CHECK(a.phenotype == b.phenotype);
    a.validate();
    CHECK(a.causal_snps.size() == 10);
    CHECK(std::abs(a.phenotype.mean() - c.prevalence) <= 0.08);
    CHECK((a.allele_freqs.array() > 0.05).all());
  }
  SUBCASE("config validation") {
    GenotypeSimConfig c;
    c.fst = 1.0;
    CHECK(error_code([&] { c.validate(); }) == Errc::InvalidArgument);
    c = {};
    c.n_pops = 1;
    CHECK(error_code([&] { c.validate(); }) == Errc::InvalidArgument);
  }
}

TEST_CASE("PCA confounder") {
  SUBCASE("two separated populations give a bimodal first component") {
    GenotypeSimConfig c;
    c.n = 400;
    c.snps = 200;
    c.fst = 0.3;
    const auto g = generate_genotypes(c, {4, 0});
    const auto pca = build_pca_confounder(g.genotypes, 1);
    std::vector<double> h;
    for (Index i = 0; i < c.n; ++i) h.push_back(pca.confounder.value(g.genotypes.row(i).transpose())(0));
    CHECK(two_means_silhouette(h) >= 0.5);
  }
  SUBCASE("full rank reconstructs the normalised matrix and folds into raw coordinates") {
    GenotypeSimConfig c;
    c.n = 30;
    c.snps = 12;
    const auto g = generate_genotypes(c, {5, 0});
    const Index K = std::min(c.n, c.snps);
    const auto pca = build_pca_confounder(g.genotypes, K);
    const Matrix norm = normalize_genotypes(g.genotypes, pca.kept_columns, pca.column_means);
    // Rows of norm V = U Sigma, so the reconstruction is (norm V) V^T.
    const Matrix rec = norm * pca.right_singular_vectors * pca.right_singular_vectors.transpose();
    CHECK((norm - rec).norm() <= 1e-6 * norm.norm());
    for (Index i = 1; i < pca.singular_values.size(); ++i) {
      CHECK(pca.singular_values(i) <= pca.singular_values(i - 1));
    }
    // h of a raw genotype row equals its projected normalised row, scaled per the fold.
    const Vector h0 = pca.confounder.value(g.genotypes.row(0).transpose());
    const Vector expect = (norm.row(0) * pca.right_singular_vectors).transpose().cwiseProduct(pca.singular_values);
    CHECK((h0 - expect).norm() <= 1e-9 * (1 + expect.norm()));
  }
  SUBCASE("permuting individuals permutes h") {
    GenotypeSimConfig c;
    c.n = 60;
    c.snps = 25;
    const auto g = generate_genotypes(c, {6, 0});
    Matrix perm_g(c.n, c.snps);
    for (Index i = 0; i < c.n; ++i) perm_g.row(i) = g.genotypes.row((i * 7) % c.n);
    const auto a = build_pca_confounder(g.genotypes, 3);
    const auto b = build_pca_confounder(perm_g, 3);
    for (Index i = 0; i < c.n; ++i) {
      const Vector ha = a.confounder.value(g.genotypes.row((i * 7) % c.n).transpose()).cwiseAbs();
      const Vector hb = b.confounder.value(perm_g.row(i).transpose()).cwiseAbs();
      CHECK((ha - hb).norm() <= 1e-8 * (1 + ha.norm()));
    }
  }
  SUBCASE("linear with constant gradient") {
    GenotypeSimConfig c;
    c.n = 50;
    c.snps = 20;
    const auto g = generate_genotypes(c, {7, 0});
    const auto pca = build_pca_confounder(g.genotypes, 4);
    CHECK(pca.confounder.is_linear());
    CHECK(pca.confounder.gradient(g.genotypes.row(0).transpose()) ==
          pca.confounder.gradient(g.genotypes.row(9).transpose()));
    const InterventionQuery q{g.genotypes.row(3).transpose(),
                              pca.confounder.value(g.genotypes.row(8).transpose())};
    CHECK(closed_form_linear(pca.confounder, q).final_mismatch <= 1e-18);
  }
  SUBCASE("monomorphic columns are dropped with a warning") {
    GenotypeSimConfig c;
    c.n = 40;
    c.snps = 10;
    auto g = generate_genotypes(c, {8, 0});
    g.genotypes.col(2).setConstant(0.5);
    g.genotypes.col(2)(0) = 0.5;
    g.genotypes.col(6).setZero();
    const auto pca = build_pca_confounder(g.genotypes, 3);
    // Column 2 is constant but polymorphic in allele frequency, so it stays.
    CHECK(pca.kept_columns.size() == 9);
    CHECK(pca.warnings.size() == 1);
    CHECK(pca.confounder.linear_weights().row(6).norm() == 0.0);
  }
  SUBCASE("too many components") {
    const Matrix g = Matrix::Constant(4, 3, 0.5);
    CHECK(error_code([&] { build_pca_confounder(g, 4); }) == Errc::InvalidArgument);
  }
}

TEST_CASE("ranking and pipeline") {
  Vector v(5);
  v << 0.1, -3, 3, 0, 2;
  CHECK(rank_by_magnitude(v) == std::vector<Index>{1, 2, 4, 0, 3});

  GenotypeSimConfig c;
  c.n = 300;
  c.snps = 30;
  c.n_causal = 3;
  c.effect_size = 2.0;
  const auto g = generate_genotypes(c, {9, 0});
  GwasPipelineConfig pc;
  pc.components = 3;
  pc.threads = 1;
  const auto a = run_gwas_pipeline(g, pc, {9, 1});
  pc.threads = 2;
  const auto b = run_gwas_pipeline(g, pc, {9, 1});
  REQUIRE(a.ranked.size() == 30);
  for (std::size_t i = 0; i < a.ranked.size(); ++i) {
    CHECK(a.ranked[i].snp == b.ranked[i].snp);
    CHECK(a.ranked[i].effect == b.ranked[i].effect);
    CHECK(a.ranked[i].selected == (std::abs(a.ranked[i].effect) > pc.threshold));
    if (i > 0) CHECK(std::abs(a.ranked[i].effect) <= std::abs(a.ranked[i - 1].effect));
  }
  CHECK(pc.grid().size() == 11);
  CHECK(pc.grid().front() == Approx(1e-4));
  CHECK(pc.grid().back() == Approx(10.0));
}

TEST_CASE("genotype files") {
  const auto dir = test::scratch_dir("gwas_io");
  GenotypeSimConfig c;
  c.n = 20;
  c.snps = 4;
  c.n_causal = 1;
  const auto g = generate_genotypes(c, {10, 0});
  save_genotypes(g, dir / "g.csv");
  const auto back = load_genotypes(dir / "g.csv", {1, 0});
  CHECK(back.genotypes == g.genotypes);
  CHECK(back.phenotype == g.phenotype);

  test::write_text(dir / "na.csv", "snp_0,snp_1,y\n0,1,1\nNA,1,0\n1,NA,1\n1,0.5,0\n");
  const auto imp = load_genotypes(dir / "na.csv", {2, 0});
  CHECK((imp.genotypes(1, 0) == 0.0 || imp.genotypes(1, 0) == 1.0));
  CHECK((imp.genotypes(2, 1) == 1.0 || imp.genotypes(2, 1) == 0.5));

  test::write_text(dir / "bad.csv", "snp_0,y\n0.3,1\n");
  CHECK(error_code([&] { load_genotypes(dir / "bad.csv", {}); }) == Errc::InvalidArgument);

  GwasResult r;
  r.ranked = {{2, 0.5, 0.4, true}, {0, -0.05, 0.0, false}};
  save_ranked_effects(r, dir / "r.csv");
  std::ifstream in(dir / "r.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "snp,effect,coef,selected_flag");
}
