#include <doctest.h>

#include <cmath>

#include "efc/causal_models.hpp"
#include "efc/diagnostics.hpp"
#include "efc/estimators.hpp"
#include "helpers.hpp"

using namespace efc;
using doctest::Approx;
using efc::test::error_code;

namespace {
ModelSpec small_spec(Family f, double gamma = 1.0, double alpha = 1.0) {
  ModelSpec s;
  s.family = f;
  s.dim = 4;
  s.gamma = gamma;
  s.alpha = alpha;
  return s;
}

// Degree-2 targets are exactly representable, so a noise-free fit with a tiny
// ridge reproduces E[y | t] everywhere.
OutcomeModel near_oracle(const ModelSpec& s) {
  auto q = s;
  q.noise_sd = 0.0;
  return fit_krr(sample_model(q, 200, {99, 0}), 1e-9);
}

FlowConfig fine() {
  FlowConfig c;
  c.step_size = 0.01;
  c.rel_tolerance = 1e-8;
  return c;
}
}  // namespace

TEST_CASE("LODE with h_target = h(t*) is the plain prediction") {
  const auto s = small_spec(Family::B);
  const auto m = near_oracle(s);
  std::mt19937_64 engine(1);
  const Vector t = test::gaussian_vector(4, engine);
  const InterventionQuery q{t, s.confounder().value(t)};
  const auto e = lode_conditional_effect(m, s.confounder(), q, FlowConfig{});
  CHECK(*e.value == m.predict(t));
  CHECK(*baseline_conditional_effect(m, q).value == *e.value);
  CHECK(e.method == EstimateMethod::Lode);
}

TEST_CASE("LODE recovers the conditional effect with an exact outcome model") {
  std::mt19937_64 engine(2);
  for (auto f : {Family::A, Family::B}) {
    const auto s = small_spec(f, 1.5);
    const auto m = near_oracle(s);
    const auto conf = s.confounder();
    int baseline_worse = 0;
    FlowConfig cfg = fine();
    cfg.record_trajectory = true;
    for (int rep = 0; rep < 30; ++rep) {
      const Vector t = test::gaussian_vector(4, engine);
      const double h2 = conf.value(test::gaussian_vector(4, engine))(0);
      const InterventionQuery q{t, Vector::Constant(1, h2)};
      const auto e = lode_conditional_effect(m, conf, q, cfg);
      REQUIRE(e.value);
      const double truth = true_conditional_effect(s, t, h2);
      if (f == Family::A) {
        CHECK(std::abs(*e.value - truth) <= 1e-3);
      } else {
        // Curved level set: Euler drift is bounded by the accumulation term.
        const auto b = surrogate_error_bound(analytic_constants(s, 1e3), e.surrogate, cfg);
        CHECK(std::abs(*e.value - truth) <= b.total + 1e-6);
      }
      if (std::abs(*baseline_conditional_effect(m, q).value - truth) >= std::abs(*e.value - truth)) ++baseline_worse;
    }
    CHECK(baseline_worse >= 27);
  }
}

TEST_CASE("traditional CI embedding") {
  // t = [a; z] with h(t) = z.
  std::mt19937_64 engine(3);
  Matrix pts(150, 3);
  Vector y(150);
  for (Index i = 0; i < 150; ++i) {
    const Vector t = test::gaussian_vector(3, engine);
    pts.row(i) = t.transpose();
    y(i) = t(0) - 2 * t(1) + t(2) * t(0) + 0.1 * test::gaussian_vector(1, engine)(0);
  }
  const auto m = fit_krr(Dataset(pts, y), 0.01);
  Matrix w = Matrix::Zero(3, 1);
  w(2, 0) = 1.0;
  const auto conf = FunctionalConfounder::linear_map(w);
  Vector t(3);
  t << 0.4, -0.3, 2.0;
  const auto e = lode_conditional_effect(m, conf, {t, Vector::Constant(1, -0.75)}, FlowConfig{});
  Vector expect(3);
  expect << 0.4, -0.3, -0.75;
  CHECK(e.surrogate.t_hat == expect);
  CHECK(*e.value == m.predict(expect));
}

TEST_CASE("average effect") {
  const auto s = small_spec(Family::A);
  const auto m = near_oracle(s);
  const auto conf = s.confounder();
  Vector t(4);
  t << 0.5, -0.2, 0.1, 0.3;

  SUBCASE("single sample equals the conditional estimate") {
    Matrix h(1, 1);
    h << 0.8;
    const auto a = lode_average_effect(m, conf, t, h, FlowConfig{});
    CHECK(a.value == *lode_conditional_effect(m, conf, {t, h.row(0).transpose()}, FlowConfig{}).value);
    CHECK(a.used == 1);
  }
  SUBCASE("arithmetic mean of conditional estimates") {
    Matrix h(3, 1);
    h << -1, 0.25, 2;
    double sum = 0;
    for (Index i = 0; i < 3; ++i) sum += *lode_conditional_effect(m, conf, {t, h.row(i).transpose()}, FlowConfig{}).value;
    CHECK(lode_average_effect(m, conf, t, h, FlowConfig{}).value == sum / 3.0);
  }
  SUBCASE("matches the analytic average") {
    const auto draws = sample_model(s, 100000, {4, 0});
    const auto a = lode_average_effect(m, conf, t, *draws.confounder_cache(), FlowConfig{});
    CHECK(std::abs(a.value - (direct_effect(s, t) + 1.0)) <= 0.02);
  }
  SUBCASE("alpha zero leaves only the direct part") {
    const auto s0 = small_spec(Family::A, 1.0, 0.0);
    const auto m0 = near_oracle(s0);
    const auto draws = sample_model(s0, 100000, {5, 0});
    const auto a = lode_average_effect(m0, s0.confounder(), t, *draws.confounder_cache(), FlowConfig{});
    CHECK(std::abs(a.value - direct_effect(s0, t)) <= 0.02);
  }
  SUBCASE("all diverged") {
    const auto sb = small_spec(Family::B, 3.0);
    FlowConfig wild;
    wild.step_size = 10.0;
    Matrix h(2, 1);
    h << 40, -40;
    Vector tb(4);
    tb << 2, 1, -1, 2;
    CHECK(error_code([&] { lode_average_effect(near_oracle(sb), sb.confounder(), tb, h, wild); }) ==
          Errc::AllDiverged);
  }
}

TEST_CASE("functional effect") {
  auto fe = [](double alpha, double g_star, std::uint64_t seed) {
    ModelSpec s;
    s.alpha = alpha;
    const auto d = sample_model(s, 1000, {seed, 0});
    Vector g(d.size());
    for (Index i = 0; i < d.size(); ++i) g(i) = direct_effect(s, d.point(i));
    return std::pair{functional_effect(d, g, *d.confounder_cache(), g_star), d};
  };
  // Single draws carry sampling error of mean(h^2 + 2h) (sd about 0.08 at n=1000),
  // so compare each draw with its in-sample target and the seed average with the population one.
  for (double g_star : {-1.0, 0.0, 1.0}) {
    double avg1 = 0, avg0 = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto [est, d] = fe(1.0, g_star, seed);
      const Vector h = d.confounder_cache()->col(0);
      CHECK(std::abs(est - (g_star + (h.array().square() + 2 * h.array()).mean())) <= 0.05);
      avg1 += est / 5;
      const auto [est0, d0] = fe(0.0, g_star, seed + 10);
      CHECK(std::abs(est0 - (g_star + d0.confounder_cache()->col(0).mean())) <= 0.05);
      avg0 += est0 / 5;
    }
    CHECK(std::abs(avg1 - (g_star + 1.0)) <= 0.1);
    CHECK(std::abs(avg0 - g_star) <= 0.1);
  }
  ModelSpec s;
  const auto d = sample_model(s, 1000, {3, 0});
  Vector g(d.size());
  for (Index i = 0; i < d.size(); ++i) g(i) = direct_effect(s, d.point(i));
  CHECK(std::abs(functional_effect(d, g, *d.confounder_cache(), g.mean()) - d.outcomes().mean()) <= 0.1);

  const Vector h = d.confounder_cache()->col(0);
  CHECK(error_code([&] { functional_effect(d, 2.0 * h, *d.confounder_cache(), 0.0); }) == Errc::DegenerateDesign);
}

TEST_CASE("GWAS SNP effect") {
  std::mt19937_64 engine(6);
  std::uniform_int_distribution<int> geno(0, 2);
  const Index n = 60, snps = 5;
  Matrix g(n, snps);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < snps; ++j) g(i, j) = 0.5 * geno(engine);
  g.col(4) = g.col(3);
  const Dataset data(g);

  Matrix w(snps, 2);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = test::gaussian_vector(1, engine)(0);
  w.row(1).setZero();
  const auto conf = FunctionalConfounder::linear_map(w, g.colwise().mean().transpose());

  SUBCASE("zero weights give zero effect") {
    const OutcomeModel m(LogisticLasso{Vector::Zero(snps), 0.3, 0.0});
    for (Index j = 0; j < snps; ++j) CHECK(gwas_snp_effect(m, conf, data, j, FlowConfig{}, {1, 0}).value == 0.0);
  }
  SUBCASE("SNP outside the confounder span in the rare-outcome limit") {
    // log P1/P0 tends to the log-odds difference as P -> 0.
    Vector wt = Vector::Zero(snps);
    wt(1) = 0.8;
    wt(0) = -0.3;
    // Intercept kept above the 1e-12 probability clamp.
    const OutcomeModel m(LogisticLasso{wt, -20.0, 0.0});
    CHECK(std::abs(gwas_snp_effect(m, conf, data, 1, FlowConfig{}, {1, 0}).value - 0.8) <= 1e-7);
  }
  SUBCASE("probability-ratio form away from the rare limit") {
    Vector wt = Vector::Zero(snps);
    wt(1) = 0.8;
    const OutcomeModel m(LogisticLasso{wt, 0.0, 0.0});
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    CHECK(gwas_snp_effect(m, conf, data, 1, FlowConfig{}, {1, 0}).value ==
          Approx(std::log(sig(0.8) / sig(0.0))).epsilon(1e-12));
  }
  SUBCASE("identical columns get identical effects") {
    Vector wt = Vector::Constant(snps, 0.4);
    wt(3) = wt(4) = 0.9;
    Matrix w2 = w;
    w2.row(4) = w2.row(3);
    const auto conf2 = FunctionalConfounder::linear_map(w2, g.colwise().mean().transpose());
    const OutcomeModel m(LogisticLasso{wt, -0.5, 0.0});
    CHECK(gwas_snp_effect(m, conf2, data, 3, FlowConfig{}, {2, 0}).value ==
          Approx(gwas_snp_effect(m, conf2, data, 4, FlowConfig{}, {2, 0}).value).epsilon(1e-12));
  }
  SUBCASE("invariant to person order with fixed per-person streams") {
    const OutcomeModel m(LogisticLasso{Vector::LinSpaced(snps, -1, 1), 0.2, 0.0});
    std::vector<Index> perm(n);
    std::vector<std::uint64_t> streams(n), streams_perm(n);
    for (Index i = 0; i < n; ++i) {
      perm[i] = (i * 7) % n;
      streams[i] = static_cast<std::uint64_t>(i);
    }
    for (Index i = 0; i < n; ++i) streams_perm[i] = streams[perm[i]];
    const double a = gwas_snp_effect(m, conf, data, 2, FlowConfig{}, {3, 0}, streams).value;
    const double b = gwas_snp_effect(m, conf, data.subset(perm), 2, FlowConfig{}, {3, 0}, streams_perm).value;
    CHECK(a == Approx(b).epsilon(1e-12));
  }
  SUBCASE("errors") {
    const OutcomeModel m(LogisticLasso{Vector::Zero(snps), 0.0, 0.0});
    CHECK(error_code([&] { gwas_snp_effect(m, conf, data, snps, FlowConfig{}, {}); }) == Errc::InvalidArgument);
  }
}
