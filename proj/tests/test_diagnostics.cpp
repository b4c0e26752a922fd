#include <doctest.h>

#include <cmath>

#include "efc/causal_models.hpp"
#include "efc/diagnostics.hpp"
#include "helpers.hpp"

using namespace efc;
using doctest::Approx;
using efc::test::error_code;

TEST_CASE("C-red residual of a violating field") {
  const auto conf = FunctionalConfounder::linear_sum(1.0, 4);
  // f(t, .) = h(t)^2 read through the first argument.
  const OutcomeGradient f = [&](const Vector& t, const Vector&) -> Vector {
    return 2.0 * conf.value(t)(0) * conf.gradient(t).col(0);
  };
  const Vector t = Vector::Constant(4, 0.5);  // h(t) = 1
  CHECK(conf.value(t)(0) == Approx(1.0));
  CHECK(cred_residual(f, conf, {{t, Vector::Zero(1)}}) == Approx(2.0).epsilon(1e-12));

  const auto conf3 = FunctionalConfounder::linear_sum(3.0, 4);
  const OutcomeGradient f3 = [&](const Vector& x, const Vector&) -> Vector {
    return 2.0 * conf3.value(x)(0) * conf3.gradient(x).col(0);
  };
  const Vector t3 = Vector::Constant(4, 0.25);
  const double h = conf3.value(t3)(0);
  CHECK(cred_residual(f3, conf3, {{t3, Vector::Zero(1)}}) == Approx(2.0 * 9.0 * std::abs(h)).epsilon(1e-12));
}

TEST_CASE("C-red is invariant to rescaling h") {
  std::mt19937_64 engine(12);
  ModelSpec s;
  s.family = Family::B;
  s.dim = 6;
  const auto grad = [&](const Vector& t, const Vector& h2) { return conditional_effect_gradient(s, t, h2(0)); };
  std::vector<CredPoint> pts;
  for (int i = 0; i < 100; ++i) pts.push_back({test::gaussian_vector(6, engine), Vector::Constant(1, 0.3)});
  CHECK(cred_residual(grad, s.confounder().scaled(25.0), pts) <= 1e-10);
}

TEST_CASE("fitted gradient of a fitted model is close to C-red") {
  ModelSpec s;
  s.dim = 4;
  s.noise_sd = 0;
  const auto m = fit_krr(sample_model(s, 200, {1, 0}), 1e-9);
  std::mt19937_64 engine(2);
  std::vector<CredPoint> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({test::gaussian_vector(4, engine), Vector::Zero(1)});
  // E[y | t] depends on h(t), so the fitted field violates C-red.
  CHECK(cred_residual(fitted_gradient(m), s.confounder(), pts) > 0.1);
}

TEST_CASE("bound evaluator") {
  SUBCASE("closed-form linear surrogate gives zero") {
    ModelSpec s;
    s.dim = 4;
    const auto conf = s.confounder();
    const auto r = closed_form_linear(conf, {Vector::Ones(4), Vector::Constant(1, -0.5)});
    const auto rep = surrogate_error_bound(analytic_constants(s, 10.0), r, FlowConfig{});
    CHECK(rep.accumulation_term == 0.0);
    CHECK(rep.mismatch_term <= 1e-10);
    CHECK(rep.total <= 1e-10);
    CHECK_FALSE(rep.dropped_terms_note.empty());
  }
  SUBCASE("no steps leaves the mismatch penalty") {
    SurrogateResult r;
    r.t_hat = Vector::Zero(2);
    r.steps_taken = 0;
    r.final_mismatch = r.initial_mismatch = r.max_mismatch = 0.09;
    BoundConstants c{2.0, 1.0, 1.0, 1.0, 5.0};
    CHECK(surrogate_error_bound(c, r, FlowConfig{}).total == Approx(2.0 * 0.3));
  }
  SUBCASE("monotone in each input") {
    SurrogateResult r;
    r.t_hat = Vector::Zero(2);
    r.steps_taken = 10;
    r.final_mismatch = 0.01;
    r.max_mismatch = 1.0;
    BoundConstants c{2.0, 1.5, 0.5, 1.0, 5.0};
    FlowConfig cfg;
    const double base = surrogate_error_bound(c, r, cfg).total;
    auto bumped = [&](auto mutate) {
      auto r2 = r;
      auto c2 = c;
      auto cfg2 = cfg;
      mutate(r2, c2, cfg2);
      return surrogate_error_bound(c2, r2, cfg2).total;
    };
    CHECK(bumped([](auto& rr, auto&, auto&) { rr.max_mismatch *= 2; }) >= base);
    CHECK(bumped([](auto& rr, auto&, auto&) { rr.steps_taken += 5; }) >= base);
    CHECK(bumped([](auto&, auto&, auto& f) { f.step_size *= 2; }) >= base);
    CHECK(bumped([](auto&, auto& cc, auto&) { cc.L_z *= 2; }) >= base);
    CHECK(bumped([](auto& rr, auto&, auto&) { rr.final_mismatch *= 2; }) >= base);
    CHECK(bumped([](auto&, auto& cc, auto&) { cc.L_h *= 2; }) > base);
  }
  SUBCASE("alt term takes the minimum") {
    SurrogateResult r;
    r.t_hat = Vector::Zero(2);
    r.steps_taken = 100;
    r.max_mismatch = 1.0;
    r.final_mismatch = 1.0;
    BoundConstants c{2.0, 1.0, 1.0, 3.0, 5.0};
    const auto rep = surrogate_error_bound(c, r, FlowConfig{}, Vector::Constant(2, 0.1));
    REQUIRE(rep.alt_term);
    CHECK(*rep.alt_term == Approx(3.0 * std::sqrt(0.02)));
    CHECK(rep.total == *rep.alt_term);
  }
  SUBCASE("domain check") {
    SurrogateResult r;
    r.t_hat = Vector::Constant(2, 10.0);
    BoundConstants c{1, 1, 1, 1, 1.0};
    CHECK(error_code([&] { surrogate_error_bound(c, r, FlowConfig{}); }) == Errc::DomainExceeded);
  }
  SUBCASE("holds for model B with an exact outcome model") {
    ModelSpec s;
    s.family = Family::B;
    s.dim = 6;
    std::mt19937_64 engine(17);
    FlowConfig cfg;
    cfg.record_trajectory = true;
    const auto conf = s.confounder();
    for (int rep = 0; rep < 20; ++rep) {
      const Vector t = test::gaussian_vector(6, engine);
      const double h2 = conf.value(test::gaussian_vector(6, engine))(0);
      const auto r = euler_solve(conf, {t, Vector::Constant(1, h2)}, cfg);
      if (r.status == FlowStatus::Diverged) continue;
      double radius = default_domain_radius(s);
      for (const auto& x : r.trajectory) radius = std::max(radius, x.norm());
      const auto rep_ = surrogate_error_bound(analytic_constants(s, radius), r, cfg);
      const double err = std::abs(oracle_regression(s, r.t_hat) - true_conditional_effect(s, t, h2));
      CHECK(err <= rep_.total * (1 + 1e-12) + 1e-12);
    }
  }
}

TEST_CASE("support score") {
  std::mt19937_64 engine(23);
  Matrix pts(1000, 3);
  for (Index i = 0; i < pts.size(); ++i) pts.data()[i] = test::gaussian_vector(1, engine)(0);
  const Dataset d(pts);

  const auto on = support_score(d, d.point(5), 1);
  CHECK(on.distance == 0.0);
  CHECK(on.percentile == 0.0);
  CHECK_FALSE(on.flagged);

  const auto far = support_score(d, Vector::Constant(3, 10.0 / std::sqrt(3.0)), 5);
  CHECK(far.percentile >= 99.0);
  CHECK(far.flagged);

  Matrix doubled(2000, 3);
  doubled << pts, pts;
  const Vector probe = Vector::Constant(3, 0.7);
  const auto a = support_score(d, probe, 3);
  const auto b = support_score(Dataset(doubled), probe, 3);
  CHECK(a.distance == b.distance);
  CHECK(a.percentile == b.percentile);

  CHECK(error_code([&] { support_score(d.subset({0, 1}), probe, 2); }) == Errc::InvalidArgument);
}

TEST_CASE("F-positivity dependence score") {
  std::mt19937_64 engine(29);
  const Index n = 1000;
  const Vector h = test::gaussian_vector(n, engine);
  const Vector noise = test::gaussian_vector(n, engine);
  CHECK(fpos_dependence_check(h, h) >= 0.99);
  CHECK(fpos_dependence_check(test::gaussian_vector(n, engine), h) <= 0.1);

  double prev = 1.0;
  for (double scale : {0.3, 1.0, 3.0}) {
    const double s = fpos_dependence_check(h + scale * noise, h);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(s < prev);
    prev = s;
  }
}
