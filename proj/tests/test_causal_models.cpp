#include <doctest.h>

#include <cmath>

#include "efc/causal_models.hpp"
#include "efc/diagnostics.hpp"
#include "helpers.hpp"

using namespace efc;
using doctest::Approx;

namespace {
ModelSpec spec_of(Family f, Index dim, double gamma, double alpha) {
  ModelSpec s;
  s.family = f;
  s.dim = dim;
  s.gamma = gamma;
  s.alpha = alpha;
  return s;
}
}  // namespace

TEST_CASE("sample_model basics") {
  CHECK(sample_model(ModelSpec{}, 0, {}).empty());

  const auto s = spec_of(Family::A, 20, 1.0, 1.0);
  const auto d = sample_model(s, 100000, {5, 0});
  const Vector h = d.confounder_cache()->col(0);
  const double var = (h.array() - h.mean()).square().sum() / static_cast<double>(h.size() - 1);
  CHECK(std::abs(var - 1.0) <= 0.02);
}

TEST_CASE("noise-free samples match the conditional effect") {
  for (auto f : {Family::A, Family::B}) {
    auto s = spec_of(f, 6, 1.5, 0.7);
    s.noise_sd = 0.0;
    const auto d = sample_model(s, 50, {1, 1});
    const auto conf = s.confounder();
    for (Index i = 0; i < d.size(); ++i) {
      const Vector t = d.point(i);
      CHECK(d.outcomes()(i) == true_conditional_effect(s, t, conf.value(t)(0)));
      CHECK(d.outcomes()(i) == Approx(oracle_regression(s, t)));
    }
  }
}

TEST_CASE("model B at t=(1,1) with alpha=0") {
  const auto s = spec_of(Family::B, 2, 1.0, 0.0);
  CHECK(true_conditional_effect(s, Vector::Ones(2), 123.0) == 0.0);
}

TEST_CASE("conditional effect closed forms") {
  const auto a = spec_of(Family::A, 2, 1.0, 1.0);
  CHECK(true_conditional_effect(a, Vector::Unit(2, 0), 0.0) == Approx(1 / std::sqrt(2.0)));
  CHECK(true_conditional_effect(a, Vector::Unit(2, 0), 1.0) == Approx(1 / std::sqrt(2.0) + 3.0));
  CHECK(true_conditional_effect(spec_of(Family::B, 4, 1, 1), Vector::Zero(4), 0.0) == 0.0);
}

TEST_CASE("average effect") {
  const auto a = spec_of(Family::A, 20, 1.0, 1.0);
  CHECK(std::abs(true_average_effect(a, Vector::Zero(20), 1000000, {2, 0}) - 1.0) <= 0.01);

  const auto a0 = spec_of(Family::A, 4, 2.0, 0.0);
  Vector t(4);
  t << 1, 2, 3, 5;
  // alpha = 0 still carries the linear (1 + alpha) h term, which averages to zero.
  CHECK(std::abs(true_average_effect(a0, t, 200000, {2, 1}) - direct_effect(a0, t)) <= 0.02);

  const auto b = spec_of(Family::B, 4, 1.0, 1.0);
  const double one = true_average_effect(b, t, 1, {8, 8});
  const auto conf = b.confounder();
  auto engine = make_engine({8, 8});
  std::normal_distribution<double> nd(0.0, b.sigma);
  Vector draw(4);
  for (Index j = 0; j < 4; ++j) draw(j) = nd(engine);
  CHECK(one == Approx(true_conditional_effect(b, t, conf.value(draw)(0))));
}

TEST_CASE("analytic constants") {
  CHECK(analytic_constants(spec_of(Family::A, 20, 1, 1), 3.0).sigma_H_phi == 0.0);
  CHECK(analytic_constants(spec_of(Family::B, 4, 1, 1), 3.0).sigma_H_phi == Approx(1.0));
  CHECK(analytic_constants(spec_of(Family::B, 4, 1, 0.5), 3.0).L_z == Approx(0.5));
  const auto c = analytic_constants(spec_of(Family::A, 4, 2, 1), 3.0);
  CHECK(c.L_h == Approx(2.0));
  CHECK(c.L_z == Approx(2 * 1 * 6 + 2));
  CHECK(default_domain_radius(spec_of(Family::A, 16, 1, 1)) == Approx(16.0));
}

TEST_CASE("analytic gradient matches finite differences") {
  std::mt19937_64 engine(4);
  for (auto f : {Family::A, Family::B}) {
    const auto s = spec_of(f, 6, 1.2, 0.8);
    const Vector t = test::gaussian_vector(6, engine);
    const double h2 = 0.37;
    const Vector g = conditional_effect_gradient(s, t, h2);
    for (Index j = 0; j < 6; ++j) {
      Vector tp = t, tm = t;
      tp(j) += 1e-6;
      tm(j) -= 1e-6;
      const double fd = (true_conditional_effect(s, tp, h2) - true_conditional_effect(s, tm, h2)) / 2e-6;
      CHECK(g(j) == Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("C-red holds for both families") {
  std::mt19937_64 engine(9);
  for (auto f : {Family::A, Family::B}) {
    const auto s = spec_of(f, 20, 2.0, 1.0);
    const auto conf = s.confounder();
    std::vector<CredPoint> pts;
    for (int i = 0; i < 1000; ++i) pts.push_back({test::gaussian_vector(20, engine), test::gaussian_vector(1, engine)});
    const double r =
        cred_residual([&](const Vector& t, const Vector& h2) { return conditional_effect_gradient(s, t, h2(0)); },
                      conf, pts);
    CHECK(r <= 1e-12);
  }
}

TEST_CASE("model A mean with alpha = 0") {
  auto s = spec_of(Family::A, 20, 1.0, 0.0);
  const auto d = sample_model(s, 10000, {12, 0});
  CHECK(std::abs(d.outcomes().mean()) <= 4.0 * s.sigma / std::sqrt(10000.0));
}

TEST_CASE("model parameter validation") {
  auto s = spec_of(Family::B, 3, 1, 1);
  CHECK(test::error_code([&] { s.validate(); }) == Errc::InvalidArgument);
  s.dim = 4;
  s.sigma = 0;
  CHECK(test::error_code([&] { s.validate(); }) == Errc::InvalidArgument);
  CHECK(family_from_string("B") == Family::B);
  CHECK(test::error_code([] { family_from_string("C"); }) == Errc::InvalidArgument);
}
