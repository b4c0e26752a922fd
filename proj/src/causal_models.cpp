#include "efc/causal_models.hpp"

#include <cmath>

#include "efc/errors.hpp"

namespace efc {

const char* to_string(Family family) noexcept { return family == Family::A ? "A" : "B"; }

Family family_from_string(const std::string& name) {
  if (name == "A" || name == "a") return Family::A;
  if (name == "B" || name == "b") return Family::B;
  fail(Errc::InvalidArgument, "unknown model family '" + name + "'");
}

void ModelSpec::validate() const {
  require(dim >= 2 && dim % 2 == 0, Errc::InvalidArgument, "model dimension must be even and >= 2");
  require(sigma > 0.0 && std::isfinite(sigma), Errc::InvalidArgument, "sigma must be positive");
  require(noise_sd >= 0.0 && std::isfinite(noise_sd), Errc::InvalidArgument, "noise_sd must be >= 0");
  require(std::isfinite(gamma) && std::isfinite(alpha), Errc::InvalidArgument, "gamma and alpha must be finite");
}

FunctionalConfounder ModelSpec::confounder() const {
  validate();
  return family == Family::A ? FunctionalConfounder::linear_sum(gamma, dim)
                             : FunctionalConfounder::pairwise_bilinear(gamma, dim);
}

namespace {

void check_dim(const ModelSpec& spec, const Vector& t) {
  require(t.size() == spec.dim, Errc::DimensionMismatch,
          "model expects length " + std::to_string(spec.dim) + ", got " + std::to_string(t.size()));
}

double confounder_part(const ModelSpec& spec, double h) {
  if (spec.family == Family::A) return spec.alpha * h * h + (1.0 + spec.alpha) * h;
  return spec.alpha * h;
}

}  // namespace

double direct_effect(const ModelSpec& spec, const Vector& t) {
  check_dim(spec, t);
  double s = 0.0;
  for (Index i = 0; i < t.size(); ++i) {
    const double term = spec.family == Family::A ? t(i) : t(i) * t(i);
    s += (i % 2 == 0) ? term : -term;
  }
  return s / std::sqrt(static_cast<double>(spec.dim));
}

double true_conditional_effect(const ModelSpec& spec, const Vector& t_star, double h_target) {
  return direct_effect(spec, t_star) + confounder_part(spec, h_target);
}

Vector conditional_effect_gradient(const ModelSpec& spec, const Vector& t, double /*h_target*/) {
  check_dim(spec, t);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.dim));
  Vector g(t.size());
  for (Index i = 0; i < t.size(); ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    g(i) = spec.family == Family::A ? sign * scale : 2.0 * sign * t(i) * scale;
  }
  return g;
}

double oracle_regression(const ModelSpec& spec, const Vector& t) {
  const double h = spec.confounder().value(t)(0);
  return true_conditional_effect(spec, t, h);
}

Dataset sample_model(const ModelSpec& spec, Index n, RngSeed rng) {
  spec.validate();
  require(n >= 0, Errc::InvalidArgument, "sample size must be >= 0");
  const auto conf = spec.confounder();
  // Points and noise use separate streams so t does not depend on gamma/alpha.
  auto point_engine = make_engine(rng.substream(1));
  auto noise_engine = make_engine(rng.substream(2));
  std::normal_distribution<double> point_dist(0.0, spec.sigma);
  std::normal_distribution<double> unit(0.0, 1.0);

  Matrix pts(n, spec.dim);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < spec.dim; ++j) pts(i, j) = point_dist(point_engine);

  Vector ys(n);
  Matrix hs(n, 1);
  for (Index i = 0; i < n; ++i) {
    const Vector t = pts.row(i).transpose();
    const double h = conf.value(t)(0);
    hs(i, 0) = h;
    ys(i) = true_conditional_effect(spec, t, h) + spec.noise_sd * unit(noise_engine);
  }
  return Dataset(std::move(pts), std::move(ys), std::move(hs));
}

double true_average_effect(const ModelSpec& spec, const Vector& t_star, Index mc_draws, RngSeed rng) {
  spec.validate();
  check_dim(spec, t_star);
  require(mc_draws >= 1, Errc::InvalidArgument, "mc_draws must be >= 1");
  const auto conf = spec.confounder();
  auto engine = make_engine(rng);
  std::normal_distribution<double> dist(0.0, spec.sigma);
  const double direct = direct_effect(spec, t_star);
  Vector t(spec.dim);
  double total = 0.0;
  for (Index m = 0; m < mc_draws; ++m) {
    for (Index j = 0; j < spec.dim; ++j) t(j) = dist(engine);
    total += confounder_part(spec, conf.value(t)(0));
  }
  return direct + total / static_cast<double>(mc_draws);
}

double default_domain_radius(const ModelSpec& spec) {
  return 4.0 * spec.sigma * std::sqrt(static_cast<double>(spec.dim));
}

BoundConstants analytic_constants(const ModelSpec& spec, double domain_radius) {
  spec.validate();
  require(domain_radius > 0.0 && std::isfinite(domain_radius), Errc::InvalidArgument, "domain radius must be positive");
  const double R = domain_radius;
  const double g = std::abs(spec.gamma);
  const double a = std::abs(spec.alpha);
  BoundConstants c;
  c.domain_radius = R;
  if (spec.family == Family::A) {
    // |h| <= |gamma| ||t|| on the ball; phi is linear in t.
    const double h_max = g * R;
    c.L_h = g;
    c.sigma_H_phi = 0.0;
    c.L_z = 2.0 * a * h_max + std::abs(1.0 + spec.alpha);
    c.L_e = 1.0 + g * c.L_z;
  } else {
    const double root_t = std::sqrt(static_cast<double>(spec.dim));
    c.L_h = g * R;
    c.sigma_H_phi = 2.0 / root_t;
    c.L_z = a;
    c.L_e = R * (2.0 / root_t + a * g);
  }
  return c;
}

}  // namespace efc
