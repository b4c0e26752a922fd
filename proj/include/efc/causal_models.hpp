#pragma once

#include <cmath>
#include <string>

#include "efc/confounder.hpp"
#include "efc/dataset.hpp"
#include "efc/rng.hpp"
#include "efc/types.hpp"

namespace efc {

enum class Family { A, B };

const char* to_string(Family family) noexcept;
Family family_from_string(const std::string& name);

/// Simulated data-generating process. t ~ N(0, sigma^2 I) and
///   A: h = gamma sum t_i / sqrt(T),        y = sum (-1)^i t_i / sqrt(T) + alpha h^2 + (1 + alpha) h + eta
///   B: h = gamma sum_{i even} t_i t_{i+1}, y = sum (-1)^i t_i^2 / sqrt(T) + alpha h + eta
/// with eta ~ N(0, noise_sd^2) and 0-based i.
struct ModelSpec {
  Family family = Family::A;
  Index dim = 20;
  double gamma = 1.0;
  double alpha = 1.0;
  double sigma = 1.0;
  double noise_sd = std::sqrt(0.1);

  void validate() const;
  FunctionalConfounder confounder() const;
};

/// Constants entering the surrogate error bound, valid on {||t|| <= domain_radius}.
struct BoundConstants {
  double L_z = 0.0;          // Lipschitz constant of phi in its confounder argument
  double L_h = 0.0;          // bound on ||grad h||
  double sigma_H_phi = 0.0;  // bound on the spectral norm of the Hessian of phi in t
  double L_e = 0.0;          // Lipschitz constant of E[y | t]
  double domain_radius = 0.0;
};

/// The alternating-sign part of the outcome that does not involve h.
double direct_effect(const ModelSpec& spec, const Vector& t);

Dataset sample_model(const ModelSpec& spec, Index n, RngSeed rng);

/// phi(t*, h2): noise integrated out.
double true_conditional_effect(const ModelSpec& spec, const Vector& t_star, double h_target);

/// Gradient of phi(t, h2) in t with h2 held fixed.
Vector conditional_effect_gradient(const ModelSpec& spec, const Vector& t, double h_target);

/// E[y | t] = phi(t, h(t)); the perfect outcome model.
double oracle_regression(const ModelSpec& spec, const Vector& t);

/// Monte Carlo mean of phi(t*, h(t)) over t ~ N(0, sigma^2 I).
double true_average_effect(const ModelSpec& spec, const Vector& t_star, Index mc_draws, RngSeed rng);

/// 4 sigma sqrt(T).
double default_domain_radius(const ModelSpec& spec);

BoundConstants analytic_constants(const ModelSpec& spec, double domain_radius);

}  // namespace efc
