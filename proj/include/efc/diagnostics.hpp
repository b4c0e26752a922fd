#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "efc/causal_models.hpp"
#include "efc/confounder.hpp"
#include "efc/dataset.hpp"
#include "efc/regression.hpp"
#include "efc/surrogate_flow.hpp"

namespace efc {

/// Gradient in t of an outcome function f(t, h2), with h2 supplied separately.
using OutcomeGradient = std::function<Vector(const Vector& t, const Vector& h_target)>;

struct CredPoint {
  Vector t;
  Vector h_target;
};

/// max over points of sum_j |grad_t f(t, h2)^T grad h_j(t)|. Zero when the
/// outcome reads the confounder only through its second argument.
double cred_residual(const OutcomeGradient& f_grad, const FunctionalConfounder& conf,
                     const std::vector<CredPoint>& points);

/// Central-difference gradient of a fitted model, ignoring h2.
OutcomeGradient fitted_gradient(const OutcomeModel& model, double eps = 1e-5);

struct BoundReport {
  double accumulation_term = 0.0;  // 2 K l^2 M sigma_H L_h^2
  double mismatch_term = 0.0;      // L_z ||h(t_hat) - h2||
  std::optional<double> alt_term;  // L_e ||t' - t_hat||
  double total = 0.0;
  std::string dropped_terms_note;

  nlohmann::json to_json() const;
};

/// Computable part of the surrogate error bound. The estimator error c(N) and
/// the O(l^3) remainder are left out and noted in the report. Throws
/// DomainExceeded if t_hat or any recorded iterate lies outside the
/// constants' radius.
BoundReport surrogate_error_bound(const BoundConstants& consts, const SurrogateResult& surrogate,
                           const FlowConfig& cfg, const std::optional<Vector>& oracle_t_prime = std::nullopt);

struct SupportReport {
  double distance = 0.0;    // k-th nearest neighbour distance from the probe
  double percentile = 0.0;  // in [0, 100] against in-sample k-NN distances
  bool flagged = false;     // percentile >= 99

  nlohmann::json to_json() const;
};

/// Heuristic check that a surrogate sits inside the data support. Exact
/// duplicate rows are collapsed first, so the score depends on the row set only.
SupportReport support_score(const Dataset& data, const Vector& t_hat, Index k);

/// Fraction of the variance of g explained by a degree-2 kernel ridge fit of
/// g on h. Near 1 means g is (almost) a function of h and the functional
/// intervention has no randomness left given the confounder.
double fpos_dependence_check(const Vector& g_values, const Matrix& h_values);

}  // namespace efc
