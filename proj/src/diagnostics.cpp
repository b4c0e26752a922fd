#include "efc/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "efc/errors.hpp"

namespace efc {

double cred_residual(const OutcomeGradient& f_grad, const FunctionalConfounder& conf,
                     const std::vector<CredPoint>& points) {
  double worst = 0.0;
  for (const auto& p : points) {
    const Vector g = f_grad(p.t, p.h_target);
    require(g.size() == conf.input_dim(), Errc::DimensionMismatch, "outcome gradient has the wrong length");
    const Vector inner = conf.gradient(p.t).transpose() * g;
    worst = std::max(worst, inner.lpNorm<1>());
  }
  return worst;
}

OutcomeGradient fitted_gradient(const OutcomeModel& model, double eps) {
  return [model, eps](const Vector& t, const Vector&) { return model_gradient(model, t, eps); };
}

nlohmann::json BoundReport::to_json() const {
  nlohmann::json j{{"accumulation_term", accumulation_term},
                   {"mismatch_term", mismatch_term},
                   {"total", total},
                   {"dropped_terms_note", dropped_terms_note}};
  j["alt_term"] = alt_term ? nlohmann::json(*alt_term) : nlohmann::json(nullptr);
  return j;
}

BoundReport surrogate_error_bound(const BoundConstants& consts, const SurrogateResult& surrogate, const FlowConfig& cfg,
                           const std::optional<Vector>& oracle_t_prime) {
  cfg.validate();
  for (double c : {consts.L_z, consts.L_h, consts.sigma_H_phi, consts.L_e, consts.domain_radius}) {
    require(c >= 0.0 && std::isfinite(c), Errc::InvalidArgument, "bound constants must be finite and >= 0");
  }
  auto check_domain = [&](const Vector& t) {
    if (t.norm() > consts.domain_radius) {
      fail(Errc::DomainExceeded, "iterate norm " + std::to_string(t.norm()) + " exceeds domain radius " +
                                     std::to_string(consts.domain_radius));
    }
  };
  check_domain(surrogate.t_hat);
  for (const auto& t : surrogate.trajectory) check_domain(t);

  BoundReport r;
  const double K = static_cast<double>(surrogate.steps_taken);
  const double l = cfg.step_size;
  r.accumulation_term = 2.0 * K * l * l * surrogate.max_mismatch * consts.sigma_H_phi * consts.L_h * consts.L_h;
  r.mismatch_term = consts.L_z * std::sqrt(surrogate.final_mismatch);
  r.total = r.accumulation_term + r.mismatch_term;
  if (oracle_t_prime) {
    require(oracle_t_prime->size() == surrogate.t_hat.size(), Errc::DimensionMismatch,
            "oracle surrogate has the wrong length");
    r.alt_term = consts.L_e * (*oracle_t_prime - surrogate.t_hat).norm();
    r.total = std::min(*r.alt_term, r.total);
  }
  r.dropped_terms_note =
      "excludes the estimator error c(N) and the O(l^3) per-step Taylor remainder (zero when phi is "
      "quadratic in t)";
  return r;
}

nlohmann::json SupportReport::to_json() const {
  return {{"distance", distance},
          {"percentile", percentile},
          {"flagged", flagged},
          {"note", "k-NN distance heuristic standing in for effect connectivity; not a certificate"}};
}

namespace {

// k-th smallest entry of `d` (1-based k).
double kth_smallest(std::vector<double> d, Index k) {
  std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
  return d[static_cast<std::size_t>(k - 1)];
}

}  // namespace

SupportReport support_score(const Dataset& data, const Vector& t_hat, Index k) {
  require(k >= 1, Errc::InvalidArgument, "k must be >= 1");
  require(t_hat.size() == data.dim(), Errc::DimensionMismatch, "probe has the wrong dimension");
  require(t_hat.allFinite(), Errc::NonFinite, "probe must be finite");

  // Collapse duplicate rows.
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  const Matrix& pts = data.points();
  auto row_less = [&](Index a, Index b) {
    for (Index j = 0; j < pts.cols(); ++j) {
      if (pts(a, j) != pts(b, j)) return pts(a, j) < pts(b, j);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::vector<Index> unique_rows;
  for (Index i : order) {
    if (unique_rows.empty() || row_less(unique_rows.back(), i)) unique_rows.push_back(i);
  }
  const auto n = static_cast<Index>(unique_rows.size());
  require(n > k, Errc::InvalidArgument, "support score needs more distinct rows than k");

  Matrix u(n, pts.cols());
  for (Index r = 0; r < n; ++r) u.row(r) = pts.row(unique_rows[static_cast<std::size_t>(r)]);

  std::vector<double> in_sample(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    Index c = 0;
    for (Index j = 0; j < n; ++j) {
      if (j != i) dist[static_cast<std::size_t>(c++)] = (u.row(i) - u.row(j)).norm();
    }
    in_sample[static_cast<std::size_t>(i)] = kth_smallest(dist, k);
  }
  std::vector<double> probe(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) probe[static_cast<std::size_t>(j)] = (u.row(j) - t_hat.transpose()).norm();

  SupportReport r;
  r.distance = kth_smallest(probe, k);
  const auto below = std::count_if(in_sample.begin(), in_sample.end(), [&](double d) { return d < r.distance; });
  r.percentile = 100.0 * static_cast<double>(below) / static_cast<double>(n);
  r.flagged = r.percentile >= 99.0;
  return r;
}

double fpos_dependence_check(const Vector& g_values, const Matrix& h_values) {
  require(g_values.size() == h_values.rows() && g_values.size() > 1, Errc::DimensionMismatch,
          "g and h must have the same number of rows (at least 2)");
  require(g_values.allFinite() && h_values.allFinite(), Errc::NonFinite, "g and h must be finite");
  const double mean = g_values.mean();
  const double total = (g_values.array() - mean).square().sum();
  if (total == 0.0) return 1.0;  // a constant g is trivially determined by h
  const auto model = fit_krr(Dataset(h_values, g_values), default_krr_lambda(g_values.size()));
  const double resid = (model.predict_batch(h_values) - g_values).squaredNorm();
  return std::clamp(1.0 - resid / total, 0.0, 1.0);
}

}  // namespace efc
