#include "efc/surrogate_flow.hpp"

#include <cmath>
#include <fstream>

#include "efc/csv.hpp"
#include "efc/errors.hpp"

namespace efc {

const char* to_string(FlowStatus status) noexcept {
  switch (status) {
    case FlowStatus::Converged: return "Converged";
    case FlowStatus::MaxStepsReached: return "MaxStepsReached";
    case FlowStatus::Diverged: return "Diverged";
    case FlowStatus::Interrupted: return "Interrupted";
  }
  return "Unknown";
}

void FlowConfig::validate() const {
  require(step_size > 0.0 && std::isfinite(step_size), Errc::InvalidArgument, "step size must be positive");
  require(rel_tolerance > 0.0 && rel_tolerance < 1.0, Errc::InvalidArgument, "rel_tolerance must be in (0, 1)");
  require(max_steps >= 1, Errc::InvalidArgument, "max_steps must be >= 1");
  require(divergence_factor > 1.0, Errc::InvalidArgument, "divergence_factor must exceed 1");
}

namespace {

void check_query(const FunctionalConfounder& conf, const InterventionQuery& q) {
  require(q.t_star.size() == conf.input_dim(), Errc::DimensionMismatch, "query t_star has the wrong length");
  require(q.h_target.size() == conf.output_dim(), Errc::DimensionMismatch, "query h_target has the wrong length");
  require(q.t_star.allFinite() && q.h_target.allFinite(), Errc::NonFinite, "query must be finite");
}

// One integrator state; shared by the per-query and lockstep solvers.
struct FlowState {
  Vector t;
  Vector residual;
  double mismatch = 0.0;

  void refresh(const FunctionalConfounder& conf, const Vector& h_target) {
    residual = conf.value(t) - h_target;
    mismatch = residual.squaredNorm();
  }

  // Returns false when the update is exactly zero (critical point of h).
  bool step(const FunctionalConfounder& conf, const Vector& h_target, double step_size) {
    const Vector update = (2.0 * step_size) * (conf.gradient(t) * residual);
    if (update.isZero(0.0)) return false;
    t -= update;
    refresh(conf, h_target);
    if (!t.allFinite() || std::isnan(mismatch)) fail(Errc::NonFinite, "Euler iterate became non-finite");
    return true;
  }
};

}  // namespace

SurrogateResult euler_solve(const FunctionalConfounder& conf, const InterventionQuery& query,
                            const FlowConfig& cfg) {
  cfg.validate();
  check_query(conf, query);

  FlowState state{query.t_star, {}, 0.0};
  state.refresh(conf, query.h_target);

  SurrogateResult result;
  result.initial_mismatch = state.mismatch;
  result.max_mismatch = state.mismatch;
  auto record = [&] {
    if (!cfg.record_trajectory) return;
    result.trajectory.push_back(state.t);
    result.trajectory_mismatch.push_back(state.mismatch);
  };
  record();

  const double target = cfg.rel_tolerance * result.initial_mismatch;
  const double blowup = cfg.divergence_factor * result.initial_mismatch;
  FlowStatus status = FlowStatus::MaxStepsReached;
  long k = 0;
  if (state.mismatch == 0.0) {
    status = FlowStatus::Converged;
  } else {
    while (k < cfg.max_steps) {
      if (!state.step(conf, query.h_target, cfg.step_size)) break;
      ++k;
      record();
      result.max_mismatch = std::max(result.max_mismatch, state.mismatch);
      if (state.mismatch <= target) {
        status = FlowStatus::Converged;
        break;
      }
      if (state.mismatch > blowup) {
        status = FlowStatus::Diverged;
        break;
      }
    }
  }
  result.t_hat = std::move(state.t);
  result.steps_taken = k;
  result.final_mismatch = state.mismatch;
  result.status = status;
  return result;
}

LinearProjector::LinearProjector(const FunctionalConfounder& conf)
    : weights_(conf.linear_weights()), center_(conf.linear_center()) {
  const Matrix gram = weights_.transpose() * weights_;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    fail(Errc::SingularProjection, "W^T W is numerically singular (condition " + std::to_string(hi / lo) + ")");
  }
  gram_.compute(gram);
}

Vector LinearProjector::orthogonal_part(const Vector& t) const {
  return t - weights_ * gram_.solve(weights_.transpose() * t);
}

Vector LinearProjector::project(const Vector& t_star, const Vector& h_target) const {
  require(t_star.size() == input_dim() && h_target.size() == output_dim(), Errc::DimensionMismatch,
          "projection query has the wrong shape");
  // Split form (I - P) t* + W G^{-1} (h2 + W^T c): coordinates that h reads
  // directly are replaced rather than corrected, which keeps axis-aligned maps exact.
  const Vector level = h_target + weights_.transpose() * center_;
  return orthogonal_part(t_star) + weights_ * gram_.solve(level);
}

SurrogateResult closed_form_linear(const FunctionalConfounder& conf, const InterventionQuery& query) {
  check_query(conf, query);
  if (conf.value(query.t_star) == query.h_target) {
    // Already on the level set; valid even when W^T W is singular (gamma = 0).
    SurrogateResult result;
    result.t_hat = query.t_star;
    result.status = FlowStatus::Converged;
    return result;
  }
  const LinearProjector projector(conf);
  return closed_form_linear(conf, projector, query);
}

SurrogateResult closed_form_linear(const FunctionalConfounder& conf, const LinearProjector& projector,
                                   const InterventionQuery& query) {
  check_query(conf, query);
  SurrogateResult result;
  const Vector r0 = conf.value(query.t_star) - query.h_target;
  result.initial_mismatch = r0.squaredNorm();
  result.t_hat = result.initial_mismatch == 0.0 ? query.t_star : projector.project(query.t_star, query.h_target);
  result.final_mismatch = (conf.value(result.t_hat) - query.h_target).squaredNorm();
  result.max_mismatch = std::max(result.initial_mismatch, result.final_mismatch);
  result.steps_taken = 0;
  result.status = FlowStatus::Converged;
  return result;
}

std::vector<SurrogateResult> batch_solve_to_mismatch(const FunctionalConfounder& conf,
                                                     const std::vector<InterventionQuery>& queries,
                                                     double delta, const FlowConfig& cfg) {
  cfg.validate();
  require(!queries.empty(), Errc::InvalidArgument, "batch solve needs at least one query");
  require(delta >= 0.0 && std::isfinite(delta), Errc::InvalidArgument, "delta must be >= 0");
  for (const auto& q : queries) check_query(conf, q);

  const std::size_t n = queries.size();
  std::vector<FlowState> states(n);
  std::vector<SurrogateResult> results(n);
  std::vector<bool> diverged(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    states[i].t = queries[i].t_star;
    states[i].refresh(conf, queries[i].h_target);
    results[i].initial_mismatch = states[i].mismatch;
    results[i].max_mismatch = states[i].mismatch;
    if (cfg.record_trajectory) {
      results[i].trajectory.push_back(states[i].t);
      results[i].trajectory_mismatch.push_back(states[i].mismatch);
    }
  }

  auto batch_mean = [&] {
    double total = 0.0;
    std::size_t live = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (diverged[i]) continue;
      total += states[i].mismatch;
      ++live;
    }
    return live == 0 ? 0.0 : total / static_cast<double>(live);
  };

  const double initial_mean = batch_mean();
  const double target = std::max(delta * delta, cfg.rel_tolerance * initial_mean);
  long k = 0;
  bool reached = batch_mean() <= target;
  while (!reached && k < cfg.max_steps) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (diverged[i]) continue;
      if (states[i].step(conf, queries[i].h_target, cfg.step_size)) moved = true;
      auto& r = results[i];
      r.max_mismatch = std::max(r.max_mismatch, states[i].mismatch);
      if (states[i].mismatch > cfg.divergence_factor * r.initial_mismatch) diverged[i] = true;
    }
    ++k;
    for (std::size_t i = 0; i < n; ++i) {
      if (cfg.record_trajectory && !diverged[i]) {
        results[i].trajectory.push_back(states[i].t);
        results[i].trajectory_mismatch.push_back(states[i].mismatch);
      }
    }
    reached = batch_mean() <= target;
    if (!moved) break;
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& r = results[i];
    r.t_hat = states[i].t;
    r.final_mismatch = states[i].mismatch;
    r.steps_taken = k;
    if (diverged[i]) {
      r.status = FlowStatus::Diverged;
    } else if (r.final_mismatch <= cfg.rel_tolerance * r.initial_mismatch || r.initial_mismatch == 0.0) {
      r.status = FlowStatus::Converged;
    } else {
      r.status = reached ? FlowStatus::Interrupted : FlowStatus::MaxStepsReached;
    }
  }
  return results;
}

void save_trajectory(const SurrogateResult& result, const std::filesystem::path& path) {
  require(!result.trajectory.empty(), Errc::InvalidArgument, "no trajectory was recorded");
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  const Index T = result.trajectory.front().size();
  out << "step";
  for (Index j = 0; j < T; ++j) out << ",t_" << j;
  out << ",mismatch\n";
  for (std::size_t k = 0; k < result.trajectory.size(); ++k) {
    out << k;
    for (Index j = 0; j < T; ++j) out << ',' << csv::format_double(result.trajectory[k](j));
    out << ',' << csv::format_double(result.trajectory_mismatch[k]) << '\n';
  }
}

}  // namespace efc
