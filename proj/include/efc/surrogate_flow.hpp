#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "efc/confounder.hpp"
#include "efc/dataset.hpp"
#include "efc/types.hpp"

namespace efc {

struct FlowConfig {
  double step_size = 0.05;
  double rel_tolerance = 1e-4;
  long max_steps = 100000;
  double divergence_factor = 1e6;
  bool record_trajectory = false;

  void validate() const;
};

enum class FlowStatus {
  Converged,
  MaxStepsReached,
  Diverged,
  /// Stopped by the batch mismatch target before meeting its own tolerance.
  Interrupted,
};

const char* to_string(FlowStatus status) noexcept;

struct SurrogateResult {
  Vector t_hat;
  long steps_taken = 0;
  double final_mismatch = 0.0;    // ||h(t_hat) - h2||^2
  double initial_mismatch = 0.0;  // ||h(t*) - h2||^2
  double max_mismatch = 0.0;      // over all iterates, including t*
  FlowStatus status = FlowStatus::Converged;
  std::vector<Vector> trajectory;             // iterates 0..K when recorded
  std::vector<double> trajectory_mismatch;    // matching mismatches
};

/// Fixed-step Euler integration of dt/ds = -grad ||h(t) - h2||^2 from t*:
///   t_{k+1} = t_k - 2 l J_h(t_k) (h(t_k) - h2).
/// Stops on ||h - h2||^2 <= eps * initial (Converged), on growth beyond
/// divergence_factor * initial (Diverged), or at max_steps. A stalled flow
/// (zero update with nonzero mismatch) also reports MaxStepsReached.
/// Throws NonFinite if an iterate becomes NaN.
SurrogateResult euler_solve(const FunctionalConfounder& conf, const InterventionQuery& query,
                            const FlowConfig& cfg);

/// Orthogonal projection onto {t : h(t) = h2} for a linear confounder, which
/// is the limit of the flow. Built once per confounder and reused.
class LinearProjector {
 public:
  explicit LinearProjector(const FunctionalConfounder& conf);

  Index input_dim() const noexcept { return weights_.rows(); }
  Index output_dim() const noexcept { return weights_.cols(); }

  Vector project(const Vector& t_star, const Vector& h_target) const;
  /// t - W G^{-1} W^T t, the component that the flow never moves.
  Vector orthogonal_part(const Vector& t) const;

 private:
  Matrix weights_;
  Vector center_;
  Eigen::LDLT<Matrix> gram_;
};

/// Closed-form limit for LinearSum and LinearMap confounders.
/// Throws SingularProjection when W^T W has condition number above 1e12.
SurrogateResult closed_form_linear(const FunctionalConfounder& conf, const InterventionQuery& query);

/// Same with a prebuilt projector.
SurrogateResult closed_form_linear(const FunctionalConfounder& conf, const LinearProjector& projector,
                                   const InterventionQuery& query);

/// Integrates every query in lockstep and stops once the mean mismatch over
/// non-diverged queries is <= delta^2, or <= rel_tolerance times its initial
/// value. All results carry the shared step count.
std::vector<SurrogateResult> batch_solve_to_mismatch(const FunctionalConfounder& conf,
                                                     const std::vector<InterventionQuery>& queries,
                                                     double delta, const FlowConfig& cfg);

/// step, t_0..t_{T-1}, mismatch. Requires a recorded trajectory.
void save_trajectory(const SurrogateResult& result, const std::filesystem::path& path);

}  // namespace efc
