#pragma once

#include <optional>
#include <vector>

#include "efc/confounder.hpp"
#include "efc/dataset.hpp"
#include "efc/regression.hpp"
#include "efc/surrogate_flow.hpp"

namespace efc {

enum class EstimateMethod { Lode, Baseline, Functional, GwasLogOdds };

const char* to_string(EstimateMethod method) noexcept;

struct EffectEstimate {
  std::optional<double> value;  // empty when the surrogate diverged
  SurrogateResult surrogate;
  InterventionQuery query;
  EstimateMethod method = EstimateMethod::Lode;

  bool diverged() const noexcept { return surrogate.status == FlowStatus::Diverged; }
};

/// Evaluates the outcome model at the surrogate of (t*, h2). Linear
/// confounders use the closed-form projection, others Euler integration.
EffectEstimate lode_conditional_effect(const OutcomeModel& model, const FunctionalConfounder& conf,
                                       const InterventionQuery& query, const FlowConfig& cfg);

/// Outcome model evaluated at t*; ignores the confounder target.
EffectEstimate baseline_conditional_effect(const OutcomeModel& model, const InterventionQuery& query);

struct AverageEffect {
  double value = 0.0;
  Index used = 0;
  Index diverged = 0;
};

/// Mean of the conditional estimates over the confounder values in the rows
/// of `h_samples`. Diverged surrogates are skipped and counted.
AverageEffect lode_average_effect(const OutcomeModel& model, const FunctionalConfounder& conf,
                                  const Vector& t_star, const Matrix& h_samples, const FlowConfig& cfg);

struct FunctionalEffectConfig {
  double lambda = -1.0;  // negative selects default_krr_lambda(n)
  double offset = 1.0;
};

/// Effect of setting g(t) = g*: regress y on (h(t), g(t)) with degree-2 kernel
/// ridge and average the fit at (h(t_i), g*) over all rows.
double functional_effect(const Dataset& data, const Vector& g_values, const Matrix& h_values,
                         double g_star, const FunctionalEffectConfig& cfg = {});

struct GwasEffect {
  double value = 0.0;
  Index used = 0;
  Index skipped = 0;
};

/// Average over persons of log P(y=1 | t'(t_i^1, h2)) / P(y=1 | t'(t_i^0, h2)),
/// where t_i^1 and t_i^0 set SNP `snp_index` to 1 and 0 and h2 is drawn per
/// person from the empirical distribution of h over the rows. Person j draws
/// from substream person_streams[j] (defaults to j). Probabilities are
/// clamped to [1e-12, 1 - 1e-12].
GwasEffect gwas_snp_effect(const OutcomeModel& model, const FunctionalConfounder& conf,
                           const Dataset& data, Index snp_index, const FlowConfig& cfg, RngSeed rng,
                           const std::vector<std::uint64_t>& person_streams = {});

}  // namespace efc
