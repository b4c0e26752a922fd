#include "efc/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "efc/errors.hpp"

namespace efc {

const char* to_string(EstimateMethod method) noexcept {
  switch (method) {
    case EstimateMethod::Lode: return "lode";
    case EstimateMethod::Baseline: return "baseline";
    case EstimateMethod::Functional: return "functional";
    case EstimateMethod::GwasLogOdds: return "gwas_log_odds";
  }
  return "unknown";
}

namespace {

void check_model(const OutcomeModel& model, const FunctionalConfounder& conf) {
  require(model.dim() == conf.input_dim(), Errc::DimensionMismatch,
          "outcome model dimension " + std::to_string(model.dim()) + " != confounder input dimension " +
              std::to_string(conf.input_dim()));
}

SurrogateResult surrogate_for(const FunctionalConfounder& conf, const InterventionQuery& query,
                              const FlowConfig& cfg) {
  return conf.is_linear() ? closed_form_linear(conf, query) : euler_solve(conf, query, cfg);
}

}  // namespace

EffectEstimate lode_conditional_effect(const OutcomeModel& model, const FunctionalConfounder& conf,
                                       const InterventionQuery& query, const FlowConfig& cfg) {
  check_model(model, conf);
  EffectEstimate est;
  est.query = query;
  est.method = EstimateMethod::Lode;
  est.surrogate = surrogate_for(conf, query, cfg);
  if (!est.diverged()) est.value = model.predict(est.surrogate.t_hat);
  return est;
}

EffectEstimate baseline_conditional_effect(const OutcomeModel& model, const InterventionQuery& query) {
  EffectEstimate est;
  est.query = query;
  est.method = EstimateMethod::Baseline;
  est.value = model.predict(query.t_star);
  est.surrogate.t_hat = query.t_star;
  return est;
}

AverageEffect lode_average_effect(const OutcomeModel& model, const FunctionalConfounder& conf,
                                  const Vector& t_star, const Matrix& h_samples, const FlowConfig& cfg) {
  require(h_samples.rows() > 0, Errc::InvalidArgument, "average effect needs at least one confounder sample");
  require(h_samples.cols() == conf.output_dim(), Errc::DimensionMismatch, "confounder samples have the wrong width");
  AverageEffect out;
  double total = 0.0;
  for (Index i = 0; i < h_samples.rows(); ++i) {
    const auto est = lode_conditional_effect(model, conf, {t_star, h_samples.row(i).transpose()}, cfg);
    if (!est.value) {
      ++out.diverged;
      continue;
    }
    total += *est.value;
    ++out.used;
  }
  if (out.used == 0) fail(Errc::AllDiverged, "every surrogate diverged");
  out.value = total / static_cast<double>(out.used);
  return out;
}

double functional_effect(const Dataset& data, const Vector& g_values, const Matrix& h_values, double g_star,
                         const FunctionalEffectConfig& cfg) {
  const Index n = data.size();
  require(n > 0, Errc::EmptyDataset, "functional effect needs data");
  require(g_values.size() == n && h_values.rows() == n, Errc::DimensionMismatch,
          "g and h values must align with the dataset rows");
  require(std::isfinite(g_star), Errc::NonFinite, "g* must be finite");

  Matrix design(n, h_values.cols() + 1);
  design.leftCols(h_values.cols()) = h_values;
  design.col(h_values.cols()) = g_values;
  require(design.allFinite(), Errc::NonFinite, "g and h values must be finite");

  const Matrix centred = design.rowwise() - design.colwise().mean();
  Eigen::JacobiSVD<Matrix> svd(centred);
  const Vector sv = svd.singularValues();
  if (sv.size() == 0 || !(sv.minCoeff() > 1e-10 * std::max(sv.maxCoeff(), 1e-300))) {
    fail(Errc::DegenerateDesign, "the (h, g) design is rank deficient");
  }

  const double lambda = cfg.lambda < 0.0 ? default_krr_lambda(n) : cfg.lambda;
  const auto model = fit_krr(Dataset(design, data.outcomes()), lambda, cfg.offset);

  Matrix probe = design;
  probe.col(h_values.cols()).setConstant(g_star);
  return model.predict_batch(probe).mean();
}

GwasEffect gwas_snp_effect(const OutcomeModel& model, const FunctionalConfounder& conf, const Dataset& data,
                           Index snp_index, const FlowConfig& cfg, RngSeed rng,
                           const std::vector<std::uint64_t>& person_streams) {
  check_model(model, conf);
  require(data.dim() == conf.input_dim(), Errc::DimensionMismatch, "genotype width differs from the confounder");
  require(!data.empty(), Errc::EmptyDataset, "GWAS effect needs individuals");
  require(snp_index >= 0 && snp_index < data.dim(), Errc::InvalidArgument, "SNP index out of range");
  const Index n = data.size();
  require(person_streams.empty() || static_cast<Index>(person_streams.size()) == n, Errc::DimensionMismatch,
          "one RNG stream per person is required");

  // Empirical marginal of h, sorted so the draw does not depend on row order.
  Matrix h_all(n, conf.output_dim());
  if (data.confounder_cache() && data.confounder_cache()->cols() == conf.output_dim()) {
    h_all = *data.confounder_cache();
  } else {
    for (Index i = 0; i < n; ++i) h_all.row(i) = conf.value(data.point(i)).transpose();
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    for (Index j = 0; j < h_all.cols(); ++j) {
      if (h_all(a, j) != h_all(b, j)) return h_all(a, j) < h_all(b, j);
    }
    return false;
  });

  std::optional<LinearProjector> projector;
  if (conf.is_linear()) projector.emplace(conf);
  auto surrogate = [&](const Vector& t, const Vector& h2) {
    if (projector) return closed_form_linear(conf, *projector, {t, h2});
    return euler_solve(conf, {t, h2}, cfg);
  };
  auto prob = [&](const Vector& t) { return std::clamp(model.predict(t), 1e-12, 1.0 - 1e-12); };

  GwasEffect out;
  double total = 0.0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index j = 0; j < n; ++j) {
    const std::uint64_t stream = person_streams.empty() ? static_cast<std::uint64_t>(j)
                                                        : person_streams[static_cast<std::size_t>(j)];
    auto engine = make_engine(rng.substream(stream));
    const auto pick = std::min<Index>(static_cast<Index>(unif(engine) * static_cast<double>(n)), n - 1);
    const Vector h2 = h_all.row(order[static_cast<std::size_t>(pick)]).transpose();

    Vector t1 = data.point(j);
    Vector t0 = t1;
    t1(snp_index) = 1.0;
    t0(snp_index) = 0.0;
    const auto s1 = surrogate(t1, h2);
    const auto s0 = surrogate(t0, h2);
    if (s1.status == FlowStatus::Diverged || s0.status == FlowStatus::Diverged) {
      ++out.skipped;
      continue;
    }
    total += std::log(prob(s1.t_hat) / prob(s0.t_hat));
    ++out.used;
  }
  if (out.used == 0) fail(Errc::AllDiverged, "every person's surrogate diverged");
  out.value = total / static_cast<double>(out.used);
  return out;
}

}  // namespace efc
