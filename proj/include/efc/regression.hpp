#pragma once

#include <filesystem>
#include <functional>
#include <variant>
#include <vector>

#include <json.hpp>

#include "efc/dataset.hpp"
#include "efc/rng.hpp"
#include "efc/types.hpp"

namespace efc {

/// Dual solution of kernel ridge regression with k(x, x') = (x^T x' + offset)^2.
struct KernelRidge {
  Matrix train_points;
  Vector dual;
  double lambda = 0.0;
  double offset = 1.0;
};

/// P(y = 1 | t) = sigmoid(w^T t + b).
struct LogisticLasso {
  Vector weights;
  double intercept = 0.0;
  double lambda1 = 0.0;
};

enum class ModelKind { KernelRidge, LogisticLasso };

const char* to_string(ModelKind kind) noexcept;

/// A fitted estimate of E[y | t]. Immutable.
class OutcomeModel {
 public:
  explicit OutcomeModel(KernelRidge m);
  explicit OutcomeModel(LogisticLasso m);

  ModelKind kind() const noexcept;
  Index dim() const noexcept;

  double predict(const Vector& t) const;
  /// Row-wise predictions.
  Vector predict_batch(const Matrix& points) const;

  const KernelRidge& kernel_ridge() const;
  const LogisticLasso& logistic_lasso() const;

  nlohmann::json to_json() const;
  static OutcomeModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static OutcomeModel load(const std::filesystem::path& path);

 private:
  std::variant<KernelRidge, LogisticLasso> model_;
};

Matrix polynomial_kernel(const Matrix& a, const Matrix& b, double offset);

/// Solves (K + lambda I) a = y by Cholesky with one refinement pass.
/// Throws NumericalFailure if K + lambda I is not numerically SPD.
OutcomeModel fit_krr(const Dataset& data, double lambda, double offset = 1.0);

/// Default ridge when none is selected: 1e-4 * n.
double default_krr_lambda(Index n);

struct LassoOptions {
  long max_iter = 10000;
  double rel_tolerance = 1e-8;
};

struct LassoFit {
  LogisticLasso model;
  /// Objective after every iteration, starting with the initial point.
  std::vector<double> objective_trace;
  long iterations = 0;
};

/// mean log-loss + lambda1 ||w||_1, intercept unpenalised.
double logistic_lasso_objective(const Matrix& x, const Vector& y, const Vector& w, double b,
                                double lambda1);

/// Proximal gradient with backtracking. `warm_start` seeds w and b.
LassoFit solve_logistic_lasso(const Matrix& x, const Vector& y, double lambda1,
                              const LassoOptions& options = {},
                              const LogisticLasso* warm_start = nullptr);

/// Requires outcomes in {0, 1}.
OutcomeModel fit_logistic_lasso(const Dataset& data, double lambda1, const LassoOptions& options = {});

struct CvResult {
  double chosen_lambda = 0.0;
  std::vector<double> lambdas;
  std::vector<double> mean_loss;
};

/// k-fold selection of the regularisation constant. Folds are a seeded
/// shuffle; the loss is squared error for kernel ridge and log-loss for the
/// lasso. Ties go to the larger lambda.
CvResult cross_validate(const Dataset& data, int folds, std::vector<double> grid, ModelKind kind,
                        RngSeed rng, double krr_offset = 1.0);

/// Gradient of predict in t by central differences.
Vector model_gradient(const OutcomeModel& model, const Vector& t, double eps = 1e-5);

double mean_log_loss(const Vector& y, const Vector& prob);

}  // namespace efc
