#pragma once

#include <filesystem>
#include <variant>

#include "efc/types.hpp"

namespace efc {

/// h(t) = gamma * sum_i t_i / sqrt(T).
struct LinearSum {
  double gamma = 1.0;
  Index dim = 0;
};

/// h(t) = gamma * sum_{i even} t_i t_{i+1}, 0-based.
struct PairwiseBilinear {
  double gamma = 1.0;
  Index dim = 0;
};

/// h(t) = W^T (t - center). W is T x d.
struct LinearMap {
  Matrix weights;
  Vector center;
};

/// A known function of the pre-outcome variables whose value is the
/// confounder. Immutable once built.
class FunctionalConfounder {
 public:
  using Kind = std::variant<LinearSum, PairwiseBilinear, LinearMap>;

  static FunctionalConfounder linear_sum(double gamma, Index dim);
  static FunctionalConfounder pairwise_bilinear(double gamma, Index dim);
  static FunctionalConfounder linear_map(Matrix weights);
  static FunctionalConfounder linear_map(Matrix weights, Vector center);

  Index input_dim() const noexcept { return input_dim_; }
  Index output_dim() const noexcept { return output_dim_; }
  const Kind& kind() const noexcept { return kind_; }

  /// h(t), length d.
  Vector value(const Vector& t) const;
  /// Jacobian of h laid out T x d (column j is the gradient of h_j).
  Matrix gradient(const Vector& t) const;

  bool is_linear() const noexcept;
  /// For linear kinds, the W with h(t) = W^T (t - c).
  Matrix linear_weights() const;
  Vector linear_center() const;

  /// The confounder c * h, for the same kind.
  FunctionalConfounder scaled(double c) const;

 private:
  FunctionalConfounder(Kind kind, Index input_dim, Index output_dim)
      : kind_(std::move(kind)), input_dim_(input_dim), output_dim_(output_dim) {}

  void check_input(const Vector& t) const;

  Kind kind_;
  Index input_dim_;
  Index output_dim_;
};

/// Max over Jacobian entries of |analytic - central difference| / (1 + |analytic|).
double check_grad(const FunctionalConfounder& conf, const Vector& t, double eps);

/// LinearMap weights as CSV: one row per input coordinate, columns w_0..w_{d-1}
/// and an optional `center` column.
void save_linear_map(const FunctionalConfounder& conf, const std::filesystem::path& path);
FunctionalConfounder load_linear_map(const std::filesystem::path& path);

}  // namespace efc
