#include "efc/confounder.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "efc/csv.hpp"
#include "efc/errors.hpp"

namespace efc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_scalar_family(double gamma, Index dim, const char* name) {
  require(std::isfinite(gamma), Errc::InvalidArgument, std::string(name) + ": gamma must be finite");
  require(dim >= 2, Errc::InvalidArgument, std::string(name) + ": dimension must be at least 2");
}

}  // namespace

FunctionalConfounder FunctionalConfounder::linear_sum(double gamma, Index dim) {
  check_scalar_family(gamma, dim, "LinearSum");
  return FunctionalConfounder(LinearSum{gamma, dim}, dim, 1);
}

FunctionalConfounder FunctionalConfounder::pairwise_bilinear(double gamma, Index dim) {
  check_scalar_family(gamma, dim, "PairwiseBilinear");
  require(dim % 2 == 0, Errc::InvalidArgument, "PairwiseBilinear: dimension must be even");
  return FunctionalConfounder(PairwiseBilinear{gamma, dim}, dim, 1);
}

FunctionalConfounder FunctionalConfounder::linear_map(Matrix weights) {
  Vector center = Vector::Zero(weights.rows());
  return linear_map(std::move(weights), std::move(center));
}

FunctionalConfounder FunctionalConfounder::linear_map(Matrix weights, Vector center) {
  require(weights.rows() >= 1 && weights.cols() >= 1, Errc::InvalidArgument, "LinearMap: empty weight matrix");
  require(weights.allFinite(), Errc::NonFinite, "LinearMap: weights must be finite");
  require(center.size() == weights.rows(), Errc::DimensionMismatch, "LinearMap: center length must equal rows of W");
  require(center.allFinite(), Errc::NonFinite, "LinearMap: center must be finite");
  const Index T = weights.rows();
  const Index d = weights.cols();
  return FunctionalConfounder(LinearMap{std::move(weights), std::move(center)}, T, d);
}

void FunctionalConfounder::check_input(const Vector& t) const {
  require(t.size() == input_dim_, Errc::DimensionMismatch,
          "confounder expects length " + std::to_string(input_dim_) + ", got " + std::to_string(t.size()));
}

Vector FunctionalConfounder::value(const Vector& t) const {
  check_input(t);
  return std::visit(
      overloaded{
          [&](const LinearSum& k) {
            Vector h(1);
            h(0) = k.gamma * t.sum() / std::sqrt(static_cast<double>(k.dim));
            return h;
          },
          [&](const PairwiseBilinear& k) {
            double s = 0.0;
            for (Index i = 0; i + 1 < k.dim; i += 2) s += t(i) * t(i + 1);
            Vector h(1);
            h(0) = k.gamma * s;
            return h;
          },
          [&](const LinearMap& k) -> Vector { return k.weights.transpose() * (t - k.center); },
      },
      kind_);
}

Matrix FunctionalConfounder::gradient(const Vector& t) const {
  check_input(t);
  return std::visit(
      overloaded{
          [&](const LinearSum& k) -> Matrix {
            return Matrix::Constant(k.dim, 1, k.gamma / std::sqrt(static_cast<double>(k.dim)));
          },
          [&](const PairwiseBilinear& k) {
            Matrix g(k.dim, 1);
            for (Index i = 0; i + 1 < k.dim; i += 2) {
              g(i, 0) = k.gamma * t(i + 1);
              g(i + 1, 0) = k.gamma * t(i);
            }
            return g;
          },
          [&](const LinearMap& k) -> Matrix { return k.weights; },
      },
      kind_);
}

bool FunctionalConfounder::is_linear() const noexcept {
  return !std::holds_alternative<PairwiseBilinear>(kind_);
}

Matrix FunctionalConfounder::linear_weights() const {
  require(is_linear(), Errc::InvalidArgument, "confounder is not linear");
  if (const auto* k = std::get_if<LinearSum>(&kind_)) {
    return Matrix::Constant(k->dim, 1, k->gamma / std::sqrt(static_cast<double>(k->dim)));
  }
  return std::get<LinearMap>(kind_).weights;
}

Vector FunctionalConfounder::linear_center() const {
  require(is_linear(), Errc::InvalidArgument, "confounder is not linear");
  if (const auto* k = std::get_if<LinearMap>(&kind_)) return k->center;
  return Vector::Zero(input_dim_);
}

FunctionalConfounder FunctionalConfounder::scaled(double c) const {
  return std::visit(overloaded{
                        [&](const LinearSum& k) { return linear_sum(c * k.gamma, k.dim); },
                        [&](const PairwiseBilinear& k) { return pairwise_bilinear(c * k.gamma, k.dim); },
                        [&](const LinearMap& k) { return linear_map(c * k.weights, k.center); },
                    },
                    kind_);
}

double check_grad(const FunctionalConfounder& conf, const Vector& t, double eps) {
  require(eps > 0.0, Errc::InvalidArgument, "check_grad: eps must be positive");
  const Matrix analytic = conf.gradient(t);
  double worst = 0.0;
  Vector probe = t;
  for (Index i = 0; i < t.size(); ++i) {
    probe(i) = t(i) + eps;
    const Vector up = conf.value(probe);
    probe(i) = t(i) - eps;
    const Vector down = conf.value(probe);
    probe(i) = t(i);
    for (Index j = 0; j < conf.output_dim(); ++j) {
      const double numeric = (up(j) - down(j)) / (2.0 * eps);
      const double a = analytic(i, j);
      worst = std::max(worst, std::abs(a - numeric) / (1.0 + std::abs(a)));
    }
  }
  return worst;
}

void save_linear_map(const FunctionalConfounder& conf, const std::filesystem::path& path) {
  const auto* k = std::get_if<LinearMap>(&conf.kind());
  require(k != nullptr, Errc::InvalidArgument, "only LinearMap confounders are serialisable");
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  const bool centered = !k->center.isZero(0.0);
  for (Index j = 0; j < k->weights.cols(); ++j) out << (j ? "," : "") << "w_" << j;
  if (centered) out << ",center";
  out << '\n';
  for (Index i = 0; i < k->weights.rows(); ++i) {
    for (Index j = 0; j < k->weights.cols(); ++j) out << (j ? "," : "") << csv::format_double(k->weights(i, j));
    if (centered) out << ',' << csv::format_double(k->center(i));
    out << '\n';
  }
}

FunctionalConfounder load_linear_map(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const long center_col = table.column("center");
  std::vector<std::size_t> w_cols;
  for (std::size_t j = 0;; ++j) {
    const long c = table.column("w_" + std::to_string(j));
    if (c < 0) break;
    w_cols.push_back(static_cast<std::size_t>(c));
  }
  if (w_cols.empty()) fail(Errc::MalformedFile, path.string() + ": no w_* columns");
  if (table.rows.empty()) fail(Errc::EmptyFile, path.string() + " has no rows");
  const auto T = static_cast<Index>(table.rows.size());
  Matrix w(T, static_cast<Index>(w_cols.size()));
  Vector center = Vector::Zero(T);
  for (Index i = 0; i < T; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < w_cols.size(); ++j) w(i, static_cast<Index>(j)) = csv::parse_double(row[w_cols[j]]);
    if (center_col >= 0) center(i) = csv::parse_double(row[static_cast<std::size_t>(center_col)]);
  }
  return FunctionalConfounder::linear_map(std::move(w), std::move(center));
}

}  // namespace efc
