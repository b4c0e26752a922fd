#include "efc/regression.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

#include "efc/errors.hpp"

namespace efc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z), stable for large |z|.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

Vector json_to_vector(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

const char* to_string(ModelKind kind) noexcept {
  return kind == ModelKind::KernelRidge ? "kernel_ridge" : "logistic_lasso";
}

OutcomeModel::OutcomeModel(KernelRidge m) : model_(std::move(m)) {
  const auto& k = std::get<KernelRidge>(model_);
  require(k.train_points.rows() == k.dual.size() && k.train_points.rows() > 0, Errc::DimensionMismatch,
          "kernel ridge needs one dual coefficient per training point");
}

OutcomeModel::OutcomeModel(LogisticLasso m) : model_(std::move(m)) {
  require(std::get<LogisticLasso>(model_).weights.size() > 0, Errc::DimensionMismatch,
          "logistic lasso needs at least one weight");
}

ModelKind OutcomeModel::kind() const noexcept {
  return std::holds_alternative<KernelRidge>(model_) ? ModelKind::KernelRidge : ModelKind::LogisticLasso;
}

Index OutcomeModel::dim() const noexcept {
  return std::visit(overloaded{[](const KernelRidge& k) { return k.train_points.cols(); },
                               [](const LogisticLasso& l) { return l.weights.size(); }},
                    model_);
}

const KernelRidge& OutcomeModel::kernel_ridge() const {
  if (kind() != ModelKind::KernelRidge) fail(Errc::InvalidArgument, "model is not kernel ridge");
  return std::get<KernelRidge>(model_);
}

const LogisticLasso& OutcomeModel::logistic_lasso() const {
  if (kind() != ModelKind::LogisticLasso) fail(Errc::InvalidArgument, "model is not a logistic lasso");
  return std::get<LogisticLasso>(model_);
}

double OutcomeModel::predict(const Vector& t) const {
  require(t.size() == dim(), Errc::DimensionMismatch,
          "predict expects length " + std::to_string(dim()) + ", got " + std::to_string(t.size()));
  return std::visit(overloaded{[&](const KernelRidge& k) {
                                 const Vector lin = (k.train_points * t).array() + k.offset;
                                 return lin.array().square().matrix().dot(k.dual);
                               },
                               [&](const LogisticLasso& l) { return sigmoid(l.weights.dot(t) + l.intercept); }},
                    model_);
}

Vector OutcomeModel::predict_batch(const Matrix& points) const {
  require(points.cols() == dim(), Errc::DimensionMismatch, "predict_batch column count mismatch");
  return std::visit(overloaded{[&](const KernelRidge& k) -> Vector {
                                 return polynomial_kernel(points, k.train_points, k.offset) * k.dual;
                               },
                               [&](const LogisticLasso& l) -> Vector {
                                 Vector z = points * l.weights;
                                 for (Index i = 0; i < z.size(); ++i) z(i) = sigmoid(z(i) + l.intercept);
                                 return z;
                               }},
                    model_);
}

nlohmann::json OutcomeModel::to_json() const {
  return std::visit(
      overloaded{[](const KernelRidge& k) {
                   nlohmann::json rows = nlohmann::json::array();
                   for (Index i = 0; i < k.train_points.rows(); ++i) {
                     rows.push_back(vector_to_json(k.train_points.row(i).transpose()));
                   }
                   return nlohmann::json{{"kind", "kernel_ridge"}, {"lambda", k.lambda}, {"offset", k.offset},
                                         {"train_points", rows},   {"dual", vector_to_json(k.dual)}};
                 },
                 [](const LogisticLasso& l) {
                   return nlohmann::json{{"kind", "logistic_lasso"},
                                         {"lambda1", l.lambda1},
                                         {"intercept", l.intercept},
                                         {"weights", vector_to_json(l.weights)}};
                 }},
      model_);
}

OutcomeModel OutcomeModel::from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "kernel_ridge") {
      KernelRidge k;
      k.lambda = j.at("lambda").get<double>();
      k.offset = j.at("offset").get<double>();
      k.dual = json_to_vector(j.at("dual"));
      const auto& rows = j.at("train_points");
      require(rows.size() == static_cast<std::size_t>(k.dual.size()), Errc::MalformedFile,
              "train_points and dual lengths differ");
      const Index dim = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
      k.train_points.resize(k.dual.size(), dim);
      for (Index i = 0; i < k.dual.size(); ++i) {
        const Vector r = json_to_vector(rows[static_cast<std::size_t>(i)]);
        require(r.size() == dim, Errc::MalformedFile, "ragged train_points");
        k.train_points.row(i) = r.transpose();
      }
      return OutcomeModel(std::move(k));
    }
    if (kind == "logistic_lasso") {
      LogisticLasso l;
      l.lambda1 = j.at("lambda1").get<double>();
      l.intercept = j.at("intercept").get<double>();
      l.weights = json_to_vector(j.at("weights"));
      return OutcomeModel(std::move(l));
    }
    fail(Errc::MalformedFile, "unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::MalformedFile, std::string("bad model JSON: ") + e.what());
  }
}

void OutcomeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  out << to_json().dump() << '\n';
}

OutcomeModel OutcomeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::MalformedFile, path.string() + ": " + e.what());
  }
  return from_json(j);
}

Matrix polynomial_kernel(const Matrix& a, const Matrix& b, double offset) {
  require(a.cols() == b.cols(), Errc::DimensionMismatch, "kernel inputs differ in dimension");
  Matrix k = a * b.transpose();
  k.array() += offset;
  return k.array().square().matrix();
}

double default_krr_lambda(Index n) { return 1e-4 * static_cast<double>(n); }

OutcomeModel fit_krr(const Dataset& data, double lambda, double offset) {
  require(!data.empty(), Errc::EmptyDataset, "kernel ridge needs at least one row");
  require(lambda > 0.0 && std::isfinite(lambda), Errc::InvalidArgument, "ridge lambda must be positive");
  require(offset >= 0.0 && std::isfinite(offset), Errc::InvalidArgument, "kernel offset must be >= 0");
  const Vector& y = data.outcomes();

  Matrix system = polynomial_kernel(data.points(), data.points(), offset);
  system.diagonal().array() += lambda;
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success) fail(Errc::NumericalFailure, "K + lambda I is not positive definite");
  Vector dual = llt.solve(y);
  dual += llt.solve(y - system * dual);  // one refinement pass
  if (!dual.allFinite()) fail(Errc::NumericalFailure, "kernel ridge solve produced non-finite coefficients");

  return OutcomeModel(KernelRidge{data.points(), std::move(dual), lambda, offset});
}

double logistic_lasso_objective(const Matrix& x, const Vector& y, const Vector& w, double b, double lambda1) {
  const Vector z = (x * w).array() + b;
  double loss = 0.0;
  for (Index i = 0; i < z.size(); ++i) loss += softplus(z(i)) - y(i) * z(i);
  return loss / static_cast<double>(y.size()) + lambda1 * w.lpNorm<1>();
}

namespace {

struct LassoState {
  Vector w;
  double b = 0.0;
};

}  // namespace

LassoFit solve_logistic_lasso(const Matrix& x, const Vector& y, double lambda1, const LassoOptions& options,
                              const LogisticLasso* warm_start) {
  require(x.rows() == y.size() && x.rows() > 0, Errc::DimensionMismatch, "lasso design and labels differ in length");
  require(lambda1 >= 0.0 && std::isfinite(lambda1), Errc::InvalidArgument, "lambda1 must be >= 0");
  require(options.max_iter >= 1 && options.rel_tolerance > 0.0, Errc::InvalidArgument, "bad lasso options");
  for (Index i = 0; i < y.size(); ++i) {
    require(y(i) == 0.0 || y(i) == 1.0, Errc::InvalidArgument, "logistic lasso labels must be 0 or 1");
  }
  const double n = static_cast<double>(x.rows());

  // Work on centred columns: the intercept absorbs the shift and the penalty
  // is unchanged, but the problem is far better conditioned.
  const Vector means = x.colwise().mean().transpose();
  const Matrix xc = x.rowwise() - means.transpose();

  LassoState s;
  if (warm_start != nullptr) {
    require(warm_start->weights.size() == x.cols(), Errc::DimensionMismatch, "warm start has the wrong length");
    s.w = warm_start->weights;
    s.b = warm_start->intercept + means.dot(s.w);
  } else {
    s.w = Vector::Zero(x.cols());
    const double p = std::clamp(y.mean(), 1e-12, 1.0 - 1e-12);
    s.b = std::log(p / (1.0 - p));
  }

  auto smooth = [&](const LassoState& st, Vector* z_out) {
    Vector z = (xc * st.w).array() + st.b;
    double loss = 0.0;
    for (Index i = 0; i < z.size(); ++i) loss += softplus(z(i)) - y(i) * z(i);
    if (z_out) *z_out = std::move(z);
    return loss / n;
  };

  LassoFit fit;
  Vector z;
  double f = smooth(s, &z);
  double objective = f + lambda1 * s.w.lpNorm<1>();
  fit.objective_trace.push_back(objective);

  double lipschitz = 1e-3;
  for (long it = 0; it < options.max_iter; ++it) {
    Vector resid(z.size());
    for (Index i = 0; i < z.size(); ++i) resid(i) = sigmoid(z(i)) - y(i);
    const Vector grad_w = xc.transpose() * resid / n;
    const double grad_b = resid.mean();

    LassoState next;
    Vector z_next;
    double f_next = 0.0;
    for (int tries = 0;; ++tries) {
      const double step = 1.0 / lipschitz;
      const Vector v = s.w - step * grad_w;
      next.w = (v.array().abs() - step * lambda1).max(0.0) * v.array().sign();
      next.b = s.b - step * grad_b;
      f_next = smooth(next, &z_next);
      const Vector dw = next.w - s.w;
      const double db = next.b - s.b;
      const double model =
          f + grad_w.dot(dw) + grad_b * db + 0.5 * lipschitz * (dw.squaredNorm() + db * db);
      if (f_next <= model + 1e-15 * std::abs(f)) break;
      lipschitz *= 2.0;
      if (tries > 200) fail(Errc::NumericalFailure, "lasso backtracking failed");
    }
    const double next_objective = f_next + lambda1 * next.w.lpNorm<1>();
    ++fit.iterations;
    // The majorisation guarantees descent up to rounding; never accept an increase.
    if (next_objective > objective) break;
    const double change = objective - next_objective;
    s = std::move(next);
    z = std::move(z_next);
    f = f_next;
    fit.objective_trace.push_back(next_objective);
    const bool done = change <= options.rel_tolerance * std::max(1.0, std::abs(objective));
    objective = next_objective;
    if (done) break;
    lipschitz = std::max(lipschitz * 0.5, 1e-6);
  }

  fit.model.weights = s.w;
  fit.model.intercept = s.b - means.dot(s.w);
  fit.model.lambda1 = lambda1;
  return fit;
}

OutcomeModel fit_logistic_lasso(const Dataset& data, double lambda1, const LassoOptions& options) {
  require(!data.empty(), Errc::EmptyDataset, "logistic lasso needs at least one row");
  return OutcomeModel(solve_logistic_lasso(data.points(), data.outcomes(), lambda1, options).model);
}

double mean_log_loss(const Vector& y, const Vector& prob) {
  require(y.size() == prob.size() && y.size() > 0, Errc::DimensionMismatch, "log-loss inputs differ in length");
  double total = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double p = std::clamp(prob(i), 1e-12, 1.0 - 1e-12);
    total -= y(i) * std::log(p) + (1.0 - y(i)) * std::log1p(-p);
  }
  return total / static_cast<double>(y.size());
}

namespace {

// Explicit features of the degree-2 polynomial kernel: phi(a)^T phi(b) = (a^T b + c)^2.
Matrix poly2_features(const Matrix& x, double offset) {
  const Index d = x.cols();
  const Index p = 1 + d + d * (d + 1) / 2;
  Matrix f(x.rows(), p);
  const double s1 = std::sqrt(2.0 * offset);
  const double s2 = std::sqrt(2.0);
  for (Index r = 0; r < x.rows(); ++r) {
    Index c = 0;
    f(r, c++) = offset;
    for (Index i = 0; i < d; ++i) f(r, c++) = s1 * x(r, i);
    for (Index i = 0; i < d; ++i) {
      f(r, c++) = x(r, i) * x(r, i);
      for (Index j = i + 1; j < d; ++j) f(r, c++) = s2 * x(r, i) * x(r, j);
    }
  }
  return f;
}

// Validation predictions of kernel ridge for every lambda, using whichever of
// the primal (feature) or dual system is smaller.
std::vector<Vector> krr_path(const Matrix& xtr, const Vector& ytr, const Matrix& xva,
                             const std::vector<double>& lambdas, double offset) {
  std::vector<Vector> preds;
  const Index d = xtr.cols();
  const Index p = 1 + d + d * (d + 1) / 2;
  if (p < xtr.rows()) {
    const Matrix ftr = poly2_features(xtr, offset);
    const Matrix fva = poly2_features(xva, offset);
    const Matrix gram = ftr.transpose() * ftr;
    const Vector rhs = ftr.transpose() * ytr;
    for (double lam : lambdas) {
      Matrix sys = gram;
      sys.diagonal().array() += lam;
      Eigen::LLT<Matrix> llt(sys);
      if (llt.info() != Eigen::Success) fail(Errc::NumericalFailure, "CV ridge system is not positive definite");
      preds.push_back(fva * llt.solve(rhs));
    }
  } else {
    const Matrix k = polynomial_kernel(xtr, xtr, offset);
    const Matrix kva = polynomial_kernel(xva, xtr, offset);
    for (double lam : lambdas) {
      Matrix sys = k;
      sys.diagonal().array() += lam;
      Eigen::LLT<Matrix> llt(sys);
      if (llt.info() != Eigen::Success) fail(Errc::NumericalFailure, "CV kernel system is not positive definite");
      preds.push_back(kva * llt.solve(ytr));
    }
  }
  return preds;
}

Matrix take_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}

Vector take(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Index>(k)) = v(rows[k]);
  return out;
}

}  // namespace

CvResult cross_validate(const Dataset& data, int folds, std::vector<double> grid, ModelKind kind, RngSeed rng,
                        double krr_offset) {
  require(folds >= 2, Errc::InvalidArgument, "cross-validation needs at least 2 folds");
  require(!grid.empty(), Errc::InvalidArgument, "lambda grid is empty");
  for (double lam : grid) {
    const bool ok = kind == ModelKind::KernelRidge ? lam > 0.0 : lam >= 0.0;
    require(ok && std::isfinite(lam), Errc::InvalidArgument, "invalid lambda in grid");
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  CvResult result;
  result.lambdas = grid;
  if (grid.size() == 1) {
    result.chosen_lambda = grid.front();
    result.mean_loss.assign(1, std::numeric_limits<double>::quiet_NaN());
    return result;
  }
  const Index n = data.size();
  if (n < folds) {
    fail(Errc::FoldTooSmall, std::to_string(n) + " rows cannot fill " + std::to_string(folds) + " folds");
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto engine = make_engine(rng);
  std::shuffle(order.begin(), order.end(), engine);

  const Vector& y = data.outcomes();
  result.mean_loss.assign(grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train, valid;
    for (Index pos = 0; pos < n; ++pos) {
      (pos % folds == f ? valid : train).push_back(order[static_cast<std::size_t>(pos)]);
    }
    const Matrix xtr = take_rows(data.points(), train);
    const Matrix xva = take_rows(data.points(), valid);
    const Vector ytr = take(y, train);
    const Vector yva = take(y, valid);

    if (kind == ModelKind::KernelRidge) {
      const auto preds = krr_path(xtr, ytr, xva, grid, krr_offset);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        result.mean_loss[g] += (preds[g] - yva).squaredNorm() / static_cast<double>(yva.size());
      }
    } else {
      // Largest lambda first so each fit warm-starts from a sparser solution.
      std::optional<LogisticLasso> warm;
      for (std::size_t g = grid.size(); g-- > 0;) {
        auto fit = solve_logistic_lasso(xtr, ytr, grid[g], {}, warm ? &*warm : nullptr);
        const OutcomeModel m(fit.model);
        result.mean_loss[g] += mean_log_loss(yva, m.predict_batch(xva));
        warm = std::move(fit.model);
      }
    }
  }
  for (double& l : result.mean_loss) l /= folds;

  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (result.mean_loss[g] <= result.mean_loss[best]) best = g;
  }
  result.chosen_lambda = grid[best];
  return result;
}

Vector model_gradient(const OutcomeModel& model, const Vector& t, double eps) {
  require(eps > 0.0, Errc::InvalidArgument, "finite-difference step must be positive");
  Vector grad(t.size());
  Vector probe = t;
  for (Index i = 0; i < t.size(); ++i) {
    probe(i) = t(i) + eps;
    const double up = model.predict(probe);
    probe(i) = t(i) - eps;
    const double down = model.predict(probe);
    probe(i) = t(i);
    grad(i) = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace efc
