#include "efc/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "efc/confounder.hpp"
#include "efc/csv.hpp"
#include "efc/errors.hpp"

namespace efc {

Dataset::Dataset(Matrix points, std::optional<Vector> outcomes, std::optional<Matrix> confounder_cache)
    : points_(std::move(points)), outcomes_(std::move(outcomes)), cache_(std::move(confounder_cache)) {
  require(points_.allFinite(), Errc::NonFinite, "dataset points must be finite");
  if (outcomes_) {
    require(outcomes_->size() == points_.rows(), Errc::DimensionMismatch,
            "outcome length " + std::to_string(outcomes_->size()) + " != row count " +
                std::to_string(points_.rows()));
    require(outcomes_->allFinite(), Errc::NonFinite, "dataset outcomes must be finite");
  }
  if (cache_) {
    require(cache_->rows() == points_.rows(), Errc::DimensionMismatch,
            "confounder cache row count must equal dataset size");
    require(cache_->allFinite(), Errc::NonFinite, "confounder cache must be finite");
  }
}

const Vector& Dataset::outcomes() const {
  if (!outcomes_) fail(Errc::InvalidArgument, "dataset has no outcomes");
  return *outcomes_;
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Matrix pts(static_cast<Index>(rows.size()), dim());
  std::optional<Vector> ys;
  std::optional<Matrix> hs;
  if (outcomes_) ys = Vector(static_cast<Index>(rows.size()));
  if (cache_) hs = Matrix(static_cast<Index>(rows.size()), cache_->cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Index i = rows[k];
    require(i >= 0 && i < size(), Errc::InvalidArgument, "subset row out of range");
    const auto r = static_cast<Index>(k);
    pts.row(r) = points_.row(i);
    if (ys) (*ys)(r) = (*outcomes_)(i);
    if (hs) hs->row(r) = cache_->row(i);
  }
  return Dataset(std::move(pts), std::move(ys), std::move(hs));
}

Dataset load_dataset(const std::filesystem::path& path, bool has_outcome) {
  const auto table = csv::read(path);
  const auto& header = table.header;
  // A trailing y column is skipped when outcomes are not wanted.
  const bool y_column = !header.empty() && header.back() == "y";
  const std::size_t n_t = y_column ? header.size() - 1 : header.size();
  if (has_outcome && (header.empty() || header.back() != "y")) {
    fail(Errc::MalformedFile, path.string() + ": last column must be 'y'");
  }
  for (std::size_t j = 0; j < n_t; ++j) {
    if (header[j] != "t_" + std::to_string(j)) {
      fail(Errc::MalformedFile, path.string() + ": expected column t_" + std::to_string(j) + ", got '" +
                                    header[j] + "'");
    }
  }
  if (n_t == 0) fail(Errc::MalformedFile, path.string() + ": no t columns");
  if (table.rows.empty()) fail(Errc::EmptyFile, path.string() + " has no data rows");

  const auto n = static_cast<Index>(table.rows.size());
  Matrix pts(n, static_cast<Index>(n_t));
  Vector ys(has_outcome ? n : 0);
  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < n_t; ++j) pts(i, static_cast<Index>(j)) = csv::parse_double(row[j]);
    if (has_outcome) ys(i) = csv::parse_double(row.back());
  }
  if (has_outcome) return Dataset(std::move(pts), std::move(ys));
  return Dataset(std::move(pts));
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  for (Index j = 0; j < data.dim(); ++j) out << (j ? "," : "") << "t_" << j;
  if (data.has_outcomes()) out << ",y";
  out << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) out << (j ? "," : "") << csv::format_double(data.points()(i, j));
    if (data.has_outcomes()) out << ',' << csv::format_double(data.outcomes()(i));
    out << '\n';
  }
  if (!out) fail(Errc::Io, "write failed for " + path.string());
}

std::filesystem::path metadata_path(const std::filesystem::path& data_path) {
  return std::filesystem::path(data_path.string() + ".meta.json");
}

void write_metadata(const std::filesystem::path& data_path, const nlohmann::json& meta) {
  std::ofstream out(metadata_path(data_path));
  if (!out) fail(Errc::Io, "cannot write metadata for " + data_path.string());
  out << meta.dump(2) << '\n';
}

std::vector<InterventionQuery> make_eval_queries(const Dataset& data, const FunctionalConfounder& conf,
                                                 RngSeed rng) {
  require(!data.empty(), Errc::EmptyDataset, "cannot build queries from an empty dataset");
  require(data.dim() == conf.input_dim(), Errc::DimensionMismatch, "confounder dimension differs from dataset");
  const auto n = static_cast<std::size_t>(data.size());

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  if (n > 1) {
    // Rejection sampling of shuffles gives a uniform derangement.
    auto engine = make_engine(rng);
    auto has_fixed_point = [&] {
      for (std::size_t i = 0; i < n; ++i)
        if (perm[i] == i) return true;
      return false;
    };
    do {
      std::shuffle(perm.begin(), perm.end(), engine);
    } while (has_fixed_point());
  }

  std::vector<InterventionQuery> queries;
  queries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = static_cast<Index>(perm[i]);
    Vector h = data.confounder_cache() ? Vector(data.confounder_cache()->row(src).transpose())
                                       : conf.value(data.point(src));
    queries.push_back({data.point(static_cast<Index>(i)), std::move(h)});
  }
  return queries;
}

std::vector<InterventionQuery> load_queries(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  std::vector<std::size_t> t_cols, h_cols;
  for (std::size_t j = 0;; ++j) {
    const long c = table.column("t_" + std::to_string(j));
    if (c < 0) break;
    t_cols.push_back(static_cast<std::size_t>(c));
  }
  for (std::size_t j = 0;; ++j) {
    const long c = table.column("h_" + std::to_string(j));
    if (c < 0) break;
    h_cols.push_back(static_cast<std::size_t>(c));
  }
  if (t_cols.empty() || h_cols.empty()) fail(Errc::MalformedFile, path.string() + ": need t_* and h_* columns");
  if (table.rows.empty()) fail(Errc::EmptyFile, path.string() + " has no queries");
  std::vector<InterventionQuery> queries;
  for (const auto& row : table.rows) {
    InterventionQuery q{Vector(static_cast<Index>(t_cols.size())), Vector(static_cast<Index>(h_cols.size()))};
    for (std::size_t j = 0; j < t_cols.size(); ++j) q.t_star(static_cast<Index>(j)) = csv::parse_double(row[t_cols[j]]);
    for (std::size_t j = 0; j < h_cols.size(); ++j) q.h_target(static_cast<Index>(j)) = csv::parse_double(row[h_cols[j]]);
    queries.push_back(std::move(q));
  }
  return queries;
}

void save_queries(const std::vector<InterventionQuery>& queries, const std::filesystem::path& path) {
  require(!queries.empty(), Errc::EmptyDataset, "no queries to save");
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  const Index T = queries.front().t_star.size();
  const Index d = queries.front().h_target.size();
  for (Index j = 0; j < T; ++j) out << (j ? "," : "") << "t_" << j;
  for (Index j = 0; j < d; ++j) out << ",h_" << j;
  out << '\n';
  for (const auto& q : queries) {
    require(q.t_star.size() == T && q.h_target.size() == d, Errc::DimensionMismatch, "ragged queries");
    for (Index j = 0; j < T; ++j) out << (j ? "," : "") << csv::format_double(q.t_star(j));
    for (Index j = 0; j < d; ++j) out << ',' << csv::format_double(q.h_target(j));
    out << '\n';
  }
}

}  // namespace efc
