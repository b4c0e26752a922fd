#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "efc/rng.hpp"
#include "efc/types.hpp"

namespace efc {

class FunctionalConfounder;

/// Rows of pre-outcome vectors t, optional outcomes y and optional cached h(t).
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Matrix points, std::optional<Vector> outcomes = std::nullopt,
                   std::optional<Matrix> confounder_cache = std::nullopt);

  Index size() const noexcept { return points_.rows(); }
  Index dim() const noexcept { return points_.cols(); }
  bool empty() const noexcept { return points_.rows() == 0; }

  const Matrix& points() const noexcept { return points_; }
  Vector point(Index i) const { return points_.row(i).transpose(); }

  bool has_outcomes() const noexcept { return outcomes_.has_value(); }
  /// Throws InvalidArgument when the dataset carries no outcomes.
  const Vector& outcomes() const;

  const std::optional<Matrix>& confounder_cache() const noexcept { return cache_; }

  /// Rows selected by index, in the given order.
  Dataset subset(const std::vector<Index>& rows) const;

 private:
  Matrix points_;
  std::optional<Vector> outcomes_;
  std::optional<Matrix> cache_;
};

/// A request for the conditional effect of do(t = t_star) with the confounder
/// held at h_target.
struct InterventionQuery {
  Vector t_star;
  Vector h_target;
};

/// CSV with header t_0..t_{T-1}[,y]. With has_outcome false a y column is ignored.
Dataset load_dataset(const std::filesystem::path& path, bool has_outcome);
void save_dataset(const Dataset& data, const std::filesystem::path& path);

/// Sidecar metadata written next to generated data: `<path>.meta.json`.
std::filesystem::path metadata_path(const std::filesystem::path& data_path);
void write_metadata(const std::filesystem::path& data_path, const nlohmann::json& meta);

/// One query per row: t_star = row i, h_target = h(row pi(i)) with pi a
/// uniformly drawn derangement (pi(i) != i whenever n > 1).
std::vector<InterventionQuery> make_eval_queries(const Dataset& data,
                                                 const FunctionalConfounder& conf,
                                                 RngSeed rng);

/// Query CSV: t_0..t_{T-1}, h_0..h_{d-1}.
std::vector<InterventionQuery> load_queries(const std::filesystem::path& path);
void save_queries(const std::vector<InterventionQuery>& queries, const std::filesystem::path& path);

}  // namespace efc
