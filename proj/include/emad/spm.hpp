#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "emad/dtree.hpp"

namespace emad {

/// Half-open hour interval [begin, end).
struct Segment {
  int begin = 0;
  int end = 0;
  int length() const noexcept { return end - begin; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct ChangeProfile {
  std::vector<double> ratio;  // per hour; ratio[0] == 0
  double peak = 0.0;
};

/// Mean over sequences and features of |f_j - f_{j-1}| / (|f_{j-1}| + eps).
ChangeProfile change_profile(std::span<const Matrix> sequences, double eps = 1e-8);

struct SplitConfig {
  double theta = 0.3;
  int min_len = 2;
  /// Upper bound on the number of segments; the strongest splits win.
  int max_segments = 16;
};

/// Split hours with C_j > theta * peak (strict), thinned so that kept splits
/// are at least `min_len` apart (larger C_j first). Includes 0 and the horizon.
std::vector<int> split_points(const ChangeProfile& profile, const SplitConfig& cfg);
std::vector<Segment> segments_from(const std::vector<int>& splits);
/// Index of the segment containing `hour`.
std::size_t segment_of(const std::vector<Segment>& segments, int hour);

/// Importance-weighted time mean of a slice (divisor is the slice length).
template <typename Slice, typename Weights>
RowVector segment_vector(const Eigen::MatrixBase<Slice>& slice, const Eigen::MatrixBase<Weights>& importance) {
  if (slice.rows() == 0) throw Error("segment_vector: empty slice");
  if (importance.size() != slice.cols()) throw Error("segment_vector: importance width mismatch");
  RowVector out = slice.colwise().mean();
  for (Eigen::Index j = 0; j < out.size(); ++j) out(j) *= importance.derived().coeff(j);
  return out;
}

/// Per-dimension z-score; zero-variance dimensions use unit scale.
struct ZScore {
  RowVector mean;
  RowVector scale;

  static ZScore fit(const Matrix& pool);
  RowVector apply(const Eigen::Ref<const RowVector>& x) const { return (x - mean).cwiseQuotient(scale); }
  Matrix apply_rows(const Matrix& x) const;
  nlohmann::json to_json() const;
  static ZScore from_json(const nlohmann::json& j);
};

inline constexpr int kNoise = -1;

/// Euclidean DBSCAN; a point is core when at least `min_pts` points (itself
/// included) lie within `eps`. Cluster ids follow discovery order.
std::vector<int> dbscan(const Matrix& points, double eps, int min_pts);

/// k-distance elbow (largest gap below the chord of the sorted k-distance curve).
double suggest_eps(const Matrix& points, int k);

struct StatusCatalog {
  ZScore norm;
  Matrix centers;  // K x d, in normalized space
  DecisionTree status_tree;
  std::vector<int> splits;
  std::vector<RowVector> segment_importance;  // one per segment
  double eps = 0.0;
  int min_pts = 0;

  int status_count() const noexcept { return static_cast<int>(centers.rows()); }
  /// Extra id reserved for noise segments.
  int noise_id() const noexcept { return status_count(); }

  nlohmann::json to_json() const;
  static StatusCatalog from_json(const nlohmann::json& j);
};

struct ClusterResult {
  StatusCatalog catalog;
  std::vector<int> labels;  // DBSCAN labels of the pool, kNoise for outliers
};

/// Normalizes the pool, clusters it, and fits the status tree on non-noise points.
/// Throws DataError when every point is noise.
ClusterResult cluster_statuses(const Matrix& segment_vectors, double eps, int min_pts, TreeConfig tree_cfg = {});

struct StatusAssignment {
  int status = 0;
  double distance = 0.0;  // to the assigned center, normalized space
};

StatusAssignment assign_status(const Eigen::Ref<const RowVector>& segment_vector, const StatusCatalog& catalog);

/// Fits one tree per segment on per-address segment means and returns its importance.
std::vector<RowVector> segment_importances(std::span<const Matrix> sequences, const std::vector<int>& labels,
                                           const std::vector<Segment>& segments, const TreeConfig& cfg);

}  // namespace emad
