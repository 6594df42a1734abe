#include "emad/spm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emad/json_eigen.hpp"

namespace emad {

ChangeProfile change_profile(std::span<const Matrix> sequences, double eps) {
  if (sequences.empty()) throw Error("change_profile: no sequences");
  const auto hours = sequences.front().rows();
  const auto width = sequences.front().cols();
  ChangeProfile p;
  p.ratio.assign(static_cast<std::size_t>(hours), 0.0);
  for (const auto& seq : sequences)
    if (seq.rows() != hours || seq.cols() != width) throw Error("change_profile: sequence shape mismatch");

  const double norm = static_cast<double>(sequences.size()) * static_cast<double>(width);
  for (Eigen::Index j = 1; j < hours; ++j) {
    double sum = 0.0;
    for (const auto& seq : sequences)
      sum += ((seq.row(j) - seq.row(j - 1)).array().abs() / (seq.row(j - 1).array().abs() + eps)).sum();
    p.ratio[static_cast<std::size_t>(j)] = width == 0 ? 0.0 : sum / norm;
  }
  p.peak = p.ratio.empty() ? 0.0 : *std::max_element(p.ratio.begin(), p.ratio.end());
  return p;
}

std::vector<int> split_points(const ChangeProfile& profile, const SplitConfig& cfg) {
  if (!(cfg.theta > 0.0 && cfg.theta < 1.0)) throw Error("split_points: theta must lie in (0,1)");
  const int horizon = static_cast<int>(profile.ratio.size());
  std::vector<int> accepted;
  if (profile.peak > 0.0) {
    std::vector<int> cand;
    for (int j = 1; j < horizon; ++j)
      if (profile.ratio[static_cast<std::size_t>(j)] > cfg.theta * profile.peak) cand.push_back(j);
    std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
      return profile.ratio[static_cast<std::size_t>(a)] > profile.ratio[static_cast<std::size_t>(b)];
    });
    for (const int j : cand) {
      if (static_cast<int>(accepted.size()) + 1 >= cfg.max_segments) break;
      const bool clear = std::all_of(accepted.begin(), accepted.end(), [&](int a) { return std::abs(a - j) >= cfg.min_len; });
      if (clear) accepted.push_back(j);
    }
  }
  accepted.push_back(0);
  accepted.push_back(horizon);
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

std::vector<Segment> segments_from(const std::vector<int>& splits) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i + 1 < splits.size(); ++i) out.push_back({splits[i], splits[i + 1]});
  return out;
}

std::size_t segment_of(const std::vector<Segment>& segments, int hour) {
  for (std::size_t i = 0; i < segments.size(); ++i)
    if (hour >= segments[i].begin && hour < segments[i].end) return i;
  throw Error("segment_of: hour outside the segmented horizon");
}

ZScore ZScore::fit(const Matrix& pool) {
  ZScore z;
  if (pool.rows() == 0) throw Error("ZScore::fit: empty pool");
  z.mean = pool.colwise().mean();
  z.scale = ((pool.rowwise() - z.mean).array().square().colwise().mean()).sqrt().matrix();
  for (Eigen::Index j = 0; j < z.scale.size(); ++j)
    if (!(z.scale(j) > 1e-12)) z.scale(j) = 1.0;
  return z;
}

Matrix ZScore::apply_rows(const Matrix& x) const {
  return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

nlohmann::json ZScore::to_json() const { return {{"mean", row_to_json(mean)}, {"scale", row_to_json(scale)}}; }

ZScore ZScore::from_json(const nlohmann::json& j) {
  return {row_from_json(j.at("mean")), row_from_json(j.at("scale"))};
}

namespace {

std::vector<int> region(const Matrix& pts, Eigen::Index i, double eps2) {
  std::vector<int> out;
  for (Eigen::Index k = 0; k < pts.rows(); ++k)
    if ((pts.row(k) - pts.row(i)).squaredNorm() <= eps2) out.push_back(static_cast<int>(k));
  return out;
}

}  // namespace

std::vector<int> dbscan(const Matrix& points, double eps, int min_pts) {
  constexpr int kUnvisited = -2;
  const auto n = points.rows();
  std::vector<int> label(static_cast<std::size_t>(n), kUnvisited);
  const double eps2 = eps * eps;
  int cluster = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (label[static_cast<std::size_t>(i)] != kUnvisited) continue;
    const auto seeds = region(points, i, eps2);
    if (static_cast<int>(seeds.size()) < min_pts) {
      label[static_cast<std::size_t>(i)] = kNoise;
      continue;
    }
    label[static_cast<std::size_t>(i)] = cluster;
    std::vector<int> queue(seeds.begin(), seeds.end());
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const auto k = static_cast<std::size_t>(queue[q]);
      if (label[k] == kNoise) label[k] = cluster;  // border point
      if (label[k] != kUnvisited) continue;
      label[k] = cluster;
      const auto more = region(points, static_cast<Eigen::Index>(k), eps2);
      if (static_cast<int>(more.size()) >= min_pts) queue.insert(queue.end(), more.begin(), more.end());
    }
    ++cluster;
  }
  return label;
}

double suggest_eps(const Matrix& points, int k) {
  const auto n = points.rows();
  if (n == 0) throw Error("suggest_eps: empty pool");
  std::vector<double> kd(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) dist[static_cast<std::size_t>(j)] = (points.row(i) - points.row(j)).norm();
    const auto kk = static_cast<std::size_t>(std::clamp<Eigen::Index>(k - 1, 0, n - 1));
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    kd[static_cast<std::size_t>(i)] = dist[kk];
  }
  std::sort(kd.begin(), kd.end());
  const double lo = kd.front(), hi = kd.back();
  if (!(hi > lo)) return std::max(hi, 1e-9);
  double best = -1.0;
  double eps = hi;
  for (std::size_t i = 0; i < kd.size(); ++i) {
    const double x = kd.size() == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(kd.size() - 1);
    const double y = (kd[i] - lo) / (hi - lo);
    if (x - y > best) {
      best = x - y;
      eps = kd[i];
    }
  }
  return std::max(eps, 1e-9);
}

ClusterResult cluster_statuses(const Matrix& segment_vectors, double eps, int min_pts, TreeConfig tree_cfg) {
  if (segment_vectors.rows() < min_pts) throw DataError("cluster_statuses: fewer vectors than min_pts");
  ClusterResult out;
  auto& cat = out.catalog;
  cat.eps = eps;
  cat.min_pts = min_pts;
  cat.norm = ZScore::fit(segment_vectors);
  const Matrix z = cat.norm.apply_rows(segment_vectors);
  out.labels = dbscan(z, eps, min_pts);

  const int k = 1 + *std::max_element(out.labels.begin(), out.labels.end());
  if (k <= 0) throw DataError("cluster_statuses: every segment vector is noise; retune eps/min_pts");

  cat.centers = Matrix::Zero(k, z.cols());
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  std::vector<Eigen::Index> members;
  std::vector<int> y;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int l = out.labels[static_cast<std::size_t>(i)];
    if (l == kNoise) continue;
    cat.centers.row(l) += z.row(i);
    ++count[static_cast<std::size_t>(l)];
    members.push_back(i);
    y.push_back(l);
  }
  for (int c = 0; c < k; ++c) cat.centers.row(c) /= count[static_cast<std::size_t>(c)];

  Matrix x(static_cast<Eigen::Index>(members.size()), z.cols());
  for (std::size_t i = 0; i < members.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = z.row(members[i]);
  tree_cfg.class_weights.clear();
  cat.status_tree = DecisionTree::fit(x, y, tree_cfg, k);
  return out;
}

StatusAssignment assign_status(const Eigen::Ref<const RowVector>& segment_vector, const StatusCatalog& catalog) {
  if (segment_vector.size() != catalog.norm.mean.size()) throw Error("assign_status: width mismatch");
  const RowVector z = catalog.norm.apply(segment_vector);
  StatusAssignment a;
  a.status = catalog.status_tree.predict_class(z);
  a.distance = (z - catalog.centers.row(a.status)).norm();
  return a;
}

std::vector<RowVector> segment_importances(std::span<const Matrix> sequences, const std::vector<int>& labels,
                                           const std::vector<Segment>& segments, const TreeConfig& cfg) {
  if (sequences.size() != labels.size()) throw Error("segment_importances: label count mismatch");
  std::vector<RowVector> out;
  if (sequences.empty()) return out;
  const auto width = sequences.front().cols();
  for (const auto& seg : segments) {
    Matrix x(static_cast<Eigen::Index>(sequences.size()), width);
    for (std::size_t i = 0; i < sequences.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = sequences[i].middleRows(seg.begin, seg.length()).colwise().mean();
    const auto tree = DecisionTree::fit(x, labels, cfg);
    out.push_back(tree.importance().transpose());
  }
  return out;
}

nlohmann::json StatusCatalog::to_json() const {
  nlohmann::json imps = nlohmann::json::array();
  for (const auto& r : segment_importance) imps.push_back(row_to_json(r));
  return {{"normalization", norm.to_json()},
          {"centers", tensor_to_json(centers)},
          {"status_tree", status_tree.to_json()},
          {"splits", splits},
          {"segment_importance", imps},
          {"eps", eps},
          {"min_pts", min_pts}};
}

StatusCatalog StatusCatalog::from_json(const nlohmann::json& j) {
  StatusCatalog c;
  c.norm = ZScore::from_json(j.at("normalization"));
  c.centers = tensor_from_json(j.at("centers"));
  c.status_tree = DecisionTree::from_json(j.at("status_tree"));
  c.splits = j.at("splits").get<std::vector<int>>();
  for (const auto& r : j.at("segment_importance")) c.segment_importance.push_back(row_from_json(r));
  c.eps = j.at("eps").get<double>();
  c.min_pts = j.at("min_pts").get<int>();
  return c;
}

}  // namespace emad
