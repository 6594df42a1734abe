#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "emad/common.hpp"

namespace emad {

struct TreeConfig {
  int max_depth = 8;
  int min_samples_split = 10;
  /// Per-class sample weights (C+/C- for binary trees); empty means all ones.
  std::vector<double> class_weights;
  std::uint64_t seed = 0;
};

/// CART classifier with Gini splits and weighted-impurity-decrease importance.
///
/// Samples are routed left when x[feature] <= threshold. Split ties go to the
/// lowest feature index, then the lowest threshold. Class counts are kept as
/// integers, so the fitted tree does not depend on sample order.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> value;  // class distribution (weighted)
    double weight = 0.0;
  };

  DecisionTree() = default;

  /// `multiplicity` gives per-sample integer counts (bootstrap draws); empty means one each.
  static DecisionTree fit(const Matrix& x, const std::vector<int>& y, const TreeConfig& cfg, int n_classes = 2,
                          const std::vector<int>& multiplicity = {});

  /// Positive-class probability of a binary tree.
  double predict(const Eigen::Ref<const RowVector>& x) const;
  std::vector<double> predict_proba(const Eigen::Ref<const RowVector>& x) const;
  int predict_class(const Eigen::Ref<const RowVector>& x) const;
  Vector predict_all(const Matrix& x) const;

  const Vector& importance() const noexcept { return importance_; }
  double max_importance() const { return importance_.size() == 0 ? 0.0 : importance_.maxCoeff(); }
  std::size_t width() const noexcept { return width_; }
  int n_classes() const noexcept { return n_classes_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  int depth() const;
  std::size_t split_count() const;

  nlohmann::json to_json() const;
  static DecisionTree from_json(const nlohmann::json& j);

 private:
  const Node& leaf_for(const Eigen::Ref<const RowVector>& x) const;

  std::vector<Node> nodes_;
  Vector importance_;
  std::size_t width_ = 0;
  int n_classes_ = 2;
};

}  // namespace emad
