#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "emad/dtree.hpp"
#include "emad/featureset.hpp"

namespace emad {

/// Augment / reserve / delete lists over base feature names.
struct FeatureLists {
  std::set<std::string> augment;
  std::set<std::string> reserve;
  std::set<std::string> deleted;

  /// Reserve holds every seed feature; the other two are empty.
  static FeatureLists initial();
  /// Address features in reserve, every path feature deleted.
  static FeatureLists address_only();
  bool disjoint() const;

  nlohmann::json to_json() const;
  static FeatureLists from_json(const nlohmann::json& j);
  friend bool operator==(const FeatureLists&, const FeatureLists&) = default;
};

struct Classification {
  FeatureLists lists;
  /// Every importance was zero; all features landed in delete.
  bool degenerate = false;
};

/// Splits features by importance against theta * max importance (inclusive).
/// Features that cannot be augmented stay in reserve when they meet the bar.
Classification classify_features(const std::vector<std::string>& names, const Vector& importance, double theta,
                                 const std::function<bool(const std::string&)>& can_augment = is_augmentable);

/// Column importances of `schema` summed per base feature, then classified.
/// Bases already deleted stay deleted.
Classification classify_schema(const FeatureSchema& schema, const Vector& column_importance, double theta,
                               const std::set<std::string>& already_deleted = {});

/// Next-round schema: deleted bases drop out, augmented path features gain
/// their max/min/std columns, reserved ones keep whatever columns they had.
FeatureSchema apply_lists(const FeatureSchema& current, const FeatureLists& lists);
FeatureSchema apply_lists(const FeatureLists& lists);

struct DtsaConfig {
  double theta = 0.5;
  int sessions = 10;
  int max_rounds = 20;
  double validation_fraction = 0.2;
  TreeConfig tree;
  std::uint64_t seed = 0;
  /// Starting lists; path features deleted here never come back.
  FeatureLists start = FeatureLists::initial();
};

struct DtsaRound {
  int round = 0;
  std::string schema_id;
  std::size_t schema_width = 0;
  std::vector<double> session_scores;
  double average = 0.0;
  double best = 0.0;
  bool accepted = false;
  FeatureLists lists_in_effect;
  FeatureLists proposed;
};

struct DtsaReport {
  std::vector<DtsaRound> rounds;
  bool degenerate = false;
  std::string stop_reason;
  nlohmann::json to_json() const;
};

struct DtsaResult {
  FeatureLists lists;
  /// Schema the returned lists select.
  FeatureSchema schema;
  DtsaReport report;
  /// Best session tree of the last accepted round and the schema it was fitted on.
  DecisionTree best_tree;
  FeatureSchema best_tree_schema;
};

/// F1 of the positive class.
double f1_score(const std::vector<int>& truth, const std::vector<int>& predicted);

/// Runs the selection loop on single-time-slice samples (`raw` is N x 212).
DtsaResult run_dtsa(const Matrix& raw, const std::vector<int>& y, const DtsaConfig& cfg);

}  // namespace emad
