#include "emad/dtsa.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace emad {

FeatureLists FeatureLists::initial() {
  FeatureLists l;
  const auto& bases = base_features();
  l.reserve.insert(bases.begin(), bases.end());
  return l;
}

FeatureLists FeatureLists::address_only() {
  FeatureLists l;
  for (const auto& b : base_features()) (is_address_feature(b) ? l.reserve : l.deleted).insert(b);
  return l;
}

bool FeatureLists::disjoint() const {
  for (const auto& a : augment)
    if (reserve.contains(a) || deleted.contains(a)) return false;
  for (const auto& r : reserve)
    if (deleted.contains(r)) return false;
  return true;
}

nlohmann::json FeatureLists::to_json() const {
  return {{"augment", augment}, {"reserve", reserve}, {"delete", deleted}};
}

FeatureLists FeatureLists::from_json(const nlohmann::json& j) {
  FeatureLists l;
  l.augment = j.at("augment").get<std::set<std::string>>();
  l.reserve = j.at("reserve").get<std::set<std::string>>();
  l.deleted = j.at("delete").get<std::set<std::string>>();
  return l;
}

Classification classify_features(const std::vector<std::string>& names, const Vector& importance, double theta,
                                 const std::function<bool(const std::string&)>& can_augment) {
  if (!(theta > 0.0 && theta < 1.0)) throw Error("classify_features: theta must lie in (0,1)");
  if (static_cast<Eigen::Index>(names.size()) != importance.size()) throw Error("classify_features: size mismatch");
  Classification out;
  const double top = importance.size() == 0 ? 0.0 : importance.maxCoeff();
  out.degenerate = !(top > 0.0);
  const double bar = theta * top;
  for (std::size_t j = 0; j < names.size(); ++j) {
    const double s = importance(static_cast<Eigen::Index>(j));
    if (s <= 0.0) {
      out.lists.deleted.insert(names[j]);
    } else if (s >= bar && can_augment(names[j])) {
      out.lists.augment.insert(names[j]);
    } else {
      out.lists.reserve.insert(names[j]);
    }
  }
  return out;
}

Classification classify_schema(const FeatureSchema& schema, const Vector& column_importance, double theta,
                               const std::set<std::string>& already_deleted) {
  if (column_importance.size() != static_cast<Eigen::Index>(schema.size()))
    throw Error("classify_schema: importance width does not match schema");
  std::map<std::string, double> per_base;
  for (std::size_t c = 0; c < schema.size(); ++c) per_base[schema.column(c).base] += column_importance(static_cast<Eigen::Index>(c));

  std::vector<std::string> names;
  for (const auto& b : base_features())
    if (per_base.contains(b)) names.push_back(b);
  Vector imp(static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) imp(static_cast<Eigen::Index>(j)) = per_base[names[j]];

  auto out = classify_features(names, imp, theta);
  for (const auto& d : already_deleted) {
    out.lists.augment.erase(d);
    out.lists.reserve.erase(d);
    out.lists.deleted.insert(d);
  }
  return out;
}

FeatureSchema apply_lists(const FeatureSchema& current, const FeatureLists& lists) {
  std::vector<char> present(kRawFeatureCount, 0);
  for (const auto c : current.raw_indices()) present[c] = 1;
  std::vector<std::size_t> cols;
  const auto& raw = raw_columns();
  for (std::size_t c = 0; c < raw.size(); ++c) {
    const auto& col = raw[c];
    if (lists.deleted.contains(col.base)) continue;
    const bool is_default = col.stat == Statistic::Raw || col.stat == Statistic::Avg;
    if (present[c] || (lists.augment.contains(col.base) && is_augmentable(col.base)) ||
        ((lists.reserve.contains(col.base) || lists.augment.contains(col.base)) && is_default))
      cols.push_back(c);
  }
  return FeatureSchema(std::move(cols));
}

FeatureSchema apply_lists(const FeatureLists& lists) { return apply_lists(FeatureSchema(std::vector<std::size_t>{}), lists); }

nlohmann::json DtsaReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rounds) {
    rs.push_back({{"round", r.round},
                  {"schema_id", r.schema_id},
                  {"schema_width", r.schema_width},
                  {"session_scores", r.session_scores},
                  {"average_score", r.average},
                  {"best_score", r.best},
                  {"accepted", r.accepted},
                  {"lists_in_effect", r.lists_in_effect.to_json()},
                  {"proposed_lists", r.proposed.to_json()}});
  }
  return {{"rounds", rs}, {"degenerate", degenerate}, {"stop_reason", stop_reason}};
}

double f1_score(const std::vector<int>& truth, const std::vector<int>& predicted) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == 1 && truth[i] == 1) ++tp;
    if (predicted[i] == 1 && truth[i] == 0) ++fp;
    if (predicted[i] == 0 && truth[i] == 1) ++fn;
  }
  const long den = 2 * tp + fp + fn;
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

namespace {

// Stratified holdout: per class, a seeded shuffle puts ceil(frac * n_c) into validation.
std::pair<std::vector<int>, std::vector<int>> stratified_split(const std::vector<int>& y, double frac, Rng& rng) {
  std::vector<int> train, valid;
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) idx.push_back(static_cast<int>(i));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    const auto nv = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < idx.size(); ++i) (i < nv ? valid : train).push_back(idx[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(valid.begin(), valid.end());
  return {train, valid};
}

std::vector<double> inverse_frequency(const std::vector<int>& y) {
  double pos = 0, neg = 0;
  for (int v : y) (v == 1 ? pos : neg) += 1.0;
  const double n = pos + neg;
  return {neg > 0 ? n / (2.0 * neg) : 1.0, pos > 0 ? n / (2.0 * pos) : 1.0};
}

}  // namespace

DtsaResult run_dtsa(const Matrix& raw, const std::vector<int>& y, const DtsaConfig& cfg) {
  if (raw.cols() != static_cast<Eigen::Index>(kRawFeatureCount)) throw Error("run_dtsa: expected raw-width samples");
  if (static_cast<Eigen::Index>(y.size()) != raw.rows() || y.empty()) throw Error("run_dtsa: label count mismatch");
  if (cfg.sessions < 1) throw Error("run_dtsa: sessions must be >= 1");

  Rng split_rng(derive_seed(cfg.seed, "dtsa-split"));
  const auto [train, valid] = stratified_split(y, cfg.validation_fraction, split_rng);
  if (train.empty() || valid.empty()) throw DataError("run_dtsa: not enough samples for a validation split");

  std::vector<int> y_train, y_valid;
  for (const int i : train) y_train.push_back(y[static_cast<std::size_t>(i)]);
  for (const int i : valid) y_valid.push_back(y[static_cast<std::size_t>(i)]);
  TreeConfig tree_cfg = cfg.tree;
  if (tree_cfg.class_weights.empty()) tree_cfg.class_weights = inverse_frequency(y_train);

  const auto rows_of = [&](const Matrix& m, const std::vector<int>& idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
  };
  const Matrix raw_train = rows_of(raw, train);
  const Matrix raw_valid = rows_of(raw, valid);

  DtsaResult result;
  // The lists are replaced by a round's proposal only when its average score holds up.
  FeatureLists lists = cfg.start;
  if (!lists.disjoint()) throw Error("run_dtsa: starting lists overlap");
  FeatureSchema schema = apply_lists(FeatureSchema::seed(), lists);
  bool have_tree = false;

  double avg = 0.0, best_avg = 0.0;
  int round = 0;
  while (avg >= best_avg) {
    if (round >= cfg.max_rounds) {
      result.report.stop_reason = "max_rounds";
      break;
    }
    best_avg = avg;
    const Matrix x_train = schema.project(raw_train);
    const Matrix x_valid = schema.project(raw_valid);

    DtsaRound rec;
    rec.round = round;
    rec.schema_id = schema.id();
    rec.schema_width = schema.size();
    rec.lists_in_effect = lists;

    FeatureLists tmp = lists;
    avg = 0.0;
    double best = 0.0;
    bool degenerate = false;
    DecisionTree round_best;
    bool round_has_best = false;
    for (int s = 0; s < cfg.sessions; ++s) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(round) * 1000003ULL + static_cast<std::uint64_t>(s)));
      std::vector<int> mult(train.size(), 0);
      for (std::size_t k = 0; k < train.size(); ++k) ++mult[uniform_index(rng, train.size())];
      const auto tree = DecisionTree::fit(x_train, y_train, tree_cfg, 2, mult);

      std::vector<int> pred(valid.size());
      for (std::size_t i = 0; i < valid.size(); ++i)
        pred[i] = tree.predict(x_valid.row(static_cast<Eigen::Index>(i))) >= 0.5;
      const double score = f1_score(y_valid, pred);
      rec.session_scores.push_back(score);
      avg += score / cfg.sessions;
      // The first session seeds the proposal so a round of all-zero scores still has one.
      if (score > best || !round_has_best) {
        best = std::max(best, score);
        const auto cls = classify_schema(schema, tree.importance(), cfg.theta, lists.deleted);
        tmp = cls.lists;
        degenerate = cls.degenerate;
        round_best = tree;
        round_has_best = true;
      }
    }
    rec.average = avg;
    rec.best = best;
    rec.proposed = tmp;
    rec.accepted = avg >= best_avg;
    result.report.rounds.push_back(rec);
    ++round;

    if (!rec.accepted) {
      result.report.stop_reason = "average_score_dropped";
      break;
    }
    result.best_tree = round_best;
    result.best_tree_schema = schema;
    have_tree = true;

    if (degenerate) {
      result.report.degenerate = true;
      result.report.stop_reason = "all_importance_zero";
      break;
    }
    if (tmp == lists) {
      result.report.stop_reason = "lists_converged";
      break;
    }
    lists = tmp;
    schema = apply_lists(schema, lists);
    if (schema.size() == 0) {
      result.report.degenerate = true;
      result.report.stop_reason = "empty_schema";
      break;
    }
  }

  result.lists = lists;
  result.schema = schema;
  if (!have_tree) {
    result.best_tree_schema = FeatureSchema::seed();
    result.best_tree = DecisionTree::fit(result.best_tree_schema.project(raw_train), y_train, tree_cfg);
  }
  return result;
}

}  // namespace emad
