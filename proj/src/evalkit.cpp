#include "emad/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>

#include "emad/dtree.hpp"

namespace emad {

Metrics standard_metrics(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size()) throw Error("standard_metrics: size mismatch");
  if (truth.empty()) throw Error("standard_metrics: no predictions");
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == 1) (truth[i] == 1 ? tp : fp) += 1;
    else (truth[i] == 1 ? fn : tn) += 1;
  }
  const auto ratio = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
  Metrics m;
  m.accuracy = (tp + tn) / static_cast<double>(truth.size());
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  return m;
}

double f1_early(const std::vector<double>& f1) {
  if (f1.empty()) throw Error("f1_early: no splits");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const double w = 1.0 / std::sqrt(static_cast<double>(i + 1));
    num += f1[i] * w;
    den += w;
  }
  return num / den;
}

double f1_consistent(const std::vector<double>& f1, const Matrix& scores) {
  const auto n = f1.size();
  if (n < 2) throw Error("f1_consistent: need at least two splits");
  if (static_cast<std::size_t>(scores.rows()) != n) throw Error("f1_consistent: score rows must match the split count");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double w = std::sqrt(static_cast<double>(i + 1));
    const auto r = static_cast<Eigen::Index>(i);
    const bool agree = (((scores.row(r).array() - 0.5) * (scores.row(r + 1).array() - 0.5)) > 0.0).all();
    num += w * f1[i] * (agree ? 1.0 : 0.0);
    den += w;
  }
  return num / den;
}

double f1_consistent(const std::vector<double>& f1, const std::vector<double>& scores) {
  const Matrix m = Eigen::Map<const Vector>(scores.data(), static_cast<Eigen::Index>(scores.size()));
  return f1_consistent(f1, m);
}

Evaluation evaluate(const Matrix& scores, const std::vector<int>& truth) {
  if (static_cast<std::size_t>(scores.cols()) != truth.size()) throw Error("evaluate: address count mismatch");
  Evaluation e;
  std::vector<double> f1;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    std::vector<int> pred(truth.size());
    for (std::size_t a = 0; a < truth.size(); ++a) pred[a] = scores(i, static_cast<Eigen::Index>(a)) >= 0.5 ? 1 : 0;
    const auto m = standard_metrics(truth, pred);
    e.per_split.push_back(m);
    f1.push_back(m.f1);
    e.mean.accuracy += m.accuracy;
    e.mean.precision += m.precision;
    e.mean.recall += m.recall;
    e.mean.f1 += m.f1;
  }
  if (e.per_split.empty()) throw Error("evaluate: no splits");
  const auto n = static_cast<double>(e.per_split.size());
  e.mean.accuracy /= n;
  e.mean.precision /= n;
  e.mean.recall /= n;
  e.mean.f1 /= n;
  e.f1_early = f1_early(f1);
  e.f1_consistent = f1.size() >= 2 ? f1_consistent(f1, scores) : f1.front();
  return e;
}

void write_metrics_csv(std::ostream& out, const Evaluation& e) {
  out << "split,accuracy,precision,recall,f1,f1_early,f1_consistent\n";
  for (std::size_t i = 0; i < e.per_split.size(); ++i) {
    const auto& m = e.per_split[i];
    out << i + 1 << ',' << format_double(m.accuracy) << ',' << format_double(m.precision) << ','
        << format_double(m.recall) << ',' << format_double(m.f1) << ",,\n";
  }
  out << "mean," << format_double(e.mean.accuracy) << ',' << format_double(e.mean.precision) << ','
      << format_double(e.mean.recall) << ',' << format_double(e.mean.f1) << ',' << format_double(e.f1_early) << ','
      << format_double(e.f1_consistent) << '\n';
}

ClassifierFactory tree_factory(int max_depth, int min_samples_split) {
  return [=](const Matrix& x, const std::vector<int>& y) -> Scorer {
    double pos = 0;
    for (const int v : y) pos += v == 1;
    const double n = static_cast<double>(y.size());
    TreeConfig cfg;
    cfg.max_depth = max_depth;
    cfg.min_samples_split = min_samples_split;
    cfg.class_weights = {pos < n ? n / (2.0 * (n - pos)) : 1.0, pos > 0 ? n / (2.0 * pos) : 1.0};
    auto tree = std::make_shared<DecisionTree>(DecisionTree::fit(x, y, cfg));
    return [tree](const Eigen::Ref<const RowVector>& row) { return tree->predict(row); };
  };
}

double spy_threshold(const std::vector<double>& unlabeled_scores, const std::vector<double>& spy_scores) {
  if (unlabeled_scores.empty() || spy_scores.empty()) throw Error("spy_threshold: empty score set");
  std::vector<double> u = unlabeled_scores, s = spy_scores;
  std::sort(u.begin(), u.end());
  std::sort(s.begin(), s.end());
  std::vector<double> cand(u);
  cand.insert(cand.end(), s.begin(), s.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  if (cand.size() < 2)
    throw DataError("spy selection: the classifier gives every address the same score; change the features or scorer");

  std::size_t best = 0;
  double best_gap = -2.0;
  for (std::size_t k = 0; k < cand.size(); ++k) {
    const auto fu = static_cast<double>(std::upper_bound(u.begin(), u.end(), cand[k]) - u.begin()) / static_cast<double>(u.size());
    const auto fs = static_cast<double>(std::upper_bound(s.begin(), s.end(), cand[k]) - s.begin()) / static_cast<double>(s.size());
    if (fu - fs > best_gap) {
      best_gap = fu - fs;
      best = k;
    }
  }
  return best + 1 < cand.size() ? 0.5 * (cand[best] + cand[best + 1]) : cand[best];
}

SpyRun select_reliable_negatives(const Matrix& positives, const Matrix& unlabeled, const SpyConfig& cfg,
                                 const ClassifierFactory& factory) {
  const auto np = static_cast<std::size_t>(positives.rows());
  if (!(cfg.fraction > 0.0 && cfg.fraction < 1.0)) throw Error("spy selection: fraction must lie in (0,1)");
  const auto n_spies = static_cast<std::size_t>(std::floor(cfg.fraction * static_cast<double>(np) + 1e-9));
  if (n_spies < 1 || n_spies >= np) throw DataError("spy selection: too few positives for a spy set");
  if (unlabeled.rows() == 0) throw DataError("spy selection: no unlabeled addresses");
  if (unlabeled.cols() != positives.cols()) throw Error("spy selection: width mismatch");

  SpyRun run;
  run.fraction = cfg.fraction;
  std::vector<std::size_t> idx(np);
  for (std::size_t i = 0; i < np; ++i) idx[i] = i;
  Rng rng(derive_seed(cfg.seed, "spy"));
  for (std::size_t i = 0; i < n_spies; ++i) std::swap(idx[i], idx[i + uniform_index(rng, np - i)]);
  run.spies.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_spies));
  std::sort(run.spies.begin(), run.spies.end());

  std::vector<char> is_spy(np, 0);
  for (const auto s : run.spies) is_spy[s] = 1;
  const auto nu = static_cast<std::size_t>(unlabeled.rows());
  Matrix x(static_cast<Eigen::Index>(np + nu), positives.cols());
  std::vector<int> y;
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < np; ++i, ++r) {
    x.row(r) = positives.row(static_cast<Eigen::Index>(i));
    y.push_back(is_spy[i] ? 0 : 1);
  }
  for (std::size_t i = 0; i < nu; ++i, ++r) {
    x.row(r) = unlabeled.row(static_cast<Eigen::Index>(i));
    y.push_back(0);
  }
  const Scorer score = factory(x, y);
  for (std::size_t i = 0; i < nu; ++i) run.unlabeled_scores.push_back(score(unlabeled.row(static_cast<Eigen::Index>(i))));
  for (const auto s : run.spies) run.spy_scores.push_back(score(positives.row(static_cast<Eigen::Index>(s))));
  run.threshold = spy_threshold(run.unlabeled_scores, run.spy_scores);
  for (std::size_t i = 0; i < nu; ++i)
    if (run.unlabeled_scores[i] < run.threshold) run.reliable_negatives.push_back(i);
  return run;
}

nlohmann::json SpyRun::to_json() const {
  return {{"fraction", fraction},          {"spies", spies},           {"threshold", threshold},
          {"unlabeled_scores", unlabeled_scores}, {"spy_scores", spy_scores}, {"reliable_negatives", reliable_negatives}};
}

}  // namespace emad
