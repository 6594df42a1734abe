#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "emad/common.hpp"

namespace emad {

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Positive class is 1; 0/0 counts as 0 for precision, recall and F1.
Metrics standard_metrics(const std::vector<int>& truth, const std::vector<int>& predicted);

/// sum_i F1_i / sqrt(i) over sum_i 1 / sqrt(i), i from 1.
double f1_early(const std::vector<double>& f1);

/// sum_{i<N} sqrt(i) F1_i c_i over sum_{i<N} sqrt(i), where c_i = 1 when the
/// centered scores (s - 0.5) at i and i+1 have the same sign. `scores` is
/// splits x addresses; c_i requires agreement for every address.
double f1_consistent(const std::vector<double>& f1, const Matrix& scores);
/// Single-series form.
double f1_consistent(const std::vector<double>& f1, const std::vector<double>& scores);

struct Evaluation {
  std::vector<Metrics> per_split;
  Metrics mean;
  double f1_early = 0.0;
  double f1_consistent = 0.0;
};

/// `scores` is splits x addresses of combined predictions; decisions use >= 0.5.
Evaluation evaluate(const Matrix& scores, const std::vector<int>& truth);

void write_metrics_csv(std::ostream& out, const Evaluation& e);

/// Scorer trained on rows of `x` with labels `y` (1 = positive).
using Scorer = std::function<double(const Eigen::Ref<const RowVector>&)>;
using ClassifierFactory = std::function<Scorer(const Matrix& x, const std::vector<int>& y)>;

/// Class-weighted decision tree on the given rows.
ClassifierFactory tree_factory(int max_depth = 4, int min_samples_split = 20);

struct SpyConfig {
  double fraction = 0.15;
  std::uint64_t seed = 0;
};

struct SpyRun {
  double fraction = 0.15;
  std::vector<std::size_t> spies;  // indices into the positives
  std::vector<double> unlabeled_scores;
  std::vector<double> spy_scores;
  double threshold = 0.0;
  std::vector<std::size_t> reliable_negatives;  // indices into the unlabeled rows

  nlohmann::json to_json() const;
};

/// floor(fraction * |P|) spies move into the unlabeled pool; the threshold
/// maximizes F_U(c) - F_S(c) over distinct scores c and sits halfway to the
/// next distinct score. Unlabeled rows scoring below it are reliable negatives.
SpyRun select_reliable_negatives(const Matrix& positives, const Matrix& unlabeled, const SpyConfig& cfg,
                                 const ClassifierFactory& factory = tree_factory());

/// The threshold scan on its own.
double spy_threshold(const std::vector<double>& unlabeled_scores, const std::vector<double>& spy_scores);

}  // namespace emad
