#pragma once

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "emad/common.hpp"
#include "emad/featureset.hpp"
#include "emad/hst.hpp"
#include "emad/txgraph.hpp"

namespace emad::testing {

/// Random well-formed graph of `n` transactions over a small address pool.
/// Timestamps never decrease and sometimes repeat; each output address is
/// unique within its transaction so spends resolve unambiguously.
inline TxGraph random_graph(std::uint64_t seed, std::size_t n, std::size_t addresses = 12) {
  Rng rng(seed);
  struct Coin {
    std::string tx;
    std::string address;
    Amount amount;
  };
  std::vector<Coin> pool;
  std::vector<Transaction> txs;
  Timestamp t = 1'000'000;
  for (std::size_t k = 0; k < n; ++k) {
    Transaction tx;
    tx.id = "t" + std::to_string(k);
    if (uniform01(rng) < 0.7) t += static_cast<Timestamp>(1 + uniform_index(rng, 7200));
    tx.timestamp = t;
    Amount in = 0;
    if (!pool.empty() && uniform01(rng) > 0.2) {
      const auto take = 1 + uniform_index(rng, std::min<std::size_t>(3, pool.size()));
      for (std::size_t i = 0; i < take; ++i) {
        // Prefer recent coins so chains get deep.
        const auto span = std::min<std::size_t>(pool.size(), 6);
        const auto at = pool.size() - 1 - uniform_index(rng, span);
        tx.inputs.push_back({pool[at].tx, pool[at].address, pool[at].amount});
        in += pool[at].amount;
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
      }
    } else {
      in = static_cast<Amount>(100 + uniform_index(rng, 10000));
    }
    const auto outs = 1 + uniform_index(rng, 3);
    std::set<std::string> used;
    Amount left = in - (tx.inputs.empty() ? 0 : static_cast<Amount>(uniform_index(rng, 3)));
    for (std::size_t j = 0; j < outs && left > 0; ++j) {
      std::string a;
      do a = "a" + std::to_string(uniform_index(rng, addresses));
      while (used.contains(a));
      used.insert(a);
      const Amount v = j + 1 == outs ? left : static_cast<Amount>(uniform01(rng) * static_cast<double>(left));
      tx.outputs.push_back({a, v});
      left -= v;
    }
    if (tx.outputs.empty()) tx.outputs.push_back({"a0", 0});
    for (const auto& o : tx.outputs) pool.push_back({tx.id, o.address, o.amount});
    txs.push_back(std::move(tx));
  }
  return TxGraph(std::move(txs));
}

struct PlantedSignal {
  Matrix raw;  // N x 212
  std::vector<int> y;
  std::vector<std::string> signal;
};

/// Raw-width samples where only three base features carry the label:
/// y = (a > 0.5 and b > 0.3) or c > 0.8, every other column uniform noise.
/// `flip` is the fraction of labels inverted at random.
inline PlantedSignal planted_signal(std::uint64_t seed, std::size_t n, double flip = 0.0) {
  PlantedSignal out;
  out.signal = {"AF.balance", "LT-BK.hop_count", "ST-FR.max_score"};
  Rng rng(seed);
  out.raw.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kRawFeatureCount));
  for (Eigen::Index i = 0; i < out.raw.rows(); ++i)
    for (Eigen::Index j = 0; j < out.raw.cols(); ++j) out.raw(i, j) = uniform01(rng);
  const auto avg = [&](const std::string& base) {
    for (const auto c : columns_of(base))
      if (raw_columns()[c].stat == Statistic::Raw || raw_columns()[c].stat == Statistic::Avg)
        return static_cast<Eigen::Index>(c);
    return Eigen::Index{-1};
  };
  const auto a = avg(out.signal[0]), b = avg(out.signal[1]), c = avg(out.signal[2]);
  for (Eigen::Index i = 0; i < out.raw.rows(); ++i) {
    int label = (out.raw(i, a) > 0.5 && out.raw(i, b) > 0.3) || out.raw(i, c) > 0.8;
    if (uniform01(rng) < flip) label = 1 - label;
    out.y.push_back(label);
  }
  return out;
}

/// Gaussian blobs plus uniform background; duplicates appear on purpose.
inline Matrix random_points(std::uint64_t seed, std::size_t n, int dims) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto blobs = 1 + uniform_index(rng, 5);
  Matrix centers(static_cast<Eigen::Index>(blobs), dims);
  for (Eigen::Index i = 0; i < centers.rows(); ++i)
    for (int j = 0; j < dims; ++j) centers(i, j) = 20.0 * uniform01(rng);
  Matrix x(static_cast<Eigen::Index>(n), dims);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double r = uniform01(rng);
    if (i > 0 && r < 0.05) {
      x.row(i) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(i))));
    } else if (r < 0.25) {
      for (int j = 0; j < dims; ++j) x(i, j) = 25.0 * uniform01(rng);
    } else {
      const auto c = static_cast<Eigen::Index>(uniform_index(rng, blobs));
      for (int j = 0; j < dims; ++j) x(i, j) = centers(c, j) + gauss(rng);
    }
  }
  return x;
}

/// Model-space input with `segments` splits (first of length 3, then 2 each),
/// features and segment vectors uniform in [-1, 1], statuses alternating 0/1.
inline SequenceInput hst_input(int d, int segments, std::uint64_t seed) {
  Rng rng(seed);
  SequenceInput in;
  const int hours = 1 + 2 * segments;
  in.features = Matrix(hours, d);
  for (Eigen::Index r = 0; r < in.features.rows(); ++r)
    for (Eigen::Index c = 0; c < d; ++c) in.features(r, c) = 2.0 * uniform01(rng) - 1.0;
  int begin = 0;
  for (int s = 0; s < segments; ++s) {
    const int len = s == 0 ? 3 : 2;
    in.segments.push_back({begin, begin + len});
    begin += len;
  }
  in.segment_vectors = Matrix(segments, d);
  for (Eigen::Index r = 0; r < segments; ++r)
    for (Eigen::Index c = 0; c < d; ++c) in.segment_vectors(r, c) = 2.0 * uniform01(rng) - 1.0;
  for (int s = 0; s < segments; ++s) in.status.push_back(s % 2);
  return in;
}

/// Parameters scaled up from the default init so every tensor matters.
inline HstParams hst_params(const ModelConfig& cfg, int statuses, std::uint64_t seed) {
  HstParams params(cfg, statuses, seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& n = params.name(i);
    const bool qk = n.back() == 'Q' || n.back() == 'K';
    params.tensor(i) *= qk ? 4.0 : 1.5;
  }
  return params;
}

}  // namespace emad::testing
