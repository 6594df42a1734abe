#include "emad/dtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace emad {

namespace {

struct Counts {
  std::vector<long long> n;  // per class

  explicit Counts(int k = 0) : n(static_cast<std::size_t>(k), 0) {}
  long long total() const { return std::accumulate(n.begin(), n.end(), 0LL); }
};

double weighted_total(const Counts& c, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < c.n.size(); ++k) s += static_cast<double>(c.n[k]) * w[k];
  return s;
}

// Weighted mass times Gini impurity.
double mass_gini(const Counts& c, const std::vector<double>& w) {
  const double total = weighted_total(c, w);
  if (total <= 0.0) return 0.0;
  double sq = 0.0;
  for (std::size_t k = 0; k < c.n.size(); ++k) {
    const double p = static_cast<double>(c.n[k]) * w[k] / total;
    sq += p * p;
  }
  return total * (1.0 - sq);
}

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

}  // namespace

DecisionTree DecisionTree::fit(const Matrix& x, const std::vector<int>& y, const TreeConfig& cfg, int n_classes,
                               const std::vector<int>& multiplicity) {
  if (x.rows() == 0 || x.cols() == 0) throw Error("DecisionTree::fit: empty sample matrix");
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw Error("DecisionTree::fit: label count mismatch");
  if (cfg.max_depth < 1) throw Error("DecisionTree::fit: max_depth must be >= 1");
  if (!multiplicity.empty() && multiplicity.size() != y.size()) throw Error("DecisionTree::fit: multiplicity size");
  if (!x.allFinite()) throw NumericError("DecisionTree::fit: non-finite feature value");

  const auto k = static_cast<std::size_t>(n_classes);
  std::vector<double> w = cfg.class_weights;
  if (w.empty()) w.assign(k, 1.0);
  if (w.size() != k) throw Error("DecisionTree::fit: class weight count mismatch");

  // Active samples are those drawn at least once.
  std::vector<int> rows;
  std::vector<long long> mult;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= n_classes) throw Error("DecisionTree::fit: label out of range");
    const int m = multiplicity.empty() ? 1 : multiplicity[i];
    if (m > 0) {
      rows.push_back(static_cast<int>(i));
      mult.push_back(m);
    }
  }
  if (rows.empty()) throw Error("DecisionTree::fit: no samples drawn");

  const auto n = rows.size();
  const auto d = static_cast<std::size_t>(x.cols());

  DecisionTree tree;
  tree.width_ = d;
  tree.n_classes_ = n_classes;
  tree.importance_ = Vector::Zero(static_cast<Eigen::Index>(d));

  // Per-feature sample order, computed once; ties by row index.
  std::vector<std::vector<int>> order(d);
  for (std::size_t f = 0; f < d; ++f) {
    auto& o = order[f];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](int a, int b) {
      return x(rows[static_cast<std::size_t>(a)], static_cast<Eigen::Index>(f)) <
             x(rows[static_cast<std::size_t>(b)], static_cast<Eigen::Index>(f));
    });
  }

  std::vector<Counts> node_counts;
  std::vector<int> node_depth;
  const auto add_node = [&](const Counts& c, int depth) {
    Node nd;
    nd.weight = weighted_total(c, w);
    nd.value.resize(k, 0.0);
    for (std::size_t j = 0; j < k; ++j)
      nd.value[j] = nd.weight > 0.0 ? static_cast<double>(c.n[j]) * w[j] / nd.weight : 0.0;
    tree.nodes_.push_back(std::move(nd));
    node_counts.push_back(c);
    node_depth.push_back(depth);
    return static_cast<int>(tree.nodes_.size() - 1);
  };

  Counts root(n_classes);
  for (std::size_t s = 0; s < n; ++s) root.n[static_cast<std::size_t>(y[static_cast<std::size_t>(rows[s])])] += mult[s];
  add_node(root, 0);

  std::vector<int> node_of(n, 0);
  std::vector<int> frontier = {0};

  while (!frontier.empty()) {
    // Nodes at this level that may split.
    std::vector<int> slot(tree.nodes_.size(), -1);
    std::vector<int> active;
    for (const int id : frontier) {
      const auto& c = node_counts[static_cast<std::size_t>(id)];
      const long long count = c.total();
      const int nonzero = static_cast<int>(std::count_if(c.n.begin(), c.n.end(), [](long long v) { return v > 0; }));
      if (node_depth[static_cast<std::size_t>(id)] >= cfg.max_depth || count < cfg.min_samples_split || nonzero < 2)
        continue;
      slot[static_cast<std::size_t>(id)] = static_cast<int>(active.size());
      active.push_back(id);
    }
    if (active.empty()) break;

    std::vector<Candidate> best(active.size());
    std::vector<double> parent_mass(active.size());
    for (std::size_t a = 0; a < active.size(); ++a)
      parent_mass[a] = mass_gini(node_counts[static_cast<std::size_t>(active[a])], w);

    std::vector<Counts> left(active.size(), Counts(n_classes));
    std::vector<double> last(active.size());
    std::vector<char> seen(active.size());
    for (std::size_t f = 0; f < d; ++f) {
      for (auto& l : left) std::fill(l.n.begin(), l.n.end(), 0);
      std::fill(seen.begin(), seen.end(), 0);
      for (const int s : order[f]) {
        const int node = node_of[static_cast<std::size_t>(s)];
        if (node < 0) continue;
        const int a = slot[static_cast<std::size_t>(node)];
        if (a < 0) continue;
        const auto au = static_cast<std::size_t>(a);
        const double v = x(rows[static_cast<std::size_t>(s)], static_cast<Eigen::Index>(f));
        if (seen[au] && v > last[au]) {
          const auto& parent = node_counts[static_cast<std::size_t>(node)];
          Counts right(n_classes);
          for (std::size_t j = 0; j < k; ++j) right.n[j] = parent.n[j] - left[au].n[j];
          const double gain = parent_mass[au] - mass_gini(left[au], w) - mass_gini(right, w);
          if (gain > best[au].gain + 1e-12 * std::max(1.0, parent_mass[au])) {
            double thr = 0.5 * (last[au] + v);
            if (!(thr < v)) thr = last[au];
            best[au] = {gain, static_cast<int>(f), thr};
          }
        }
        left[au].n[static_cast<std::size_t>(y[static_cast<std::size_t>(rows[static_cast<std::size_t>(s)])])] +=
            mult[static_cast<std::size_t>(s)];
        last[au] = v;
        seen[au] = 1;
      }
    }

    std::vector<int> next;
    std::vector<int> left_child(tree.nodes_.size(), -1);
    for (std::size_t a = 0; a < active.size(); ++a) {
      if (best[a].feature < 0) continue;
      const int id = active[a];
      tree.nodes_[static_cast<std::size_t>(id)].feature = best[a].feature;
      tree.nodes_[static_cast<std::size_t>(id)].threshold = best[a].threshold;
      tree.importance_(best[a].feature) += best[a].gain;
    }
    // Route samples and count children.
    std::vector<Counts> lc(tree.nodes_.size()), rc(tree.nodes_.size());
    for (const int id : active) {
      if (tree.nodes_[static_cast<std::size_t>(id)].feature < 0) continue;
      lc[static_cast<std::size_t>(id)] = Counts(n_classes);
      rc[static_cast<std::size_t>(id)] = Counts(n_classes);
    }
    std::vector<char> goes_left(n, 0);
    for (std::size_t s = 0; s < n; ++s) {
      const int node = node_of[s];
      if (node < 0) continue;
      const auto& nd = tree.nodes_[static_cast<std::size_t>(node)];
      if (nd.feature < 0) {
        node_of[s] = -1;  // settled in a leaf
        continue;
      }
      const auto label = static_cast<std::size_t>(y[static_cast<std::size_t>(rows[s])]);
      goes_left[s] = x(rows[s], nd.feature) <= nd.threshold;
      (goes_left[s] ? lc : rc)[static_cast<std::size_t>(node)].n[label] += mult[s];
    }
    std::vector<int> right_child(tree.nodes_.size(), -1);
    for (const int id : active) {
      const auto uid = static_cast<std::size_t>(id);
      if (tree.nodes_[uid].feature < 0) continue;
      const int depth = node_depth[uid] + 1;
      const int l = add_node(lc[uid], depth);
      const int r = add_node(rc[uid], depth);
      tree.nodes_[uid].left = l;
      tree.nodes_[uid].right = r;
      left_child.resize(tree.nodes_.size(), -1);
      right_child.resize(tree.nodes_.size(), -1);
      left_child[uid] = l;
      right_child[uid] = r;
      next.push_back(l);
      next.push_back(r);
    }
    for (std::size_t s = 0; s < n; ++s) {
      const int node = node_of[s];
      if (node < 0) continue;
      node_of[s] = goes_left[s] ? left_child[static_cast<std::size_t>(node)] : right_child[static_cast<std::size_t>(node)];
    }
    frontier = std::move(next);
  }

  const double total = tree.importance_.sum();
  if (total > 0.0) tree.importance_ /= total;
  return tree;
}

const DecisionTree::Node& DecisionTree::leaf_for(const Eigen::Ref<const RowVector>& x) const {
  if (static_cast<std::size_t>(x.size()) != width_) throw Error("DecisionTree::predict: width mismatch");
  std::size_t at = 0;
  while (nodes_[at].feature >= 0) at = static_cast<std::size_t>(x(nodes_[at].feature) <= nodes_[at].threshold ? nodes_[at].left : nodes_[at].right);
  return nodes_[at];
}

double DecisionTree::predict(const Eigen::Ref<const RowVector>& x) const {
  const auto& leaf = leaf_for(x);
  return leaf.value.size() > 1 ? leaf.value[1] : 0.0;
}

std::vector<double> DecisionTree::predict_proba(const Eigen::Ref<const RowVector>& x) const { return leaf_for(x).value; }

int DecisionTree::predict_class(const Eigen::Ref<const RowVector>& x) const {
  const auto& v = leaf_for(x).value;
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

Vector DecisionTree::predict_all(const Matrix& x) const {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict(x.row(i));
  return out;
}

int DecisionTree::depth() const {
  int best = 0;
  std::vector<std::pair<std::size_t, int>> stack = {{0, 0}};
  while (!stack.empty()) {
    const auto [at, dep] = stack.back();
    stack.pop_back();
    best = std::max(best, dep);
    if (nodes_[at].feature >= 0) {
      stack.emplace_back(static_cast<std::size_t>(nodes_[at].left), dep + 1);
      stack.emplace_back(static_cast<std::size_t>(nodes_[at].right), dep + 1);
    }
  }
  return best;
}

std::size_t DecisionTree::split_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature >= 0; }));
}

nlohmann::json DecisionTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& nd : nodes_)
    nodes.push_back({{"feature", nd.feature}, {"threshold", nd.threshold}, {"left", nd.left}, {"right", nd.right},
                     {"value", nd.value}, {"weight", nd.weight}});
  std::vector<double> imp(importance_.data(), importance_.data() + importance_.size());
  return {{"width", width_}, {"n_classes", n_classes_}, {"importance", imp}, {"nodes", nodes}};
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  DecisionTree t;
  t.width_ = j.at("width").get<std::size_t>();
  t.n_classes_ = j.at("n_classes").get<int>();
  const auto imp = j.at("importance").get<std::vector<double>>();
  t.importance_ = Eigen::Map<const Vector>(imp.data(), static_cast<Eigen::Index>(imp.size()));
  for (const auto& n : j.at("nodes")) {
    Node nd;
    nd.feature = n.at("feature").get<int>();
    nd.threshold = n.at("threshold").get<double>();
    nd.left = n.at("left").get<int>();
    nd.right = n.at("right").get<int>();
    nd.value = n.at("value").get<std::vector<double>>();
    nd.weight = n.at("weight").get<double>();
    t.nodes_.push_back(std::move(nd));
  }
  if (t.nodes_.empty()) throw DataError("decision tree document has no nodes");
  return t;
}

}  // namespace emad
