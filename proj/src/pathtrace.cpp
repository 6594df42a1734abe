#include "emad/pathtrace.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace emad {

std::string_view to_string(PathKind kind) {
  switch (kind) {
    case PathKind::LtBk: return "LT-BK";
    case PathKind::StBk: return "ST-BK";
    case PathKind::LtFr: return "LT-FR";
    case PathKind::StFr: return "ST-FR";
  }
  return "?";
}

Direction direction_of(PathKind kind) {
  return (kind == PathKind::LtBk || kind == PathKind::StBk) ? Direction::Backward : Direction::Forward;
}

Term term_of(PathKind kind) { return (kind == PathKind::LtBk || kind == PathKind::LtFr) ? Term::Long : Term::Short; }

double st_threshold_literal(int hop) { return std::min(static_cast<double>(hop / 2), 0.9); }

double st_threshold(int hop, double floor) { return std::max(floor, st_threshold_literal(hop)); }

std::vector<std::pair<std::size_t, double>> influence_pairs(const Transaction& tx, double theta) {
  std::vector<std::pair<std::size_t, double>> out;
  if (tx.input_total() <= 0) return out;
  for (std::size_t i = 0; i < tx.inputs.size(); ++i) {
    const double share = input_share(tx, i);
    if (share >= theta) out.emplace_back(i, share);
  }
  return out;
}

std::vector<std::pair<std::size_t, double>> trust_pairs(const Transaction& tx, double theta) {
  std::vector<std::pair<std::size_t, double>> out;
  if (tx.output_total() <= 0) return out;
  for (std::size_t j = 0; j < tx.outputs.size(); ++j) {
    const double share = output_share(tx, j);
    if (share >= theta) out.emplace_back(j, share);
  }
  return out;
}

namespace {

bool on_chain(const std::vector<PathTree::Node>& nodes, std::ptrdiff_t at, std::size_t tx) {
  for (; at >= 0; at = nodes[static_cast<std::size_t>(at)].parent)
    if (nodes[static_cast<std::size_t>(at)].tx == tx) return true;
  return false;
}

// Breadth-first hop expansion. `children` enumerates (child tx, share) edges of a frontier tx.
template <typename Children>
PathTree expand(const TxGraph& graph, std::size_t origin, const TraceConfig& cfg, Direction dir,
                Children&& children) {
  std::vector<PathTree::Node> nodes;
  const Timestamp t0 = graph[origin].timestamp;
  nodes.push_back({origin, 1.0, -1, 0, t0});
  bool truncated = false;

  std::vector<std::size_t> frontier = {0};
  while (!frontier.empty()) {
    std::vector<PathTree::Node> next;
    for (const std::size_t p : frontier) {
      const auto parent = nodes[p];
      const double theta = cfg.threshold.at(parent.depth);
      children(parent.tx, [&](std::size_t child, double share) {
        const double score = share * parent.score;
        const Timestamp tc = graph[child].timestamp;
        if (score < theta) return;
        if (tc > cfg.as_of) return;
        if (dir == Direction::Backward ? (t0 - tc > cfg.span) : (tc - t0 > cfg.span)) return;
        if (on_chain(nodes, static_cast<std::ptrdiff_t>(p), child)) return;
        next.push_back({child, score, static_cast<std::ptrdiff_t>(p), parent.depth + 1, tc});
      });
    }
    if (next.size() > cfg.branch_cap) {
      // Keep the hops nearest the origin in time, so a cut never depends on later activity.
      std::stable_sort(next.begin(), next.end(), [dir](const auto& a, const auto& b) {
        return dir == Direction::Forward ? a.timestamp < b.timestamp : a.timestamp > b.timestamp;
      });
      next.resize(cfg.branch_cap);
      truncated = true;
    }
    frontier.clear();
    for (auto& n : next) {
      frontier.push_back(nodes.size());
      nodes.push_back(n);
    }
  }
  return PathTree(std::move(nodes), dir, truncated);
}

}  // namespace

PathTree expand_backward(const TxGraph& graph, std::size_t origin, const TraceConfig& cfg) {
  return expand(graph, origin, cfg, Direction::Backward, [&](std::size_t tx, auto&& emit) {
    const auto& t = graph[tx];
    if (t.input_total() <= 0) return;
    for (std::size_t k = 0; k < t.inputs.size(); ++k) {
      const auto src = graph.source_of(tx, k);
      if (!src) continue;  // external source: nothing to trace into
      emit(*src, input_share(t, k));
    }
  });
}

PathTree expand_forward(const TxGraph& graph, std::size_t origin, const TraceConfig& cfg) {
  return expand(graph, origin, cfg, Direction::Forward, [&](std::size_t tx, auto&& emit) {
    const auto& t = graph[tx];
    if (t.output_total() <= 0) return;
    for (std::size_t k = 0; k < t.outputs.size(); ++k) {
      const double share = output_share(t, k);
      for (const auto& sp : graph.spenders(tx, k)) emit(sp.tx, share);
    }
  });
}

std::vector<TransferPath> PathTree::paths(Term term, Timestamp as_of) const {
  std::vector<TransferPath> out;
  if (nodes_.empty() || nodes_.front().timestamp > as_of) return out;

  const std::size_t n = nodes_.size();
  std::vector<char> live(n, 0), has_child(n, 0);
  int max_depth = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nd = nodes_[i];
    live[i] = nd.timestamp <= as_of && (nd.parent < 0 || live[static_cast<std::size_t>(nd.parent)]);
    if (!live[i]) continue;
    if (nd.parent >= 0) has_child[static_cast<std::size_t>(nd.parent)] = 1;
    max_depth = std::max(max_depth, nd.depth);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!live[i] || has_child[i]) continue;
    TransferPath path;
    path.direction = dir_;
    path.term = term;
    path.truncated = truncated_;
    path.height = static_cast<std::size_t>(max_depth) + 1;
    for (std::ptrdiff_t at = static_cast<std::ptrdiff_t>(i); at >= 0; at = nodes_[static_cast<std::size_t>(at)].parent) {
      const auto& nd = nodes_[static_cast<std::size_t>(at)];
      PathHop hop;
      hop.tx = nd.tx;
      hop.score = nd.score;
      if (nd.parent >= 0) hop.predecessor_tx = nodes_[static_cast<std::size_t>(nd.parent)].tx;
      path.hops.push_back(hop);
    }
    std::reverse(path.hops.begin(), path.hops.end());
    out.push_back(std::move(path));
  }
  return out;
}

std::vector<TransferPath> backward_paths(const TxGraph& graph, const std::string& origin_tx, const TraceConfig& cfg,
                                         Term term) {
  return expand_backward(graph, graph.index_of(origin_tx), cfg).paths(term, cfg.as_of);
}

std::vector<TransferPath> forward_paths(const TxGraph& graph, const std::string& origin_tx, const TraceConfig& cfg,
                                        Term term) {
  return expand_forward(graph, graph.index_of(origin_tx), cfg).paths(term, cfg.as_of);
}

TraceConfig PathConfig::trace(PathKind kind, Timestamp as_of) const {
  TraceConfig t;
  t.branch_cap = branch_cap;
  t.as_of = as_of;
  if (term_of(kind) == Term::Long) {
    t.threshold = ThresholdSchedule::constant(lt_theta);
    t.span = lt_span;
  } else {
    t.threshold = ThresholdSchedule::short_term(st_floor);
    t.span = st_span;
  }
  return t;
}

PathForest::PathForest(const TxGraph& graph, const AddressIndex& index, const std::string& address,
                       const PathConfig& cfg, Timestamp horizon_end)
    : address_(address) {
  const auto* act = index.find(address);
  if (act == nullptr) return;
  for (const PathKind kind : kPathKinds) {
    const auto tc = cfg.trace(kind, horizon_end);
    auto& trees = trees_[static_cast<std::size_t>(kind)];
    if (direction_of(kind) == Direction::Backward) {
      for (const auto tx : act->receive_txs)
        if (graph[tx].timestamp <= horizon_end) trees.push_back(expand_backward(graph, tx, tc));
    } else {
      for (const auto tx : act->spend_txs)
        if (graph[tx].timestamp <= horizon_end) trees.push_back(expand_forward(graph, tx, tc));
    }
  }
}

PathSet PathForest::set_as_of(PathKind kind, Timestamp as_of) const {
  PathSet set;
  set.address = address_;
  set.kind = kind;
  set.as_of = as_of;
  for (const auto& tree : trees(kind)) {
    auto p = tree.paths(term_of(kind), as_of);
    std::move(p.begin(), p.end(), std::back_inserter(set.paths));
  }
  return set;
}

std::array<PathSet, 4> PathForest::sets_as_of(Timestamp as_of) const {
  return {set_as_of(PathKind::LtBk, as_of), set_as_of(PathKind::StBk, as_of), set_as_of(PathKind::LtFr, as_of),
          set_as_of(PathKind::StFr, as_of)};
}

std::array<PathSet, 4> extract_path_sets(const TxGraph& graph, const AddressIndex& index, const std::string& address,
                                         Timestamp as_of, const PathConfig& cfg) {
  return PathForest(graph, index, address, cfg, as_of).sets_as_of(as_of);
}

void write_paths_csv_header(std::ostream& out) {
  out << "address,kind,path_index,hop_index,tx_id,score,truncated\n";
}

void write_paths_csv(std::ostream& out, const TxGraph& graph, const PathSet& set) {
  for (std::size_t p = 0; p < set.paths.size(); ++p) {
    const auto& path = set.paths[p];
    for (std::size_t h = 0; h < path.hops.size(); ++h) {
      out << set.address << ',' << to_string(set.kind) << ',' << p << ',' << h << ',' << graph[path.hops[h].tx].id
          << ',' << format_double(path.hops[h].score) << ',' << (path.truncated ? 1 : 0) << '\n';
    }
  }
}

void write_paths_dot(std::ostream& out, const TxGraph& graph, const PathSet& set) {
  out << "digraph \"" << set.address << ' ' << to_string(set.kind) << "\" {\n  rankdir=LR;\n";
  for (const auto& path : set.paths) {
    for (const auto& hop : path.hops) {
      if (!hop.predecessor_tx) continue;
      const auto& from = path.direction == Direction::Backward ? graph[hop.tx].id : graph[*hop.predecessor_tx].id;
      const auto& to = path.direction == Direction::Backward ? graph[*hop.predecessor_tx].id : graph[hop.tx].id;
      out << "  \"" << from << "\" -> \"" << to << "\" [label=\"" << format_double(hop.score) << "\"];\n";
    }
  }
  out << "}\n";
}

}  // namespace emad
