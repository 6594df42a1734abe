#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emad/txgraph.hpp"

namespace emad {

enum class Direction { Backward, Forward };
enum class Term { Long, Short };

/// The four path sets of an address, in feature-column order.
enum class PathKind : std::size_t { LtBk = 0, StBk = 1, LtFr = 2, StFr = 3 };
inline constexpr std::array<PathKind, 4> kPathKinds = {PathKind::LtBk, PathKind::StBk, PathKind::LtFr,
                                                       PathKind::StFr};
std::string_view to_string(PathKind kind);
Direction direction_of(PathKind kind);
Term term_of(PathKind kind);

/// Literal short-term schedule min(floor(h/2), 0.9).
double st_threshold_literal(int hop);
/// Short-term schedule with a positive floor so hops 0 and 1 do not activate everything.
double st_threshold(int hop, double floor = 0.1);

/// Activation threshold as a function of the parent hop index (origin = 0).
struct ThresholdSchedule {
  enum class Mode { Constant, ShortTerm } mode = Mode::Constant;
  double value = 0.5;  // constant threshold
  double floor = 0.1;  // short-term floor

  static ThresholdSchedule constant(double theta) { return {Mode::Constant, theta, 0.1}; }
  static ThresholdSchedule short_term(double floor = 0.1) { return {Mode::ShortTerm, 0.0, floor}; }
  double at(int hop) const { return mode == Mode::Constant ? value : st_threshold(hop, floor); }
};

struct TraceConfig {
  ThresholdSchedule threshold = ThresholdSchedule::constant(0.5);
  Timestamp span = 365 * kSecondsPerDay;
  /// Maximum live hops per expansion round; excess hops are dropped and the tree flagged.
  std::size_t branch_cap = 64;
  /// Only transactions at or before this time participate.
  Timestamp as_of = std::numeric_limits<Timestamp>::max();
};

/// Input (backward) or output (forward) share pairs meeting a threshold, inclusive.
std::vector<std::pair<std::size_t, double>> influence_pairs(const Transaction& tx, double theta);
std::vector<std::pair<std::size_t, double>> trust_pairs(const Transaction& tx, double theta);

struct PathHop {
  std::optional<std::size_t> predecessor_tx;  // none for the origin
  double score = 1.0;
  std::size_t tx = 0;
};

struct TransferPath {
  std::vector<PathHop> hops;
  Direction direction = Direction::Backward;
  Term term = Term::Long;
  bool truncated = false;
  /// Depth of the whole expansion the chain came from, in hops.
  std::size_t height = 0;

  std::size_t hop_count() const noexcept { return hops.size(); }
};

/// Expansion tree of one origin transaction. Node 0 is the origin.
class PathTree {
 public:
  struct Node {
    std::size_t tx = 0;
    double score = 1.0;
    std::ptrdiff_t parent = -1;
    int depth = 0;
    Timestamp timestamp = 0;
  };

  PathTree() = default;
  PathTree(std::vector<Node> nodes, Direction dir, bool truncated)
      : nodes_(std::move(nodes)), dir_(dir), truncated_(truncated) {}

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  Direction direction() const noexcept { return dir_; }
  bool truncated() const noexcept { return truncated_; }
  std::size_t origin_tx() const { return nodes_.front().tx; }
  Timestamp origin_time() const { return nodes_.front().timestamp; }

  /// Root-to-leaf chains of the tree restricted to nodes at or before `as_of`.
  /// Empty when the origin itself is later than `as_of`.
  std::vector<TransferPath> paths(Term term, Timestamp as_of = std::numeric_limits<Timestamp>::max()) const;

 private:
  std::vector<Node> nodes_;
  Direction dir_ = Direction::Backward;
  bool truncated_ = false;
};

PathTree expand_backward(const TxGraph& graph, std::size_t origin, const TraceConfig& cfg);
PathTree expand_forward(const TxGraph& graph, std::size_t origin, const TraceConfig& cfg);

/// Throws DataError if the origin id is unknown.
std::vector<TransferPath> backward_paths(const TxGraph& graph, const std::string& origin_tx, const TraceConfig& cfg,
                                         Term term = Term::Long);
std::vector<TransferPath> forward_paths(const TxGraph& graph, const std::string& origin_tx, const TraceConfig& cfg,
                                        Term term = Term::Long);

struct PathSet {
  std::string address;
  PathKind kind = PathKind::LtBk;
  std::vector<TransferPath> paths;
  Timestamp as_of = 0;
};

struct PathConfig {
  double lt_theta = 0.5;
  Timestamp lt_span = 365 * kSecondsPerDay;
  double st_floor = 0.1;
  Timestamp st_span = kSecondsPerDay;
  std::size_t branch_cap = 64;

  TraceConfig trace(PathKind kind, Timestamp as_of) const;
};

/// All expansion trees for one address, computed once and viewed at any time.
class PathForest {
 public:
  PathForest() = default;
  PathForest(const TxGraph& graph, const AddressIndex& index, const std::string& address, const PathConfig& cfg,
             Timestamp horizon_end);

  const std::string& address() const noexcept { return address_; }
  const std::vector<PathTree>& trees(PathKind kind) const { return trees_[static_cast<std::size_t>(kind)]; }
  PathSet set_as_of(PathKind kind, Timestamp as_of) const;
  std::array<PathSet, 4> sets_as_of(Timestamp as_of) const;

 private:
  std::string address_;
  std::array<std::vector<PathTree>, 4> trees_;
};

/// Backward sets originate at each Receive transaction, forward sets at each
/// Spend transaction, both up to `as_of`. Unknown addresses yield empty sets.
std::array<PathSet, 4> extract_path_sets(const TxGraph& graph, const AddressIndex& index, const std::string& address,
                                         Timestamp as_of, const PathConfig& cfg = {});

/// CSV columns: address,kind,path_index,hop_index,tx_id,score,truncated
void write_paths_csv_header(std::ostream& out);
void write_paths_csv(std::ostream& out, const TxGraph& graph, const PathSet& set);
void write_paths_dot(std::ostream& out, const TxGraph& graph, const PathSet& set);

}  // namespace emad
