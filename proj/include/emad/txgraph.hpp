#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "emad/common.hpp"

namespace emad {

struct InputRef {
  std::string source_tx;
  std::string address;
  Amount amount = 0;
};

struct OutputRef {
  std::string address;
  Amount amount = 0;
};

struct Transaction {
  std::string id;
  Timestamp timestamp = 0;
  std::vector<InputRef> inputs;
  std::vector<OutputRef> outputs;

  bool is_coinbase() const noexcept { return inputs.empty(); }
  Amount input_total() const noexcept;
  Amount output_total() const noexcept;
  /// Inputs minus outputs; never negative for well-formed data.
  Amount fee() const noexcept;
};

/// Position of an input inside a spending transaction.
struct SpendRef {
  std::size_t tx = 0;
  std::size_t input = 0;
};

/// Immutable transaction graph with O(1) lookup by id.
class TxGraph {
 public:
  TxGraph() = default;
  explicit TxGraph(std::vector<Transaction> txs);

  std::size_t size() const noexcept { return txs_.size(); }
  bool empty() const noexcept { return txs_.empty(); }
  const std::vector<Transaction>& transactions() const noexcept { return txs_; }
  const Transaction& operator[](std::size_t i) const { return txs_[i]; }

  std::optional<std::size_t> find(const std::string& id) const;
  /// Throws DataError when the id is unknown.
  std::size_t index_of(const std::string& id) const;
  const Transaction& at(const std::string& id) const { return txs_[index_of(id)]; }

  /// Input references whose source transaction is not in the graph.
  const std::unordered_set<std::string>& external_sources() const noexcept { return external_; }
  bool is_external(const std::string& id) const { return external_.contains(id); }

  /// Inputs (in later transactions) that consume output `output` of transaction `tx`.
  /// Outputs are matched to inputs by (source transaction, address).
  const std::vector<SpendRef>& spenders(std::size_t tx, std::size_t output) const;

  /// Resolved source transaction of an input, if it is in the graph.
  std::optional<std::size_t> source_of(std::size_t tx, std::size_t input) const;

 private:
  std::vector<Transaction> txs_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_set<std::string> external_;
  std::vector<std::vector<std::vector<SpendRef>>> spenders_;
  std::vector<std::vector<std::optional<std::size_t>>> sources_;
};

/// Parses one line-delimited JSON transaction record.
Transaction parse_transaction(const std::string& line, std::size_t line_no);
std::string serialize_transaction(const Transaction& tx);

/// Loads a line-delimited transaction file. Blank lines are skipped.
TxGraph load_transactions(const std::filesystem::path& path);
TxGraph load_transactions(std::istream& in);

/// Receive/Spend transaction sets of one address.
struct AddressActivity {
  std::vector<std::size_t> receive_txs;  // address appears in outputs
  std::vector<std::size_t> spend_txs;    // address appears in inputs
};

class AddressIndex {
 public:
  AddressIndex() = default;
  explicit AddressIndex(const TxGraph& graph);

  const AddressActivity* find(const std::string& address) const;
  bool contains(const std::string& address) const { return find(address) != nullptr; }
  std::size_t size() const noexcept { return map_.size(); }
  std::vector<std::string> addresses() const;

  /// First on-chain appearance of the address.
  std::optional<Timestamp> first_seen(const std::string& address) const;

 private:
  const TxGraph* graph_ = nullptr;
  std::unordered_map<std::string, AddressActivity> map_;
};

AddressIndex build_address_index(const TxGraph& graph);

struct TransactionPair {
  std::size_t input_index = 0;
  std::size_t output_index = 0;
  Amount amount = 0;
  double input_share = 0.0;
  double output_share = 0.0;
};

struct PairSplit {
  std::vector<TransactionPair> pairs;
  /// Set when either side totals zero; `pairs` is then empty.
  bool degenerate = false;
};

/// Complete |I|x|J| bipartite decomposition with pro-rata amounts.
PairSplit transaction_pairs(const Transaction& tx);

double input_share(const Transaction& tx, std::size_t input);
double output_share(const Transaction& tx, std::size_t output);

enum class Label { Malicious, Regular, Unlabeled };

std::string to_string(Label label);
Label parse_label(const std::string& text);

struct LabeledAddress {
  std::string address;
  Label label = Label::Unlabeled;
};

/// CSV with header `address,label`.
std::vector<LabeledAddress> load_labels(const std::filesystem::path& path);
std::vector<LabeledAddress> load_labels(std::istream& in);
void write_labels(std::ostream& out, const std::vector<LabeledAddress>& labels);

}  // namespace emad
