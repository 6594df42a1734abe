#include "emad/txgraph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace emad {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

Amount Transaction::input_total() const noexcept {
  Amount s = 0;
  for (const auto& in : inputs) s += in.amount;
  return s;
}

Amount Transaction::output_total() const noexcept {
  Amount s = 0;
  for (const auto& out : outputs) s += out.amount;
  return s;
}

Amount Transaction::fee() const noexcept {
  if (is_coinbase()) return 0;
  return std::max<Amount>(0, input_total() - output_total());
}

namespace {

Amount read_amount(const json& j, std::size_t line_no, const char* where) {
  if (!j.contains("amount") || !j["amount"].is_number_integer())
    throw ParseError(line_no, std::string(where) + ": amount must be an integer");
  const auto v = j["amount"].get<std::int64_t>();
  if (v < 0) throw ParseError(line_no, std::string(where) + ": negative amount");
  return v;
}

std::string read_string(const json& j, const char* key, std::size_t line_no) {
  if (!j.contains(key) || !j[key].is_string())
    throw ParseError(line_no, std::string("missing string field '") + key + "'");
  return j[key].get<std::string>();
}

}  // namespace

Transaction parse_transaction(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_no, e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "record is not an object");

  Transaction tx;
  tx.id = read_string(j, "id", line_no);
  if (!j.contains("timestamp") || !j["timestamp"].is_number_integer())
    throw ParseError(line_no, "timestamp must be an integer");
  tx.timestamp = j["timestamp"].get<Timestamp>();

  if (!j.contains("inputs") || !j["inputs"].is_array()) throw ParseError(line_no, "inputs must be an array");
  if (!j.contains("outputs") || !j["outputs"].is_array()) throw ParseError(line_no, "outputs must be an array");

  for (const auto& in : j["inputs"]) {
    if (!in.is_object()) throw ParseError(line_no, "input is not an object");
    tx.inputs.push_back({read_string(in, "source_tx", line_no), read_string(in, "address", line_no),
                         read_amount(in, line_no, "input")});
  }
  for (const auto& out : j["outputs"]) {
    if (!out.is_object()) throw ParseError(line_no, "output is not an object");
    tx.outputs.push_back({read_string(out, "address", line_no), read_amount(out, line_no, "output")});
  }
  if (tx.outputs.empty()) throw ParseError(line_no, "transaction has no outputs");
  return tx;
}

std::string serialize_transaction(const Transaction& tx) {
  json j;
  j["id"] = tx.id;
  j["timestamp"] = tx.timestamp;
  j["inputs"] = json::array();
  for (const auto& in : tx.inputs)
    j["inputs"].push_back({{"source_tx", in.source_tx}, {"address", in.address}, {"amount", in.amount}});
  j["outputs"] = json::array();
  for (const auto& out : tx.outputs) j["outputs"].push_back({{"address", out.address}, {"amount", out.amount}});
  return j.dump();
}

TxGraph::TxGraph(std::vector<Transaction> txs) : txs_(std::move(txs)) {
  by_id_.reserve(txs_.size());
  for (std::size_t i = 0; i < txs_.size(); ++i) {
    if (!by_id_.emplace(txs_[i].id, i).second) throw DataError("duplicate transaction id '" + txs_[i].id + "'");
  }

  spenders_.resize(txs_.size());
  sources_.resize(txs_.size());
  for (std::size_t i = 0; i < txs_.size(); ++i) spenders_[i].resize(txs_[i].outputs.size());

  // (source tx, address) -> output positions, for matching inputs to outputs.
  for (std::size_t i = 0; i < txs_.size(); ++i) {
    const auto& tx = txs_[i];
    sources_[i].resize(tx.inputs.size());
    for (std::size_t k = 0; k < tx.inputs.size(); ++k) {
      const auto& in = tx.inputs[k];
      const auto it = by_id_.find(in.source_tx);
      if (it == by_id_.end()) {
        external_.insert(in.source_tx);
        continue;
      }
      const auto& src = txs_[it->second];
      if (src.timestamp > tx.timestamp)
        throw DataError("transaction '" + tx.id + "' spends '" + src.id + "' which is later in time");
      sources_[i][k] = it->second;
      for (std::size_t o = 0; o < src.outputs.size(); ++o) {
        if (src.outputs[o].address == in.address) spenders_[it->second][o].push_back({i, k});
      }
    }
  }
}

std::optional<std::size_t> TxGraph::find(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::size_t TxGraph::index_of(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw DataError("unknown transaction '" + id + "'");
  return it->second;
}

const std::vector<SpendRef>& TxGraph::spenders(std::size_t tx, std::size_t output) const {
  return spenders_.at(tx).at(output);
}

std::optional<std::size_t> TxGraph::source_of(std::size_t tx, std::size_t input) const {
  return sources_.at(tx).at(input);
}

TxGraph load_transactions(std::istream& in) {
  std::vector<Transaction> txs;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto tx = parse_transaction(line, line_no);
    if (!seen.emplace(tx.id, line_no).second)
      throw ParseError(line_no, "duplicate transaction id '" + tx.id + "'");
    txs.push_back(std::move(tx));
  }
  return TxGraph(std::move(txs));
}

TxGraph load_transactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open transaction file " + path.string());
  return load_transactions(in);
}

AddressIndex::AddressIndex(const TxGraph& graph) : graph_(&graph) {
  const auto& txs = graph.transactions();
  for (std::size_t i = 0; i < txs.size(); ++i) {
    for (const auto& out : txs[i].outputs) {
      auto& r = map_[out.address].receive_txs;
      if (r.empty() || r.back() != i) r.push_back(i);
    }
    for (const auto& in : txs[i].inputs) {
      auto& s = map_[in.address].spend_txs;
      if (s.empty() || s.back() != i) s.push_back(i);
    }
  }
  const auto by_time = [&](std::size_t a, std::size_t b) {
    if (txs[a].timestamp != txs[b].timestamp) return txs[a].timestamp < txs[b].timestamp;
    return txs[a].id < txs[b].id;
  };
  for (auto& [addr, act] : map_) {
    std::sort(act.receive_txs.begin(), act.receive_txs.end(), by_time);
    std::sort(act.spend_txs.begin(), act.spend_txs.end(), by_time);
  }
}

const AddressActivity* AddressIndex::find(const std::string& address) const {
  const auto it = map_.find(address);
  return it == map_.end() ? nullptr : &it->second;
}

std::vector<std::string> AddressIndex::addresses() const {
  std::vector<std::string> out;
  out.reserve(map_.size());
  for (const auto& [a, _] : map_) out.push_back(a);
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<Timestamp> AddressIndex::first_seen(const std::string& address) const {
  const auto* act = find(address);
  if (act == nullptr) return std::nullopt;
  std::optional<Timestamp> t;
  const auto& txs = graph_->transactions();
  if (!act->receive_txs.empty()) t = txs[act->receive_txs.front()].timestamp;
  if (!act->spend_txs.empty()) {
    const auto s = txs[act->spend_txs.front()].timestamp;
    t = t ? std::min(*t, s) : s;
  }
  return t;
}

AddressIndex build_address_index(const TxGraph& graph) { return AddressIndex(graph); }

double input_share(const Transaction& tx, std::size_t input) {
  const Amount total = tx.input_total();
  if (total <= 0) return 0.0;
  return static_cast<double>(tx.inputs.at(input).amount) / static_cast<double>(total);
}

double output_share(const Transaction& tx, std::size_t output) {
  const Amount total = tx.output_total();
  if (total <= 0) return 0.0;
  return static_cast<double>(tx.outputs.at(output).amount) / static_cast<double>(total);
}

namespace {

// Splits `target` across `weights` in proportion, largest remainder first,
// so the parts sum to `target` exactly. Ties resolve to the lowest index.
std::vector<Amount> apportion(Amount target, const std::vector<Amount>& weights, Amount weight_total) {
  std::vector<Amount> parts(weights.size(), 0);
  std::vector<std::pair<__int128, std::size_t>> rema;
  rema.reserve(weights.size());
  Amount assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const __int128 num = static_cast<__int128>(target) * weights[k];
    parts[k] = static_cast<Amount>(num / weight_total);
    rema.emplace_back(num % weight_total, k);
    assigned += parts[k];
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (Amount left = target - assigned, r = 0; left > 0; --left, ++r) ++parts[rema[static_cast<std::size_t>(r)].second];
  return parts;
}

}  // namespace

PairSplit transaction_pairs(const Transaction& tx) {
  PairSplit split;
  const Amount in_total = tx.input_total();
  const Amount out_total = tx.output_total();
  if (tx.inputs.empty() || in_total <= 0 || out_total <= 0) {
    split.degenerate = true;
    return split;
  }

  std::vector<Amount> in_amt, out_amt;
  for (const auto& in : tx.inputs) in_amt.push_back(in.amount);
  for (const auto& out : tx.outputs) out_amt.push_back(out.amount);

  const std::size_t ni = in_amt.size();
  const std::size_t nj = out_amt.size();
  std::vector<Amount> grid(ni * nj, 0);
  // The smaller side is conserved exactly line by line; the larger side
  // absorbs the fee (or shortfall).
  if (in_total <= out_total) {
    for (std::size_t i = 0; i < ni; ++i) {
      const auto row = apportion(in_amt[i], out_amt, out_total);
      for (std::size_t j = 0; j < nj; ++j) grid[i * nj + j] = row[j];
    }
  } else {
    for (std::size_t j = 0; j < nj; ++j) {
      const auto col = apportion(out_amt[j], in_amt, in_total);
      for (std::size_t i = 0; i < ni; ++i) grid[i * nj + j] = col[i];
    }
  }

  split.pairs.reserve(ni * nj);
  for (std::size_t i = 0; i < ni; ++i) {
    for (std::size_t j = 0; j < nj; ++j) {
      split.pairs.push_back({i, j, grid[i * nj + j], static_cast<double>(in_amt[i]) / static_cast<double>(in_total),
                             static_cast<double>(out_amt[j]) / static_cast<double>(out_total)});
    }
  }
  return split;
}

std::string to_string(Label label) {
  switch (label) {
    case Label::Malicious: return "malicious";
    case Label::Regular: return "regular";
    case Label::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

Label parse_label(const std::string& text) {
  if (text == "malicious") return Label::Malicious;
  if (text == "regular") return Label::Regular;
  if (text == "unlabeled") return Label::Unlabeled;
  throw DataError("unknown label '" + text + "'");
}

std::vector<LabeledAddress> load_labels(std::istream& in) {
  std::vector<LabeledAddress> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "address,label") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(line_no, "expected 'address,label'");
    try {
      out.push_back({line.substr(0, comma), parse_label(line.substr(comma + 1))});
    } catch (const DataError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

std::vector<LabeledAddress> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file " + path.string());
  return load_labels(in);
}

void write_labels(std::ostream& out, const std::vector<LabeledAddress>& labels) {
  out << "address,label\n";
  for (const auto& l : labels) out << l.address << ',' << to_string(l.label) << '\n';
}

}  // namespace emad
