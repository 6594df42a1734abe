#include "emad/featureset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace emad {

std::string_view to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::AF: return "AF";
    case FeatureGroup::LtBk: return "LT-BK";
    case FeatureGroup::StBk: return "ST-BK";
    case FeatureGroup::LtFr: return "LT-FR";
    case FeatureGroup::StFr: return "ST-FR";
  }
  return "?";
}

std::string_view to_string(Statistic s) {
  switch (s) {
    case Statistic::Raw: return "raw";
    case Statistic::Max: return "max";
    case Statistic::Min: return "min";
    case Statistic::Avg: return "avg";
    case Statistic::Std: return "std";
  }
  return "?";
}

namespace {

constexpr std::array<const char*, kAddressFeatureCount> kAddressNames = {
    "balance",          "spend_count",          "receive_count",        "spend_receive_ratio",
    "spend_count_1h",   "receive_count_1h",     "spend_receive_ratio_1h", "max_spends_per_hour",
    "max_receives_per_hour", "zero_amount_spends", "zero_amount_receives", "max_spend_hour",
    "max_receive_hour", "max_hour_gap",         "active_hours",         "activity_rate"};

constexpr std::array<const char*, kPathFeatureCount> kPathNames = {
    "hop_count",          "height",             "max_input_amount",    "min_input_amount",
    "max_output_amount",  "min_output_amount",  "max_input_quantity",  "min_input_quantity",
    "max_output_quantity", "min_output_quantity", "max_score",          "min_score"};

// Column order inside one path-set block: count, then per feature max,min,avg,std.
constexpr std::array<Statistic, 4> kStats = {Statistic::Max, Statistic::Min, Statistic::Avg, Statistic::Std};

FeatureGroup group_of(PathKind k) {
  switch (k) {
    case PathKind::LtBk: return FeatureGroup::LtBk;
    case PathKind::StBk: return FeatureGroup::StBk;
    case PathKind::LtFr: return FeatureGroup::LtFr;
    case PathKind::StFr: return FeatureGroup::StFr;
  }
  return FeatureGroup::AF;
}

std::vector<FeatureColumn> make_raw_columns() {
  std::vector<FeatureColumn> cols;
  for (const char* n : kAddressNames) {
    const std::string name = std::string("AF.") + n;
    cols.push_back({name, name, FeatureGroup::AF, Statistic::Raw});
  }
  for (const PathKind k : kPathKinds) {
    const std::string prefix(to_string(k));
    const std::string count = prefix + ".path_count";
    cols.push_back({count, count, group_of(k), Statistic::Raw});
    for (const char* n : kPathNames) {
      const std::string base = prefix + "." + n;
      for (const Statistic s : kStats) cols.push_back({base + "." + std::string(to_string(s)), base, group_of(k), s});
    }
  }
  return cols;
}

}  // namespace

const std::vector<FeatureColumn>& raw_columns() {
  static const auto cols = make_raw_columns();
  return cols;
}

const std::vector<std::string>& base_features() {
  static const auto bases = [] {
    std::vector<std::string> out;
    for (const auto& c : raw_columns())
      if (out.empty() || out.back() != c.base) out.push_back(c.base);
    return out;
  }();
  return bases;
}

bool is_address_feature(const std::string& base) { return base.rfind("AF.", 0) == 0; }

bool is_augmentable(const std::string& base) { return columns_of(base).size() == 4; }

std::vector<std::size_t> columns_of(const std::string& base) {
  std::vector<std::size_t> out;
  const auto& cols = raw_columns();
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i].base == base) out.push_back(i);
  return out;
}

FeatureSchema::FeatureSchema(std::vector<std::size_t> raw_indices) : cols_(std::move(raw_indices)) {
  for (const auto c : cols_)
    if (c >= kRawFeatureCount) throw Error("schema column index out of range");
}

FeatureSchema FeatureSchema::raw() {
  std::vector<std::size_t> idx(kRawFeatureCount);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return FeatureSchema(std::move(idx));
}

FeatureSchema FeatureSchema::seed() {
  std::vector<std::size_t> idx;
  const auto& cols = raw_columns();
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i].stat == Statistic::Raw || cols[i].stat == Statistic::Avg) idx.push_back(i);
  return FeatureSchema(std::move(idx));
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(cols_.size());
  for (const auto c : cols_) out.push_back(raw_columns()[c].name);
  return out;
}

std::set<std::string> FeatureSchema::bases() const {
  std::set<std::string> out;
  for (const auto c : cols_) out.insert(raw_columns()[c].base);
  return out;
}

bool FeatureSchema::contains_base(const std::string& base) const {
  return std::any_of(cols_.begin(), cols_.end(), [&](std::size_t c) { return raw_columns()[c].base == base; });
}

std::string FeatureSchema::id() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto c : cols_) {
    h ^= c + 1;
    h *= 0x100000001b3ULL;
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "s%zu-%016llx", cols_.size(), static_cast<unsigned long long>(h));
  return buf;
}

Matrix FeatureSchema::project(const Matrix& raw) const {
  if (raw.cols() != static_cast<Eigen::Index>(kRawFeatureCount)) throw Error("project: expected raw-width matrix");
  Matrix out(raw.rows(), static_cast<Eigen::Index>(cols_.size()));
  for (std::size_t j = 0; j < cols_.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = raw.col(static_cast<Eigen::Index>(cols_[j]));
  return out;
}

Matrix FeatureSchema::unproject(const Matrix& projected) const {
  if (projected.cols() != static_cast<Eigen::Index>(cols_.size())) throw Error("unproject: width mismatch");
  Matrix out = Matrix::Zero(projected.rows(), static_cast<Eigen::Index>(kRawFeatureCount));
  for (std::size_t j = 0; j < cols_.size(); ++j) out.col(static_cast<Eigen::Index>(cols_[j])) = projected.col(static_cast<Eigen::Index>(j));
  return out;
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (std::size_t i = 0; i < cols_.size(); ++i) {
    const auto& c = raw_columns()[cols_[i]];
    cols.push_back({{"index", i},
                    {"raw_index", cols_[i]},
                    {"name", c.name},
                    {"group", std::string(to_string(c.group))},
                    {"statistic", std::string(to_string(c.stat))}});
  }
  return {{"schema_id", id()}, {"columns", cols}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  std::vector<std::size_t> idx;
  for (const auto& c : j.at("columns")) idx.push_back(c.at("raw_index").get<std::size_t>());
  return FeatureSchema(std::move(idx));
}

namespace {

struct HourActivity {
  int spends = 0;
  int receives = 0;
  int zero_spends = 0;
  int zero_receives = 0;
  Amount received = 0;
  Amount spent = 0;
};

std::vector<HourActivity> bucket_activity(const TxGraph& graph, const AddressActivity& act, const std::string& address,
                                          Timestamp start, int horizon) {
  std::vector<HourActivity> hours(static_cast<std::size_t>(horizon));
  const auto hour_of = [&](Timestamp ts) -> int {
    if (ts < start) return -1;
    const auto h = (ts - start) / kSecondsPerHour;
    return h < horizon ? static_cast<int>(h) : -1;
  };
  for (const auto i : act.receive_txs) {
    const auto& tx = graph[i];
    const int h = hour_of(tx.timestamp);
    if (h < 0) continue;
    Amount amt = 0;
    for (const auto& o : tx.outputs)
      if (o.address == address) amt += o.amount;
    auto& b = hours[static_cast<std::size_t>(h)];
    ++b.receives;
    b.received += amt;
    if (amt == 0) ++b.zero_receives;
  }
  for (const auto i : act.spend_txs) {
    const auto& tx = graph[i];
    const int h = hour_of(tx.timestamp);
    if (h < 0) continue;
    Amount amt = 0;
    for (const auto& in : tx.inputs)
      if (in.address == address) amt += in.amount;
    auto& b = hours[static_cast<std::size_t>(h)];
    ++b.spends;
    b.spent += amt;
    if (amt == 0) ++b.zero_spends;
  }
  return hours;
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

Matrix address_feature_matrix(const TxGraph& graph, const AddressIndex& index, const std::string& address,
                              Timestamp start, int horizon) {
  Matrix m = Matrix::Zero(horizon, static_cast<Eigen::Index>(kAddressFeatureCount));
  const auto* act = index.find(address);
  if (act == nullptr) return m;
  const auto hours = bucket_activity(graph, *act, address, start, horizon);

  Amount balance = 0;
  int spends = 0, receives = 0, zs = 0, zr = 0, active = 0;
  int max_s = 0, max_r = 0, max_s_hour = 0, max_r_hour = 0;
  for (int t = 0; t < horizon; ++t) {
    const auto& b = hours[static_cast<std::size_t>(t)];
    balance += b.received - b.spent;
    // UTXO balances cannot go negative; a negative value means inconsistent input data.
    balance = std::max<Amount>(balance, 0);
    spends += b.spends;
    receives += b.receives;
    zs += b.zero_spends;
    zr += b.zero_receives;
    if (b.spends > max_s) max_s = b.spends, max_s_hour = t;
    if (b.receives > max_r) max_r = b.receives, max_r_hour = t;
    if (b.spends + b.receives > 0) ++active;

    auto row = m.row(t);
    row(0) = static_cast<double>(balance);
    row(1) = spends;
    row(2) = receives;
    row(3) = ratio(spends, receives);
    row(4) = b.spends;
    row(5) = b.receives;
    row(6) = ratio(b.spends, b.receives);
    row(7) = max_s;
    row(8) = max_r;
    row(9) = zs;
    row(10) = zr;
    row(11) = max_s_hour;
    row(12) = max_r_hour;
    row(13) = std::abs(max_s_hour - max_r_hour);
    row(14) = active;
    row(15) = static_cast<double>(active) / static_cast<double>(t + 1);
  }
  return m;
}

}  // namespace

RowVector address_features(const TxGraph& graph, const AddressIndex& index, const std::string& address,
                           Timestamp start, int t) {
  return address_feature_matrix(graph, index, address, start, t + 1).row(t);
}

std::array<double, kPathFeatureCount> path_features(const TxGraph& graph, const TransferPath& path) {
  std::array<double, kPathFeatureCount> f{};
  if (path.hops.empty()) return f;
  f[0] = static_cast<double>(path.hops.size());
  f[1] = static_cast<double>(std::max(path.height, path.hops.size()));
  double in_amt_max = -INFINITY, in_amt_min = INFINITY, out_amt_max = -INFINITY, out_amt_min = INFINITY;
  double in_q_max = -INFINITY, in_q_min = INFINITY, out_q_max = -INFINITY, out_q_min = INFINITY;
  double s_max = -INFINITY, s_min = INFINITY;
  for (const auto& hop : path.hops) {
    const auto& tx = graph[hop.tx];
    const double ia = static_cast<double>(tx.input_total());
    const double oa = static_cast<double>(tx.output_total());
    const double iq = static_cast<double>(tx.inputs.size());
    const double oq = static_cast<double>(tx.outputs.size());
    in_amt_max = std::max(in_amt_max, ia), in_amt_min = std::min(in_amt_min, ia);
    out_amt_max = std::max(out_amt_max, oa), out_amt_min = std::min(out_amt_min, oa);
    in_q_max = std::max(in_q_max, iq), in_q_min = std::min(in_q_min, iq);
    out_q_max = std::max(out_q_max, oq), out_q_min = std::min(out_q_min, oq);
    s_max = std::max(s_max, hop.score), s_min = std::min(s_min, hop.score);
  }
  f[2] = in_amt_max, f[3] = in_amt_min, f[4] = out_amt_max, f[5] = out_amt_min;
  f[6] = in_q_max, f[7] = in_q_min, f[8] = out_q_max, f[9] = out_q_min;
  f[10] = s_max, f[11] = s_min;
  return f;
}

RowVector path_set_features(const TxGraph& graph, const PathSet& set) {
  RowVector out = RowVector::Zero(static_cast<Eigen::Index>(kPathSetFeatureCount));
  const auto n = set.paths.size();
  if (n == 0) return out;
  out(0) = static_cast<double>(n);
  Matrix per(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kPathFeatureCount));
  for (std::size_t p = 0; p < n; ++p) {
    const auto f = path_features(graph, set.paths[p]);
    for (std::size_t k = 0; k < kPathFeatureCount; ++k) per(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) = f[k];
  }
  for (Eigen::Index k = 0; k < per.cols(); ++k) {
    const auto col = per.col(k);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().mean();
    out(1 + 4 * k + 0) = col.maxCoeff();
    out(1 + 4 * k + 1) = col.minCoeff();
    out(1 + 4 * k + 2) = mean;
    out(1 + 4 * k + 3) = std::sqrt(var);
  }
  return out;
}

FeatureSequence feature_sequence(const TxGraph& graph, const AddressIndex& index, const std::string& address,
                                 const FeatureConfig& cfg) {
  const int horizon = cfg.horizon_hours;
  FeatureSequence seq;
  seq.address = address;
  seq.matrix = Matrix::Zero(horizon, static_cast<Eigen::Index>(kRawFeatureCount));
  const auto start = index.first_seen(address);
  if (!start) return seq;
  seq.start = *start;

  seq.matrix.leftCols(kAddressFeatureCount) = address_feature_matrix(graph, index, address, seq.start, horizon);

  const Timestamp end = hour_cutoff(seq.start, horizon - 1);
  const PathForest forest(graph, index, address, cfg.paths, end);

  // Path sets only change in hours where some tree node becomes visible.
  std::vector<char> changes(static_cast<std::size_t>(horizon), 0);
  changes[0] = 1;
  for (const PathKind k : kPathKinds)
    for (const auto& tree : forest.trees(k))
      for (const auto& nd : tree.nodes()) {
        const auto h = (nd.timestamp - seq.start) / kSecondsPerHour;
        if (h >= 0 && h < horizon) changes[static_cast<std::size_t>(h)] = 1;
      }

  for (int t = 0; t < horizon; ++t) {
    auto row = seq.matrix.row(t);
    if (!changes[static_cast<std::size_t>(t)]) {
      row.tail(4 * kPathSetFeatureCount) = seq.matrix.row(t - 1).tail(4 * kPathSetFeatureCount);
      continue;
    }
    const auto sets = forest.sets_as_of(hour_cutoff(seq.start, t));
    for (std::size_t k = 0; k < 4; ++k)
      row.segment(static_cast<Eigen::Index>(kAddressFeatureCount + k * kPathSetFeatureCount), kPathSetFeatureCount) =
          path_set_features(graph, sets[k]);
  }
  return seq;
}

void write_feature_csv_header(std::ostream& out, const FeatureSchema& schema) {
  out << "address,hour";
  for (const auto& n : schema.names()) out << ',' << n;
  out << '\n';
}

void write_feature_csv_rows(std::ostream& out, const std::string& address, const Matrix& projected) {
  for (Eigen::Index t = 0; t < projected.rows(); ++t) {
    out << address << ',' << t;
    for (Eigen::Index c = 0; c < projected.cols(); ++c) out << ',' << format_double(projected(t, c));
    out << '\n';
  }
}

}  // namespace emad
