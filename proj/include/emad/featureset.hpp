#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "emad/pathtrace.hpp"

namespace emad {

inline constexpr std::size_t kAddressFeatureCount = 16;
inline constexpr std::size_t kPathFeatureCount = 12;
inline constexpr std::size_t kPathSetFeatureCount = 1 + 4 * kPathFeatureCount;  // 49
inline constexpr std::size_t kRawFeatureCount = kAddressFeatureCount + 4 * kPathSetFeatureCount;  // 212
inline constexpr std::size_t kSeedFeatureCount = kAddressFeatureCount + 4 * (1 + kPathFeatureCount);  // 68
inline constexpr int kDefaultHorizonHours = 200;

enum class FeatureGroup { AF, LtBk, StBk, LtFr, StFr };
enum class Statistic { Raw, Max, Min, Avg, Std };

std::string_view to_string(FeatureGroup g);
std::string_view to_string(Statistic s);

/// One column of the 212-wide raw feature matrix.
struct FeatureColumn {
  std::string name;
  std::string base;  // feature name without the statistic suffix
  FeatureGroup group = FeatureGroup::AF;
  Statistic stat = Statistic::Raw;
};

const std::vector<FeatureColumn>& raw_columns();
/// Base feature names in raw-column order (68 entries).
const std::vector<std::string>& base_features();
bool is_address_feature(const std::string& base);
/// Path features with max/min/avg/std columns; only these can be augmented.
bool is_augmentable(const std::string& base);
/// Raw column indices belonging to a base feature (1 or 4 entries).
std::vector<std::size_t> columns_of(const std::string& base);

/// Ordered subset of raw columns.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<std::size_t> raw_indices);

  static FeatureSchema raw();
  /// Address features plus the path count and avg column of every path feature.
  static FeatureSchema seed();

  std::size_t size() const noexcept { return cols_.size(); }
  const std::vector<std::size_t>& raw_indices() const noexcept { return cols_; }
  const FeatureColumn& column(std::size_t i) const { return raw_columns()[cols_[i]]; }
  std::vector<std::string> names() const;
  std::set<std::string> bases() const;
  bool contains_base(const std::string& base) const;
  /// Stable identifier derived from the column list.
  std::string id() const;

  Matrix project(const Matrix& raw) const;
  /// Scatters projected columns back into a raw-width matrix (others zero).
  Matrix unproject(const Matrix& projected) const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

 private:
  std::vector<std::size_t> cols_;
};

/// The 16 address features at hour `t` (row uses activity in hours 0..t).
RowVector address_features(const TxGraph& graph, const AddressIndex& index, const std::string& address,
                           Timestamp start, int t);

/// The 12 per-path features.
std::array<double, kPathFeatureCount> path_features(const TxGraph& graph, const TransferPath& path);
/// Path count followed by max/min/avg/std of each per-path feature (population std).
RowVector path_set_features(const TxGraph& graph, const PathSet& set);

struct FeatureSequence {
  std::string address;
  Timestamp start = 0;  // first on-chain appearance
  Matrix matrix;        // horizon x 212
};

struct FeatureConfig {
  int horizon_hours = kDefaultHorizonHours;
  PathConfig paths;
};

/// Hour `t` covers transactions strictly before start + (t+1) hours.
inline Timestamp hour_cutoff(Timestamp start, int t) { return start + static_cast<Timestamp>(t + 1) * kSecondsPerHour - 1; }

FeatureSequence feature_sequence(const TxGraph& graph, const AddressIndex& index, const std::string& address,
                                 const FeatureConfig& cfg = {});

void write_feature_csv_header(std::ostream& out, const FeatureSchema& schema);
void write_feature_csv_rows(std::ostream& out, const std::string& address, const Matrix& projected);

}  // namespace emad
