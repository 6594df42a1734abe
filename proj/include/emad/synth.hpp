#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "emad/txgraph.hpp"

namespace emad {

enum class Archetype { Hack, Ransomware, Darknet, Exchange, Merchant, User };

std::string_view to_string(Archetype a);
bool is_malicious(Archetype a);

struct SynthSpec {
  int hack = 17;
  int ransomware = 17;
  int darknet = 16;
  int exchange = 150;
  int merchant = 150;
  int user = 150;
  /// Extra wallet-to-wallet transfers among unlabeled background wallets.
  int background = 200;
  Timestamp start = 1'600'000'000;
  /// Labeled addresses first appear within this many days of `start`.
  int spread_days = 20;
  std::uint64_t seed = 0;

  int labeled() const noexcept { return hack + ransomware + darknet + exchange + merchant + user; }
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

/// Scripted facts about one labeled address.
struct SynthEvent {
  std::string address;
  Archetype archetype = Archetype::User;
  Timestamp first_seen = 0;
  /// Hour (from first_seen) of the scripted bulk transfer; -1 when none.
  int bulk_hour = -1;
};

struct SynthData {
  std::vector<Transaction> transactions;  // sorted by (timestamp, id)
  std::vector<LabeledAddress> labels;     // sorted by address
  std::vector<SynthEvent> events;         // sorted by address
};

SynthData synthesize(const SynthSpec& spec);

void write_transactions(std::ostream& out, const std::vector<Transaction>& txs);
void write_events(std::ostream& out, const std::vector<SynthEvent>& events);
std::vector<SynthEvent> load_events(std::istream& in);

}  // namespace emad
