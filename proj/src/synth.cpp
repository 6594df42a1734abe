#include "emad/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace emad {

namespace {

constexpr Amount kCoin = 100'000'000;
constexpr Amount kFee = 1'000;

struct Utxo {
  std::string tx;
  std::string address;
  Amount amount = 0;
};

class Builder {
 public:
  explicit Builder(std::uint64_t seed) : rng_(seed) {}

  Rng& rng() { return rng_; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(rng_); }
  int uniform_int(int lo, int hi) { return lo + static_cast<int>(uniform_index(rng_, static_cast<std::size_t>(hi - lo + 1))); }
  Amount coins(double lo, double hi) { return static_cast<Amount>(uniform(lo, hi) * static_cast<double>(kCoin)); }
  static Timestamp hours(double h) { return static_cast<Timestamp>(h * static_cast<double>(kSecondsPerHour)); }

  std::string address() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "addr%06ld", next_address_++);
    return buf;
  }

  Utxo mint(const std::string& to, Amount amount, Timestamp t) {
    Transaction tx;
    tx.id = next_id();
    tx.timestamp = t;
    tx.outputs.push_back({to, amount});
    txs_.push_back(tx);
    return {tx.id, to, amount};
  }

  /// Spends `inputs` into `outputs`; the remainder minus the fee goes to `change` when given.
  std::vector<Utxo> send(const std::vector<Utxo>& inputs, const std::vector<std::pair<std::string, Amount>>& outputs,
                         Timestamp t, const std::string& change = {}) {
    Transaction tx;
    tx.id = next_id();
    tx.timestamp = t;
    Amount in = 0, out = 0;
    for (const auto& u : inputs) {
      tx.inputs.push_back({u.tx, u.address, u.amount});
      in += u.amount;
    }
    for (const auto& [a, v] : outputs) {
      tx.outputs.push_back({a, v});
      out += v;
    }
    if (out + kFee > in) throw Error("synth: transaction overspends");
    if (!change.empty() && in - out - kFee > 0) tx.outputs.push_back({change, in - out - kFee});
    std::vector<Utxo> made;
    for (const auto& o : tx.outputs) made.push_back({tx.id, o.address, o.amount});
    txs_.push_back(std::move(tx));
    return made;
  }

  /// Withdrawal from a fresh exchange reserve funded a month earlier.
  Utxo withdraw(const std::string& to, Amount amount, Timestamp t) {
    const auto reserve = mint(address(), amount + coins(5, 50), t - 30 * kSecondsPerDay);
    return send({reserve}, {{to, amount}}, t, address()).front();
  }

  /// Payers keep change about half the time, whatever the recipient.
  std::string maybe_change(const std::string& payer) { return uniform01(rng_) < 0.5 ? payer : std::string(); }

  static Amount total(const std::vector<Utxo>& us) {
    Amount s = 0;
    for (const auto& u : us) s += u.amount;
    return s;
  }

  std::vector<Transaction> take() {
    std::stable_sort(txs_.begin(), txs_.end(), [](const Transaction& a, const Transaction& b) {
      return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.id < b.id;
    });
    return std::move(txs_);
  }

 private:
  std::string next_id() {
    char buf[16];
    std::snprintf(buf, sizeof buf, "tx%07ld", next_tx_++);
    return buf;
  }

  Rng rng_;
  long next_tx_ = 0;
  long next_address_ = 0;
  std::vector<Transaction> txs_;
};

int hour_of(Timestamp t, Timestamp first) { return static_cast<int>((t - first) / kSecondsPerHour); }

/// Odds of funding a payer directly from a mint, by exchange withdrawal, or
/// through two or three relay hops.
using FundingOdds = std::array<double, 4>;

/// Gives `who` exactly `amount` by time `t`; the last hop lands `lead` hours earlier.
Utxo fund(Builder& b, const std::string& who, Amount amount, Timestamp t, const FundingOdds& odds, double lead_lo,
          double lead_hi) {
  double r = uniform01(b.rng());
  int depth = 0;
  while (depth < 3 && r >= odds[static_cast<std::size_t>(depth)]) r -= odds[static_cast<std::size_t>(depth++)];
  const Timestamp at = t - b.hours(b.uniform(lead_lo, lead_hi));
  if (depth == 0) return b.mint(who, amount, at);
  if (depth == 1) return b.withdraw(who, amount, at);
  Timestamp when = at - b.hours(b.uniform(2, 8) * depth);
  auto u = b.mint(b.address(), amount + depth * kFee, when - b.hours(b.uniform(4, 12)));
  for (int i = 1; i < depth; ++i) {
    u = b.send({u}, {{b.address(), u.amount - kFee}}, when).front();
    when += b.hours(b.uniform(1, 6));
  }
  return b.send({u}, {{who, amount}}, at).front();
}

/// Many small coins in one payment, like a wallet sweeping its dust.
std::vector<Utxo> fund_split(Builder& b, const std::string& who, Amount amount, int pieces, Timestamp t,
                             const FundingOdds& odds, double lead_lo, double lead_hi) {
  std::vector<Utxo> out;
  const Amount each = amount / pieces;
  for (int i = 0; i < pieces; ++i) out.push_back(fund(b, who, each, t, odds, lead_lo, lead_hi));
  return out;
}

// Large multi-input receive at creation, bulk spend within a day.
SynthEvent hack(Builder& b, const std::string& me, Timestamp t0) {
  const int victims = b.uniform_int(40, 90);
  std::vector<Utxo> loot;
  for (int i = 0; i < victims; ++i) {
    const auto v = b.address();
    loot.push_back(fund(b, v, b.coins(2, 20), t0, {0.6, 0.3, 0.1, 0.0}, 48, 720));
  }
  const Amount take = Builder::total(loot) - 2 * kFee;
  const auto keeper = b.maybe_change(b.address());
  const auto got = b.send(loot, {{me, keeper.empty() ? take : take - take / 20}}, t0, keeper);
  const Timestamp bulk = t0 + b.hours(b.uniform(6, 23.9));
  const int outs = b.uniform_int(3, 5);
  const Amount each = (got.front().amount - kFee) / outs;
  std::vector<std::pair<std::string, Amount>> to;
  for (int i = 0; i < outs; ++i) to.emplace_back(b.address(), each);
  b.send(got, to, bulk);
  return {me, Archetype::Hack, t0, hour_of(bulk, t0)};
}

// Similar ransom payments from freshly funded victims, then consolidation.
SynthEvent ransomware(Builder& b, const std::string& me, Timestamp t0) {
  const int payments = b.uniform_int(6, 16);
  const double span = b.uniform(10, 100);
  const double ransom = b.uniform(0.2, 1.0);
  std::vector<double> at{0.0};
  for (int i = 1; i < payments; ++i) at.push_back(b.uniform(0.5, span));
  std::sort(at.begin(), at.end());
  std::vector<Utxo> held;
  for (const double h : at) {
    const Timestamp t = t0 + b.hours(h);
    const auto victim = b.address();
    const Amount amount = static_cast<Amount>(ransom * b.uniform(0.9, 1.1) * static_cast<double>(kCoin));
    const auto funds = fund(b, victim, amount + b.coins(0.001, 0.2), t, {0.1, 0.6, 0.2, 0.1}, 1, 20);
    held.push_back(b.send({funds}, {{me, amount}}, t, b.maybe_change(victim)).front());
  }
  const Timestamp bulk = t0 + b.hours(span + b.uniform(1, 12));
  b.send(held, {{b.address(), Builder::total(held) - kFee}}, bulk);
  return {me, Archetype::Ransomware, t0, hour_of(bulk, t0)};
}

// Deposits from buyers funded through quick hop chains, then a peeling chain.
SynthEvent darknet(Builder& b, const std::string& me, Timestamp t0) {
  const int deposits = b.uniform_int(8, 20);
  const double window = b.uniform(12, 48);
  std::vector<double> at{0.0};
  for (int i = 1; i < deposits; ++i) at.push_back(b.uniform(0.5, window));
  std::sort(at.begin(), at.end());
  std::vector<Utxo> held;
  for (const double h : at) {
    const Timestamp t = t0 + b.hours(h);
    const Amount amount = b.coins(0.01, 0.3);
    const auto buyer = b.address();
    const auto u = fund(b, buyer, amount + b.coins(0.001, 0.05), t, {0.0, 0.2, 0.3, 0.5}, 1, 3);
    held.push_back(b.send({u}, {{me, amount}}, t, b.maybe_change(buyer)).front());
  }
  Timestamp t = t0 + b.hours(window + b.uniform(1, 6));
  const Timestamp bulk = t;
  auto chain = b.send(held, {{b.address(), Builder::total(held) - kFee}}, t).front();
  const int peels = b.uniform_int(5, 10);
  for (int i = 0; i < peels && chain.amount > 20 * kFee; ++i) {
    t += b.hours(b.uniform(1, 3));
    const Amount vendor = chain.amount / 10;
    const auto next = b.address();
    const auto outs = b.send({chain}, {{b.address(), vendor}, {next, chain.amount - vendor - kFee}}, t);
    chain = outs.back();
  }
  return {me, Archetype::Darknet, t0, hour_of(bulk, t0)};
}

// Exchange deposit address: a few user deposits, swept within a day.
SynthEvent exchange(Builder& b, const std::string& me, Timestamp t0, const std::string& cold) {
  const int deposits = b.uniform_int(1, 3);
  std::vector<Utxo> held;
  for (int i = 0; i < deposits; ++i) {
    const Timestamp t = t0 + (i == 0 ? 0 : b.hours(b.uniform(0.2, 5)));
    const auto user = b.address();
    const Amount amount = b.coins(0.05, 30);
    const FundingOdds odds{0.5, 0.3, 0.15, 0.05};
    const auto funds = uniform01(b.rng()) < 0.2
                           ? fund_split(b, user, amount + b.coins(0.01, 2), b.uniform_int(20, 80), t, odds, 24, 1440)
                           : std::vector<Utxo>{fund(b, user, amount + b.coins(0.01, 2), t, odds, 1, 1440)};
    held.push_back(b.send(funds, {{me, amount}}, t, b.maybe_change(user)).front());
  }
  const Timestamp sweep = t0 + b.hours(b.uniform(6, 23.9));
  b.send(held, {{cold, Builder::total(held) - kFee}}, sweep);
  return {me, Archetype::Exchange, t0, hour_of(sweep, t0)};
}

// Steady small customer payments with periodic payouts.
SynthEvent merchant(Builder& b, const std::string& me, Timestamp t0) {
  const Timestamp end = t0 + 210 * kSecondsPerHour;
  const auto owner = b.address();
  Timestamp t = t0;
  Timestamp payout = t0 + b.hours(b.uniform(24, 48));
  Timestamp last = t0;
  std::vector<Utxo> held;
  while (t < end) {
    if (t >= payout && !held.empty()) {
      const Timestamp when = std::max(payout, last + 60);
      b.send(held, {{owner, Builder::total(held) - kFee}}, when);
      held.clear();
      payout = when + b.hours(b.uniform(24, 48));
      continue;
    }
    last = t;
    const auto customer = b.address();
    const Amount amount = b.coins(0.001, 0.05);
    const auto funds = fund(b, customer, amount + b.coins(0.01, 1), t, {0.3, 0.5, 0.15, 0.05}, 1, 240);
    held.push_back(b.send({funds}, {{me, amount}}, t, b.maybe_change(customer)).front());
    t += b.hours(b.uniform(2, 10));
  }
  return {me, Archetype::Merchant, t0, -1};
}

// Exchange withdrawal followed by a few everyday payments.
SynthEvent user(Builder& b, const std::string& me, Timestamp t0, const std::vector<std::string>& shops) {
  auto coin = fund(b, me, b.coins(0.1, 5), t0, {0.3, 0.7, 0.0, 0.0}, 0, 0);
  const int spends = b.uniform_int(1, 4);
  std::vector<double> at;
  for (int i = 0; i < spends; ++i) at.push_back(b.uniform(2, 200));
  std::sort(at.begin(), at.end());
  for (const double h : at) {
    const Amount pay = coin.amount / b.uniform_int(3, 8);
    if (pay < kFee) break;
    const auto& shop = shops[uniform_index(b.rng(), shops.size())];
    const auto outs = b.send({coin}, {{shop, pay}}, t0 + b.hours(h), me);
    if (outs.size() < 2) break;
    coin = outs.back();
  }
  return {me, Archetype::User, t0, -1};
}

}  // namespace

std::string_view to_string(Archetype a) {
  switch (a) {
    case Archetype::Hack: return "hack";
    case Archetype::Ransomware: return "ransomware";
    case Archetype::Darknet: return "darknet";
    case Archetype::Exchange: return "exchange";
    case Archetype::Merchant: return "merchant";
    case Archetype::User: return "user";
  }
  return "user";
}

bool is_malicious(Archetype a) { return a == Archetype::Hack || a == Archetype::Ransomware || a == Archetype::Darknet; }

namespace {

Archetype parse_archetype(const std::string& s) {
  for (const auto a : {Archetype::Hack, Archetype::Ransomware, Archetype::Darknet, Archetype::Exchange,
                       Archetype::Merchant, Archetype::User})
    if (to_string(a) == s) return a;
  throw DataError("unknown archetype '" + s + "'");
}

}  // namespace

nlohmann::json SynthSpec::to_json() const {
  return {{"hack", hack},           {"ransomware", ransomware}, {"darknet", darknet},
          {"exchange", exchange},   {"merchant", merchant},     {"user", user},
          {"background", background}, {"start", start},         {"spread_days", spread_days}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.hack = j.value("hack", s.hack);
  s.ransomware = j.value("ransomware", s.ransomware);
  s.darknet = j.value("darknet", s.darknet);
  s.exchange = j.value("exchange", s.exchange);
  s.merchant = j.value("merchant", s.merchant);
  s.user = j.value("user", s.user);
  s.background = j.value("background", s.background);
  s.start = j.value("start", s.start);
  s.spread_days = j.value("spread_days", s.spread_days);
  for (const int c : {s.hack, s.ransomware, s.darknet, s.exchange, s.merchant, s.user, s.background})
    if (c < 0) throw DataError("synth: counts must be non-negative");
  if (s.spread_days < 1) throw DataError("synth: spread_days must be positive");
  return s;
}

SynthData synthesize(const SynthSpec& spec) {
  Builder b(derive_seed(spec.seed, "synth"));

  std::vector<Archetype> roles;
  const auto push = [&](Archetype a, int n) { roles.insert(roles.end(), static_cast<std::size_t>(n), a); };
  push(Archetype::Hack, spec.hack);
  push(Archetype::Ransomware, spec.ransomware);
  push(Archetype::Darknet, spec.darknet);
  push(Archetype::Exchange, spec.exchange);
  push(Archetype::Merchant, spec.merchant);
  push(Archetype::User, spec.user);
  for (std::size_t i = roles.size(); i > 1; --i) std::swap(roles[i - 1], roles[uniform_index(b.rng(), i)]);

  std::vector<std::string> colds, shops;
  for (int i = 0; i < 3; ++i) colds.push_back(b.address());
  for (int i = 0; i < 20; ++i) shops.push_back(b.address());

  SynthData data;
  for (const auto role : roles) {
    const auto me = b.address();
    const Timestamp t0 = spec.start + b.hours(b.uniform(0, 24.0 * spec.spread_days));
    SynthEvent ev;
    switch (role) {
      case Archetype::Hack: ev = hack(b, me, t0); break;
      case Archetype::Ransomware: ev = ransomware(b, me, t0); break;
      case Archetype::Darknet: ev = darknet(b, me, t0); break;
      case Archetype::Exchange: ev = exchange(b, me, t0, colds[uniform_index(b.rng(), colds.size())]); break;
      case Archetype::Merchant: ev = merchant(b, me, t0); break;
      case Archetype::User: ev = user(b, me, t0, shops); break;
    }
    data.events.push_back(ev);
    data.labels.push_back({me, is_malicious(role) ? Label::Malicious : Label::Regular});
  }

  // Background wallets trade among themselves over the whole window.
  if (spec.background > 0) {
    std::vector<Utxo> wallets;
    for (int i = 0; i < 40; ++i) wallets.push_back(b.mint(b.address(), b.coins(1, 100), spec.start - 60 * kSecondsPerDay));
    const Timestamp lo = spec.start - 30 * kSecondsPerDay;
    const Timestamp hi = spec.start + (spec.spread_days + 10) * kSecondsPerDay;
    std::vector<Timestamp> at;
    for (int i = 0; i < spec.background; ++i) at.push_back(lo + static_cast<Timestamp>(uniform01(b.rng()) * static_cast<double>(hi - lo)));
    std::sort(at.begin(), at.end());
    for (const auto t : at) {
      const auto from = uniform_index(b.rng(), wallets.size());
      auto to = uniform_index(b.rng(), wallets.size() - 1);
      if (to >= from) ++to;
      const Amount pay = wallets[from].amount / b.uniform_int(2, 10);
      if (pay < 10 * kFee) continue;
      const auto outs = b.send({wallets[from]}, {{wallets[to].address, pay}}, t, wallets[from].address);
      wallets[from] = outs.back();
    }
  }

  data.transactions = b.take();
  const auto by_address = [](const auto& a, const auto& c) { return a.address < c.address; };
  std::sort(data.labels.begin(), data.labels.end(), by_address);
  std::sort(data.events.begin(), data.events.end(), by_address);
  return data;
}

void write_transactions(std::ostream& out, const std::vector<Transaction>& txs) {
  for (const auto& tx : txs) out << serialize_transaction(tx) << '\n';
}

void write_events(std::ostream& out, const std::vector<SynthEvent>& events) {
  out << "address,archetype,first_seen,bulk_hour\n";
  for (const auto& e : events) out << e.address << ',' << to_string(e.archetype) << ',' << e.first_seen << ',' << e.bulk_hour << '\n';
}

std::vector<SynthEvent> load_events(std::istream& in) {
  std::vector<SynthEvent> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 || line.empty()) continue;
    std::stringstream ss(line);
    std::string addr, arch, first, bulk;
    if (!std::getline(ss, addr, ',') || !std::getline(ss, arch, ',') || !std::getline(ss, first, ',') ||
        !std::getline(ss, bulk, ','))
      throw ParseError(n, "expected address,archetype,first_seen,bulk_hour");
    try {
      out.push_back({addr, parse_archetype(arch), std::stoll(first), std::stoi(bulk)});
    } catch (const std::logic_error&) {
      throw ParseError(n, "bad number");
    }
  }
  return out;
}

}  // namespace emad
