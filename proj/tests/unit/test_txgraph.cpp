#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "emad/txgraph.hpp"
#include "fixtures.hpp"

using namespace emad;

namespace {

TxGraph graph_of(const std::string& text) {
  std::istringstream in(text);
  return load_transactions(in);
}

}  // namespace

TEST_CASE("empty transaction file") {
  const auto g = graph_of("");
  CHECK(g.empty());
  CHECK(AddressIndex(g).size() == 0);
}

TEST_CASE("chain resolves inputs to their source transactions") {
  const auto g = graph_of(
      R"({"id":"A","timestamp":10,"inputs":[],"outputs":[{"address":"x","amount":100}]})"
      "\n"
      R"({"id":"B","timestamp":20,"inputs":[{"source_tx":"A","address":"x","amount":100}],"outputs":[{"address":"y","amount":90}]})"
      "\n\n"
      R"({"id":"C","timestamp":30,"inputs":[{"source_tx":"B","address":"y","amount":90}],"outputs":[{"address":"z","amount":80}]})"
      "\n");
  REQUIRE(g.size() == 3);
  const auto c = g.index_of("C");
  REQUIRE(g.source_of(c, 0).has_value());
  CHECK(g[*g.source_of(c, 0)].id == "B");
  CHECK(g.transactions()[g.index_of("A")].is_coinbase());
  CHECK(g.external_sources().empty());
  const auto& sp = g.spenders(g.index_of("A"), 0);
  REQUIRE(sp.size() == 1);
  CHECK(g[sp[0].tx].id == "B");
  CHECK(g.at("B").fee() == 10);
}

TEST_CASE("dangling inputs are external, not errors") {
  const auto g = graph_of(
      R"({"id":"B","timestamp":20,"inputs":[{"source_tx":"gone","address":"x","amount":5}],"outputs":[{"address":"y","amount":5}]})");
  CHECK(g.is_external("gone"));
  CHECK_FALSE(g.source_of(0, 0).has_value());
}

TEST_CASE("malformed records are rejected with their line number") {
  SUBCASE("negative amount") {
    try {
      graph_of(R"({"id":"A","timestamp":1,"inputs":[],"outputs":[{"address":"x","amount":1}]})"
               "\n"
               R"({"id":"B","timestamp":1,"inputs":[],"outputs":[{"address":"x","amount":-1}]})");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("duplicate id") {
    CHECK_THROWS_AS(graph_of(R"({"id":"A","timestamp":1,"inputs":[],"outputs":[{"address":"x","amount":1}]})"
                             "\n"
                             R"({"id":"A","timestamp":2,"inputs":[],"outputs":[{"address":"x","amount":1}]})"),
                    ParseError);
  }
  SUBCASE("not json") { CHECK_THROWS_AS(graph_of("{oops"), ParseError); }
  SUBCASE("spends from the future") {
    CHECK_THROWS_AS(
        graph_of(R"({"id":"A","timestamp":50,"inputs":[],"outputs":[{"address":"x","amount":1}]})"
                 "\n"
                 R"({"id":"B","timestamp":40,"inputs":[{"source_tx":"A","address":"x","amount":1}],"outputs":[{"address":"y","amount":1}]})"),
        DataError);
  }
}

TEST_CASE("serialization round trip") {
  const auto g = testing::random_graph(11, 30);
  std::ostringstream out;
  for (const auto& tx : g.transactions()) out << serialize_transaction(tx) << '\n';
  const auto back = graph_of(out.str());
  REQUIRE(back.size() == g.size());
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(serialize_transaction(back[i]) == serialize_transaction(g[i]));
}

TEST_CASE("address index") {
  const auto g = graph_of(
      R"({"id":"t2","timestamp":10,"inputs":[],"outputs":[{"address":"X","amount":5}]})"
      "\n"
      R"({"id":"t1","timestamp":10,"inputs":[],"outputs":[{"address":"X","amount":7}]})"
      "\n"
      R"({"id":"t3","timestamp":20,"inputs":[{"source_tx":"t1","address":"X","amount":7}],"outputs":[{"address":"Y","amount":7}]})");
  const AddressIndex idx(g);
  const auto* x = idx.find("X");
  REQUIRE(x);
  REQUIRE(x->receive_txs.size() == 2);
  CHECK(g[x->receive_txs[0]].id == "t1");  // equal timestamps order by id
  CHECK(g[x->receive_txs[1]].id == "t2");
  REQUIRE(x->spend_txs.size() == 1);
  CHECK(g[x->spend_txs[0]].id == "t3");
  const auto* y = idx.find("Y");
  REQUIRE(y);
  CHECK(y->receive_txs.size() == 1);
  CHECK(y->spend_txs.empty());
  CHECK(idx.first_seen("X") == 10);
  CHECK_FALSE(idx.first_seen("nobody").has_value());
}

TEST_CASE("index matches a linear scan on random graphs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = testing::random_graph(seed, 40);
    const AddressIndex idx(g);
    std::map<std::string, std::pair<std::size_t, std::size_t>> scan;
    for (const auto& tx : g.transactions()) {
      std::set<std::string> outs, ins;
      for (const auto& o : tx.outputs) outs.insert(o.address);
      for (const auto& i : tx.inputs) ins.insert(i.address);
      for (const auto& a : outs) ++scan[a].first;
      for (const auto& a : ins) ++scan[a].second;
    }
    CHECK(idx.size() == scan.size());
    for (const auto& [a, counts] : scan) {
      const auto* act = idx.find(a);
      REQUIRE(act);
      CHECK(act->receive_txs.size() == counts.first);
      CHECK(act->spend_txs.size() == counts.second);
      const auto sorted = [&](const std::vector<std::size_t>& v) {
        return std::is_sorted(v.begin(), v.end(), [&](std::size_t p, std::size_t q) {
          return g[p].timestamp != g[q].timestamp ? g[p].timestamp < g[q].timestamp : g[p].id < g[q].id;
        });
      };
      CHECK(sorted(act->receive_txs));
      CHECK(sorted(act->spend_txs));
    }
  }
}

TEST_CASE("transaction pair shares") {
  Transaction one{"t", 0, {{"s", "a", 100}}, {{"b", 100}}};
  auto p = transaction_pairs(one);
  REQUIRE(p.pairs.size() == 1);
  CHECK(p.pairs[0].amount == 100);
  CHECK(p.pairs[0].input_share == 1.0);
  CHECK(p.pairs[0].output_share == 1.0);

  Transaction merge{"t", 0, {{"s", "a", 5}, {"s", "b", 70}, {"s", "c", 25}}, {{"d", 100}}};
  p = transaction_pairs(merge);
  REQUIRE(p.pairs.size() == 3);
  CHECK(p.pairs[0].input_share == doctest::Approx(0.05));
  CHECK(p.pairs[1].input_share == doctest::Approx(0.70));
  CHECK(p.pairs[2].input_share == doctest::Approx(0.25));

  Transaction fan{"t", 0, {{"s", "a", 100}}, {{"x", 20}, {"y", 70}, {"z", 10}}};
  p = transaction_pairs(fan);
  REQUIRE(p.pairs.size() == 3);
  CHECK(p.pairs[0].output_share == doctest::Approx(0.20));
  CHECK(p.pairs[1].output_share == doctest::Approx(0.70));
  CHECK(p.pairs[2].output_share == doctest::Approx(0.10));

  Transaction zero{"t", 0, {{"s", "a", 0}}, {{"x", 0}}};
  p = transaction_pairs(zero);
  CHECK(p.degenerate);
  CHECK(p.pairs.empty());
}

TEST_CASE("pair amounts conserve the smaller side exactly") {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    Transaction tx;
    tx.id = "t";
    const auto ni = 1 + uniform_index(rng, 6), nj = 1 + uniform_index(rng, 6);
    for (std::size_t i = 0; i < ni; ++i) tx.inputs.push_back({"s", "a", static_cast<Amount>(uniform_index(rng, 1000))});
    for (std::size_t j = 0; j < nj; ++j) tx.outputs.push_back({"b", static_cast<Amount>(uniform_index(rng, 1000))});
    const auto split = transaction_pairs(tx);
    if (tx.input_total() == 0 || tx.output_total() == 0) {
      CHECK(split.degenerate);
      continue;
    }
    REQUIRE(split.pairs.size() == ni * nj);
    Amount sum = 0;
    double in_share = 0, out_share = 0;
    for (const auto& p : split.pairs) {
      CHECK(p.amount >= 0);
      sum += p.amount;
      if (p.output_index == 0) in_share += p.input_share;
      if (p.input_index == 0) out_share += p.output_share;
    }
    CHECK(sum == std::min(tx.input_total(), tx.output_total()));
    CHECK(in_share == doctest::Approx(1.0));
    CHECK(out_share == doctest::Approx(1.0));
  }
}

TEST_CASE("labels") {
  std::istringstream in("address,label\na,malicious\nb,regular\nc,unlabeled\n");
  const auto labels = load_labels(in);
  REQUIRE(labels.size() == 3);
  CHECK(labels[0].label == Label::Malicious);
  CHECK(labels[2].label == Label::Unlabeled);
  std::ostringstream out;
  write_labels(out, labels);
  CHECK(out.str() == "address,label\na,malicious\nb,regular\nc,unlabeled\n");

  std::istringstream bad("address,label\na,evil\n");
  CHECK_THROWS_AS(load_labels(bad), DataError);
}
