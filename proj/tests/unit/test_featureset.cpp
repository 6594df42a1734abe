#include <doctest.h>

#include <cmath>
#include <sstream>

#include "emad/featureset.hpp"
#include "fixtures.hpp"

using namespace emad;

namespace {

Transaction tx(std::string id, Timestamp t, std::vector<InputRef> in, std::vector<OutputRef> out) {
  return {std::move(id), t, std::move(in), std::move(out)};
}

Eigen::Index col(const std::string& name) {
  const auto& cols = raw_columns();
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i].name == name) return static_cast<Eigen::Index>(i);
  FAIL("no column " << name);
  return -1;
}

}  // namespace

TEST_CASE("column layout") {
  CHECK(raw_columns().size() == 212);
  CHECK(base_features().size() == 68);
  CHECK(FeatureSchema::raw().size() == 212);
  const auto seed = FeatureSchema::seed();
  CHECK(seed.size() == 68);
  CHECK(seed.bases().size() == 68);
  CHECK(raw_columns()[16].name == "LT-BK.path_count");
  CHECK(raw_columns()[17].name == "LT-BK.hop_count.max");
  CHECK(raw_columns()[20].name == "LT-BK.hop_count.std");
  CHECK(raw_columns()[211].name == "ST-FR.min_score.std");
  CHECK(is_address_feature("AF.balance"));
  CHECK_FALSE(is_augmentable("AF.balance"));
  CHECK_FALSE(is_augmentable("ST-BK.path_count"));
  CHECK(is_augmentable("ST-BK.max_score"));
  CHECK(columns_of("LT-FR.height").size() == 4);
  std::size_t af = 0;
  for (const auto& b : base_features()) af += is_address_feature(b);
  CHECK(af == 16);
}

TEST_CASE("schema projection and serialization") {
  const FeatureSchema s({3, 17, 200});
  Matrix raw = Matrix::Random(4, 212);
  const Matrix p = s.project(raw);
  REQUIRE(p.cols() == 3);
  CHECK(p.col(1) == raw.col(17));
  const Matrix back = s.unproject(p);
  CHECK(back.col(200) == raw.col(200));
  CHECK(back.col(0).isZero());
  CHECK(FeatureSchema::from_json(s.to_json()) == s);
  CHECK(s.id() != FeatureSchema({3, 200, 17}).id());
  CHECK(s.id() == FeatureSchema({3, 17, 200}).id());
  CHECK_THROWS(FeatureSchema({212}));
  CHECK_THROWS(s.project(Matrix::Zero(1, 5)));
}

TEST_CASE("address features on a small history") {
  const Timestamp h = kSecondsPerHour;
  const TxGraph g({tx("r0", 0, {}, {{"A", 100}}), tx("r1", 10, {}, {{"A", 50}, {"B", 1}}),
                   tx("s0", 2 * h + 5, {{"r0", "A", 100}}, {{"C", 100}}), tx("r2", 2 * h + 9, {}, {{"A", 0}})});
  const AddressIndex idx(g);
  const auto m = [&](int t) { return address_features(g, idx, "A", 0, t); };

  const auto r0 = m(0);
  CHECK(r0(0) == 150);
  CHECK(r0(1) == 0);
  CHECK(r0(2) == 2);
  CHECK(r0(3) == 0);
  CHECK(r0(5) == 2);
  CHECK(r0(8) == 2);
  CHECK(r0(14) == 1);
  CHECK(r0(15) == 1.0);

  const auto r1 = m(1);
  CHECK(r1(5) == 0);
  CHECK(r1(15) == 0.5);

  const auto r2 = m(2);
  CHECK(r2(0) == 50);
  CHECK(r2(1) == 1);
  CHECK(r2(2) == 3);
  CHECK(r2(3) == doctest::Approx(1.0 / 3));
  CHECK(r2(4) == 1);
  CHECK(r2(5) == 1);
  CHECK(r2(6) == 1);
  CHECK(r2(7) == 1);
  CHECK(r2(10) == 1);
  CHECK(r2(11) == 2);
  CHECK(r2(12) == 0);
  CHECK(r2(13) == 2);
  CHECK(r2(14) == 2);
  CHECK(r2(15) == doctest::Approx(2.0 / 3));
}

TEST_CASE("path set statistics") {
  const TxGraph g({tx("a", 0, {}, {{"X", 10}}), tx("b", 0, {}, {{"Y", 30}}),
                   tx("c", 5, {{"a", "X", 10}}, {{"Z", 4}, {"W", 6}})});
  PathSet set;
  TransferPath p1, p2;
  p1.hops = {{std::nullopt, 1.0, g.index_of("a")}};
  p2.hops = {{std::nullopt, 1.0, g.index_of("c")}, {g.index_of("c"), 0.5, g.index_of("a")}};
  p2.height = 2;
  set.paths = {p1, p2};

  const auto f1 = path_features(g, p2);
  CHECK(f1[0] == 2);
  CHECK(f1[2] == 10);
  CHECK(f1[3] == 0);  // coinbase has no inputs
  CHECK(f1[8] == 2);
  CHECK(f1[9] == 1);
  CHECK(f1[10] == 1.0);
  CHECK(f1[11] == 0.5);

  const auto row = path_set_features(g, set);
  REQUIRE(row.size() == 49);
  CHECK(row(0) == 2);
  CHECK(row(1) == 2);
  CHECK(row(2) == 1);
  CHECK(row(3) == 1.5);
  CHECK(row(4) == 0.5);  // population std of {1, 2}
  CHECK(path_set_features(g, PathSet{}).isZero());
}

TEST_CASE("feature rows only see the past") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto g = testing::random_graph(seed, 60, 8);
    const AddressIndex idx(g);
    FeatureConfig cfg;
    cfg.horizon_hours = 30;
    for (const auto& address : idx.addresses()) {
      const auto full = feature_sequence(g, idx, address, cfg);
      for (const int t : {0, 3, 11, 29}) {
        const auto cut = hour_cutoff(full.start, t);
        std::vector<Transaction> prefix;
        for (const auto& x : g.transactions())
          if (x.timestamp <= cut) prefix.push_back(x);
        const TxGraph pg(prefix);
        const AddressIndex pidx(pg);
        const auto part = feature_sequence(pg, pidx, address, cfg);
        INFO("seed " << seed << " address " << address << " hour " << t);
        CHECK(part.matrix.row(t) == full.matrix.row(t));
      }
    }
  }
}

TEST_CASE("feature sequence shape and csv") {
  const TxGraph g({tx("f", 0, {}, {{"A", 100}}), tx("r", 3 * kSecondsPerHour, {{"f", "A", 100}}, {{"B", 100}})});
  const AddressIndex idx(g);
  FeatureConfig cfg;
  cfg.horizon_hours = 5;
  const auto seq = feature_sequence(g, idx, "A", cfg);
  REQUIRE(seq.matrix.rows() == 5);
  CHECK(seq.matrix(2, col("LT-FR.path_count")) == 0);
  CHECK(seq.matrix(3, col("LT-FR.path_count")) == 1);
  CHECK(seq.matrix(4, col("LT-FR.hop_count.max")) == 1);
  CHECK(seq.matrix(0, col("LT-BK.path_count")) == 1);
  CHECK(feature_sequence(g, idx, "nobody", cfg).matrix.isZero());

  std::ostringstream out;
  const FeatureSchema s({0, 1});
  write_feature_csv_header(out, s);
  write_feature_csv_rows(out, "A", s.project(seq.matrix).topRows(2));
  CHECK(out.str() == "address,hour,AF.balance,AF.spend_count\nA,0,100,0\nA,1,100,0\n");
}
