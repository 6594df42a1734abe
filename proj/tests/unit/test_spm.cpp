#include <doctest.h>

#include <vector>

#include "emad/spm.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace emad;

TEST_CASE("change profile") {
  Matrix a(3, 2), b(3, 2);
  a << 1, 2, 2, 2, 2, 2;
  b << 0, 4, 0, 4, 0, 2;
  const std::vector<Matrix> seqs{a, b};
  const auto p = change_profile(seqs, 0.0 + 1e-12);
  REQUIRE(p.ratio.size() == 3);
  CHECK(p.ratio[0] == 0.0);
  CHECK(p.ratio[1] == doctest::Approx(0.25));  // (1/1 + 0 + 0 + 0) / 4
  CHECK(p.ratio[2] == doctest::Approx(0.125));  // (2/4) / 4
  CHECK(p.peak == doctest::Approx(0.25));
  const std::vector<Matrix> bad{a, Matrix::Zero(2, 2)};
  CHECK_THROWS(change_profile(bad));
}

TEST_CASE("split points") {
  ChangeProfile p;
  p.ratio = {0, 0.1, 1.0, 0.9, 0.2, 0.5, 0.05, 0.4, 0, 0};
  p.peak = 1.0;
  SplitConfig cfg;
  cfg.theta = 0.3;
  cfg.min_len = 2;
  // Candidates above 0.3: 2 (1.0), 3 (0.9), 5 (0.5), 7 (0.4); 3 is too close to 2.
  CHECK(split_points(p, cfg) == std::vector<int>{0, 2, 5, 7, 10});

  cfg.max_segments = 3;
  CHECK(split_points(p, cfg) == std::vector<int>{0, 2, 5, 10});

  // Strictly above the bar.
  cfg = {};
  cfg.theta = 0.4;
  cfg.min_len = 1;
  CHECK(split_points(p, cfg) == std::vector<int>{0, 2, 3, 5, 10});

  ChangeProfile flat;
  flat.ratio.assign(5, 0.0);
  CHECK(split_points(flat, {}) == std::vector<int>{0, 5});
  CHECK_THROWS(split_points(flat, {1.0, 2, 16}));

  const auto segs = segments_from({0, 2, 5, 10});
  REQUIRE(segs.size() == 3);
  CHECK(segs[1] == Segment{2, 5});
  CHECK(segment_of(segs, 0) == 0);
  CHECK(segment_of(segs, 4) == 1);
  CHECK(segment_of(segs, 9) == 2);
}

TEST_CASE("segment vector weights the time mean") {
  Matrix s(2, 3);
  s << 1, 2, 3, 3, 4, 5;
  RowVector w(3);
  w << 1, 0, 0.5;
  const RowVector v = segment_vector(s, w);
  CHECK(v(0) == 2);
  CHECK(v(1) == 0);
  CHECK(v(2) == 2);
  CHECK_THROWS(segment_vector(s.topRows(0), w));
}

TEST_CASE("z-score") {
  Matrix x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  const auto z = ZScore::fit(x);
  CHECK(z.mean(0) == 2.5);
  CHECK(z.scale(0) == doctest::Approx(std::sqrt(1.25)));
  CHECK(z.scale(1) == 1.0);
  const Matrix n = z.apply_rows(x);
  CHECK(n.col(0).mean() == doctest::Approx(0.0));
  CHECK(n.col(1).isZero());
  const auto back = ZScore::from_json(z.to_json());
  CHECK(back.mean == z.mean);
  CHECK(back.scale == z.scale);
}

TEST_CASE("dbscan on a hand fixture") {
  Matrix x(7, 1);
  x << 0, 0.5, 1.0, 10, 10.5, 11, 50;
  const auto l = dbscan(x, 0.6, 2);
  CHECK(l == std::vector<int>{0, 0, 0, 1, 1, 1, kNoise});
  // With min_pts 3 the chain ends are border points.
  const auto m = dbscan(x, 0.6, 3);
  CHECK(m == std::vector<int>{0, 0, 0, 1, 1, 1, kNoise});
  CHECK(dbscan(x, 0.1, 2) == std::vector<int>(7, kNoise));
}

TEST_CASE("dbscan matches the quadratic reference") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto x = testing::random_points(seed, 40 + seed * 8, 1 + static_cast<int>(seed % 4));
    for (const double eps : {0.5, 1.0, 2.0})
      for (const int min_pts : {2, 4, 8}) {
        INFO("seed " << seed << " eps " << eps << " min_pts " << min_pts);
        CHECK(testing::same_partition(x, eps, min_pts, dbscan(x, eps, min_pts), testing::dbscan_reference(x, eps, min_pts)));
      }
  }
}

TEST_CASE("suggested eps sits on the elbow") {
  Matrix x(60, 1);
  for (Eigen::Index i = 0; i < 50; ++i) x(i, 0) = 0.01 * static_cast<double>(i % 10) + (i < 25 ? 0 : 5);
  for (Eigen::Index i = 50; i < 60; ++i) x(i, 0) = 100.0 * static_cast<double>(i - 49);
  const double eps = suggest_eps(x, 4);
  CHECK(eps >= 0.01);
  CHECK(eps < 50.0);
  const auto l = dbscan(x, eps, 4);
  CHECK(l[0] != kNoise);
  CHECK(l[59] == kNoise);
  CHECK(suggest_eps(Matrix::Zero(5, 2), 3) > 0.0);
}

TEST_CASE("status catalog") {
  Matrix pool(40, 2);
  Rng rng(2);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const double c = i < 20 ? 0.0 : 10.0;
    pool(i, 0) = c + 0.1 * uniform01(rng);
    pool(i, 1) = -c + 0.1 * uniform01(rng);
  }
  TreeConfig tc;
  tc.min_samples_split = 2;
  const auto r = cluster_statuses(pool, 0.5, 4, tc);
  CHECK(r.catalog.status_count() == 2);
  CHECK(r.catalog.noise_id() == 2);
  CHECK(assign_status(pool.row(0), r.catalog).status == r.labels[0]);
  CHECK(assign_status(pool.row(39), r.catalog).status == r.labels[39]);
  CHECK(assign_status(pool.row(39), r.catalog).distance < 0.5);

  const auto back = StatusCatalog::from_json(r.catalog.to_json());
  CHECK(back.to_json() == r.catalog.to_json());

  CHECK_THROWS_AS(cluster_statuses(pool, 1e-6, 4, tc), DataError);
  CHECK_THROWS_AS(cluster_statuses(pool.topRows(2), 0.5, 4, tc), DataError);
}

TEST_CASE("segment importances follow where the signal lives") {
  std::vector<Matrix> seqs;
  std::vector<int> labels;
  Rng rng(6);
  for (int a = 0; a < 60; ++a) {
    const int y = a % 2;
    Matrix m(6, 2);
    for (Eigen::Index t = 0; t < 6; ++t) {
      m(t, 0) = t < 3 ? y + 0.1 * uniform01(rng) : uniform01(rng);
      m(t, 1) = t >= 3 ? y + 0.1 * uniform01(rng) : uniform01(rng);
    }
    seqs.push_back(m);
    labels.push_back(y);
  }
  const auto imp = segment_importances(seqs, labels, segments_from({0, 3, 6}), {});
  REQUIRE(imp.size() == 2);
  CHECK(imp[0](0) == 1.0);
  CHECK(imp[1](1) == 1.0);
}
