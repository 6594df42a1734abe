// Acceptance checks, one line per criterion. Usage: acceptance [workdir] [criterion...]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "emad/dtsa.hpp"
#include "emad/evalkit.hpp"
#include "emad/hst.hpp"
#include "emad/pathtrace.hpp"
#include "emad/pipeline.hpp"
#include "emad/spm.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace emad;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1 ----------------------------------------------------------------------

std::set<std::vector<std::string>> hop_ids(const TxGraph& g, const std::vector<TransferPath>& paths) {
  std::set<std::vector<std::string>> out;
  for (const auto& p : paths) {
    std::vector<std::string> ids;
    for (const auto& h : p.hops) ids.push_back(g[h.tx].id);
    out.insert(ids);
  }
  return out;
}

Outcome path_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t compared = 0, mismatched = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto g = testing::random_graph(1000 + seed, 1 + seed % 50, 6 + seed % 10);
    for (const bool short_term : {false, true}) {
      TraceConfig cfg;
      cfg.branch_cap = 1'000'000;
      if (short_term) {
        cfg.threshold = ThresholdSchedule::short_term();
        cfg.span = kSecondsPerDay;
      } else {
        cfg.threshold = ThresholdSchedule::constant(0.5);
        cfg.span = 365 * kSecondsPerDay;
      }
      for (const auto& tx : g.transactions())
        for (const auto dir : {Direction::Backward, Direction::Forward}) {
          const auto got = dir == Direction::Backward ? backward_paths(g, tx.id, cfg) : forward_paths(g, tx.id, cfg);
          ++compared;
          if (hop_ids(g, got) != testing::enumerate_chains(g.transactions(), tx.id, dir, cfg)) ++mismatched;
        }
    }
  }
  const double secs = seconds_since(t0);
  return {mismatched == 0 && secs < 60.0,
          fmt("%zu path sets compared, %zu mismatched, %.1f s (limit 60 s)", compared, mismatched, secs)};
}

// ---- 2 ----------------------------------------------------------------------

Outcome survival_math() {
  std::size_t violations = 0, collapsed = 0, freeze_violations = 0;
  for (std::uint64_t draw = 0; draw < 1000; ++draw) {
    Rng rng(derive_seed(draw, "survival-draw"));
    const int heads = 1 + static_cast<int>(uniform_index(rng, 2));
    const int d = heads * (2 + static_cast<int>(uniform_index(rng, 3)));
    const ModelConfig mc{d, heads, 1 + static_cast<int>(uniform_index(rng, 2)), uniform01(rng) < 0.5};
    auto params = testing::hst_params(mc, 2, draw);
    params["W_hz"] *= 0.1 + 30.0 * uniform01(rng);
    auto in = testing::hst_input(d, 1 + static_cast<int>(uniform_index(rng, 8)), draw + 7);
    in.features *= 0.2 + 5.0 * uniform01(rng);
    const auto tr = run_trace(params, in, 0.0);
    double prev_s = 1.0, prev_y = kInitialPrediction;
    bool frozen = false;
    for (std::size_t t = 0; t < tr.survival.size(); ++t) {
      if (!(tr.survival[t] <= prev_s)) ++violations;
      if (frozen && std::abs(tr.y_hat[t] - prev_y) > 1e-12) ++freeze_violations;
      if (tr.survival[t] < 1e-12 && !frozen) {
        frozen = true;
        ++collapsed;
      }
      prev_s = tr.survival[t];
      prev_y = tr.y_hat[t];
    }
  }

  auto params = testing::hst_params({4, 2, 1, false}, 2, 3);
  params["W_hz"].setZero();
  const auto tr = run_trace(params, testing::hst_input(4, 12, 4), 0.0);
  double worst = 0.0;
  for (std::size_t t = 0; t < tr.survival.size(); ++t)
    worst = std::max(worst, std::abs(tr.survival[t] - std::pow(2.0, -static_cast<double>(t + 1))));

  return {violations == 0 && worst <= 1e-12 && collapsed > 0 && freeze_violations == 0,
          fmt("1000 draws: %zu increases; ln2 fixture max error %.1e; %zu collapsed traces, %zu moved after freezing",
              violations, worst, collapsed, freeze_violations)};
}

// ---- 3 ----------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto params = testing::hst_params({4, 2, 1, false}, 2, 11);
  const auto in = testing::hst_input(4, 3, 5);
  const LossWeights w{0.7, 0.3, 1.5, 0.6};
  double worst = 0.0;
  std::string worst_name;
  for (const int label : {0, 1}) {
    std::vector<Matrix> grads;
    address_loss(params, in, label, w, &grads);
    for (std::size_t t = 0; t < params.size(); ++t) {
      Matrix numeric(params.tensor(t).rows(), params.tensor(t).cols());
      for (Eigen::Index k = 0; k < numeric.size(); ++k) {
        const double h = 1e-5;
        HstParams plus = params, minus = params;
        plus.tensor(t).data()[k] += h;
        minus.tensor(t).data()[k] -= h;
        numeric.data()[k] = (address_loss(plus, in, label, w).total - address_loss(minus, in, label, w).total) / (2 * h);
      }
      const double scale = std::max(grads[t].norm(), numeric.norm());
      const double rel = scale < 1e-12 ? 0.0 : (grads[t] - numeric).norm() / scale;
      if (rel > worst) worst = rel, worst_name = params.name(t);
    }
  }
  return {worst <= 1e-4, fmt("%zu tensors, worst relative error %.2e (%s), limit 1e-4", params.size(), worst,
                             worst_name.empty() ? "-" : worst_name.c_str())};
}

// ---- 4 ----------------------------------------------------------------------

Outcome metric_algebra() {
  double worst = 0.0;
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 5 + uniform_index(rng, 40);
    const auto splits = 2 + uniform_index(rng, 10);
    std::vector<int> truth(n);
    RowVector row(static_cast<Eigen::Index>(n));
    for (std::size_t a = 0; a < n; ++a) {
      truth[a] = uniform01(rng) < 0.3;
      row(static_cast<Eigen::Index>(a)) = uniform01(rng);
    }
    std::vector<int> pred(n);
    for (std::size_t a = 0; a < n; ++a) pred[a] = row(static_cast<Eigen::Index>(a)) >= 0.5;
    const double plain = standard_metrics(truth, pred).f1;
    const auto e = evaluate(row.replicate(static_cast<Eigen::Index>(splits), 1), truth);
    worst = std::max({worst, std::abs(e.f1_early - plain), std::abs(e.f1_consistent - plain)});
  }

  // Two splits: F1 = [1, 0].
  const double two = f1_early({1.0, 0.0});
  const double two_err = std::abs(two - 1.0 / (1.0 + 1.0 / std::sqrt(2.0)));
  // Four splits, decisions flip between splits 3 and 4.
  Matrix scores(4, 3);
  scores << 0.9, 0.2, 0.6,  //
      0.8, 0.3, 0.6,        //
      0.7, 0.3, 0.6,        //
      0.7, 0.6, 0.4;
  const std::vector<int> truth{1, 0, 1};
  const auto e = evaluate(scores, truth);
  const double f[] = {1.0, 1.0, 1.0, 0.5};  // hand-counted per split F1
  const double r2 = std::sqrt(2.0), r3 = std::sqrt(3.0), r4 = 2.0;
  const double want_e = (f[0] + f[1] / r2 + f[2] / r3 + f[3] / r4) / (1 + 1 / r2 + 1 / r3 + 1 / r4);
  const double want_c = (1.0 * f[0] + r2 * f[1] + r3 * 0.0) / (1 + r2 + r3);
  double four_err = std::abs(e.f1_early - want_e);
  four_err = std::max(four_err, std::abs(e.f1_consistent - want_c));
  for (std::size_t i = 0; i < 4; ++i) four_err = std::max(four_err, std::abs(e.per_split[i].f1 - f[i]));

  return {worst <= 1e-12 && two_err <= 1e-12 && four_err <= 1e-12,
          fmt("constant series max deviation %.1e; two-split error %.1e; four-split error %.1e", worst, two_err,
              four_err)};
}

// ---- 5 ----------------------------------------------------------------------

Outcome dtsa_recovery() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto data = testing::planted_signal(seed, 2000);
    DtsaConfig cfg;
    cfg.seed = seed;
    const auto r = run_dtsa(data.raw, data.y, cfg);
    std::size_t noise_deleted = 0, signal_kept = 0;
    for (const auto& d : r.lists.deleted)
      if (std::find(data.signal.begin(), data.signal.end(), d) == data.signal.end()) ++noise_deleted;
    for (const auto& s : data.signal) signal_kept += !r.lists.deleted.contains(s);
    ok = ok && noise_deleted >= 50 && signal_kept == 3;
    detail += fmt("%sseed %d: %zu/65 noise deleted, %zu/3 signal kept", seed == 1 ? "" : "; ", static_cast<int>(seed),
                  noise_deleted, signal_kept);
  }
  return {ok, detail};
}

// ---- 6 ----------------------------------------------------------------------

Outcome dbscan_oracle() {
  std::size_t bad = 0, points = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto n = 20 + (seed * 97) % 481;
    const int dims = 1 + static_cast<int>(seed % 5);
    const auto x = testing::random_points(5000 + seed, n, dims);
    const double eps = 0.4 + 0.3 * static_cast<double>(seed % 7);
    const int min_pts = 2 + static_cast<int>(seed % 9);
    points += n;
    if (!testing::same_partition(x, eps, min_pts, dbscan(x, eps, min_pts), testing::dbscan_reference(x, eps, min_pts)))
      ++bad;
  }
  return {bad == 0, fmt("100 point sets (%zu points, up to 500 each), %zu partitions differ", points, bad)};
}

// ---- pipeline runs (7, 8, 9) ------------------------------------------------

struct RunStats {
  double f1 = 0, f1_early = 0, recall = 0;
  std::size_t detected = 0, early = 0, malicious = 0;
  double flips_per_address = 0;
  double seconds = 0;
};

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> head;
  {
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) head.push_back(c);
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::map<std::string, std::string> row;
    std::size_t i = 0;
    for (std::string c; std::getline(ss, c, ',') && i < head.size(); ++i) row[head[i]] = c;
    rows.push_back(std::move(row));
  }
  return rows;
}

RunStats run_pipeline(const PipelineConfig& cfg, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  run_all(cfg, dir);
  RunStats s;
  s.seconds = seconds_since(t0);

  const auto metrics = read_csv(dir / files::kMetrics);
  const auto& mean = metrics.back();
  s.f1 = std::stod(mean.at("f1"));
  s.f1_early = std::stod(mean.at("f1_early"));
  s.recall = std::stod(mean.at("recall"));

  std::map<std::string, int> bulk;
  for (const auto& r : read_csv(dir / files::kEvents)) bulk[r.at("address")] = std::stoi(r.at("bulk_hour"));
  for (const auto& p : load_summary(dir / files::kSummary)) {
    if (p.label != 1) continue;
    ++s.malicious;
    if (p.final_y_hat < 0.5) continue;
    ++s.detected;
    if (p.t_die && *p.t_die < bulk.at(p.address)) ++s.early;
  }

  std::map<std::string, std::vector<bool>> decisions;
  for (const auto& r : read_csv(dir / files::kPredictions)) decisions[r.at("address")].push_back(std::stod(r.at("y_hat")) >= 0.5);
  std::size_t flips = 0;
  for (const auto& [a, d] : decisions)
    for (std::size_t t = 1; t < d.size(); ++t) flips += d[t] != d[t - 1];
  s.flips_per_address = decisions.empty() ? 0.0 : static_cast<double>(flips) / static_cast<double>(decisions.size());
  return s;
}

PipelineConfig seeded(std::uint64_t seed) {
  PipelineConfig c;
  c.seed = seed;
  c.synth.seed = seed;
  return c;
}

struct Runs {
  fs::path root;
  std::map<std::string, RunStats> cache;

  const RunStats& get(const std::string& name, const PipelineConfig& cfg) {
    auto it = cache.find(name);
    if (it == cache.end()) {
      std::cout << "  running " << name << " ..." << std::flush;
      it = cache.emplace(name, run_pipeline(cfg, root / name)).first;
      std::cout << fmt(" %.1f s", it->second.seconds) << std::endl;
    }
    return it->second;
  }
};

Outcome end_to_end(Runs& runs) {
  const auto& s = runs.get("seed1", seeded(1));
  const double share = s.detected == 0 ? 0.0 : static_cast<double>(s.early) / static_cast<double>(s.detected);
  const bool ok = s.f1 >= 0.8 && s.f1_early >= 0.7 && share >= 0.7 && s.seconds <= 1800.0;
  return {ok, fmt("F1 %.3f (>= 0.8), F1^E %.3f (>= 0.7), t_die before bulk transfer for %zu/%zu detected (%.0f%%, >= "
                  "70%%), %zu malicious in test split, %.1f s",
                  s.f1, s.f1_early, s.early, s.detected, 100.0 * share, s.malicious, s.seconds)};
}

Outcome ablation(Runs& runs) {
  double rec_paths = 0, rec_af = 0, flips_on = 0, flips_off = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto tag = std::to_string(seed);
    const auto& full = runs.get("seed" + tag, seeded(seed));
    auto af = seeded(seed);
    af.address_only = true;
    auto off = seeded(seed);
    off.train.gamma1 = 0.0;
    rec_paths += full.recall / 3;
    flips_on += full.flips_per_address / 3;
    rec_af += runs.get("seed" + tag + "-address-only", af).recall / 3;
    flips_off += runs.get("seed" + tag + "-gamma1-zero", off).flips_per_address / 3;
  }
  const bool recall_ok = rec_paths > rec_af;
  const bool flips_ok = flips_on < flips_off;
  return {recall_ok && flips_ok,
          fmt("recall with paths %.4f vs address-only %.4f (%s); flips per address gamma1=%.1f %.4f vs gamma1=0 %.4f (%s)",
              rec_paths, rec_af, recall_ok ? "ok" : "not higher", PipelineConfig{}.train.gamma1, flips_on, flips_off,
              flips_ok ? "ok" : "not lower")};
}

std::map<fs::path, std::string> tree_bytes(const fs::path& root) {
  std::map<fs::path, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root)] = ss.str();
  }
  return out;
}

Outcome determinism(Runs& runs) {
  runs.get("seed1", seeded(1));
  runs.get("seed1-repeat", seeded(1));
  const auto a = tree_bytes(runs.root / "seed1");
  const auto b = tree_bytes(runs.root / "seed1-repeat");
  std::size_t differing = 0;
  std::set<fs::path> names;
  for (const auto& [k, v] : a) names.insert(k);
  for (const auto& [k, v] : b) names.insert(k);
  std::string first;
  for (const auto& n : names) {
    const auto ia = a.find(n), ib = b.find(n);
    if (ia == a.end() || ib == b.end() || ia->second != ib->second) {
      ++differing;
      if (first.empty()) first = n.string();
    }
  }
  return {differing == 0 && !a.empty(),
          fmt("%zu files compared, %zu differ%s%s", names.size(), differing, first.empty() ? "" : ", first: ",
              first.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  Runs runs;
  runs.root = fs::temp_directory_path() / "emad_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (!a.empty() && std::isdigit(static_cast<unsigned char>(a[0])) && a.size() == 1)
      only.insert(std::stoi(a));
    else
      runs.root = a;
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"path oracle", path_oracle},
      {"survival math", survival_math},
      {"gradient fidelity", gradient_fidelity},
      {"metric algebra", metric_algebra},
      {"DT-SA signal recovery", dtsa_recovery},
      {"DBSCAN oracle", dbscan_oracle},
      {"end-to-end detection", [&] { return end_to_end(runs); }},
      {"ablation direction", [&] { return ablation(runs); }},
      {"determinism", [&] { return determinism(runs); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
