#include "emad/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <openssl/evp.h>

#include "emad/dtsa.hpp"
#include "emad/evalkit.hpp"
#include "emad/hst.hpp"
#include "emad/report.hpp"
#include "emad/spm.hpp"

namespace emad {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------- config

json PipelineConfig::to_json() const {
  return {
      {"seed", seed},
      {"horizon_hours", horizon_hours},
      {"hour_interval", hour_interval},
      {"paths",
       {{"lt_theta", paths.lt_theta},
        {"lt_span_days", paths.lt_span / kSecondsPerDay},
        {"st_floor", paths.st_floor},
        {"st_span_hours", paths.st_span / kSecondsPerHour},
        {"branch_cap", paths.branch_cap}}},
      {"synth", synth.to_json()},
      {"test_fraction", test_fraction},
      {"address_only", address_only},
      {"spy", {{"fraction", spy.fraction}, {"max_depth", spy.max_depth}, {"min_samples_split", spy.min_samples_split}}},
      {"dtsa",
       {{"theta", dtsa.theta},
        {"sessions", dtsa.sessions},
        {"max_rounds", dtsa.max_rounds},
        {"sample_stride", dtsa.sample_stride},
        {"max_depth", dtsa.max_depth},
        {"min_samples_split", dtsa.min_samples_split}}},
      {"segment",
       {{"theta", segment.theta},
        {"min_len", segment.min_len},
        {"max_segments", segment.max_segments},
        {"eps", segment.eps},
        {"min_pts", segment.min_pts},
        {"status_depth", segment.status_depth}}},
      {"model", {{"heads", model.heads}, {"blocks", model.blocks}, {"positional", model.positional}}},
      {"train",
       {{"lr", train.lr},
        {"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"gamma1", train.gamma1},
        {"gamma2", train.gamma2}}},
      {"predict", {{"s_min", predict.s_min}, {"all_addresses", predict.all_addresses}}},
  };
}

namespace {

void reject_unknown(const json& j, const json& reference, const std::string& where) {
  if (!j.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!reference.contains(k)) throw UsageError("config: unknown key '" + where + k + "'");
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) {
    try {
      into = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw UsageError(std::string("config: bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  const json ref = c.to_json();
  reject_unknown(j, ref, "");
  read(j, "seed", c.seed);
  read(j, "horizon_hours", c.horizon_hours);
  read(j, "hour_interval", c.hour_interval);
  read(j, "test_fraction", c.test_fraction);
  read(j, "address_only", c.address_only);
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    reject_unknown(p, ref["paths"], "paths.");
    read(p, "lt_theta", c.paths.lt_theta);
    read(p, "st_floor", c.paths.st_floor);
    read(p, "branch_cap", c.paths.branch_cap);
    if (p.contains("lt_span_days")) c.paths.lt_span = p["lt_span_days"].get<Timestamp>() * kSecondsPerDay;
    if (p.contains("st_span_hours")) c.paths.st_span = p["st_span_hours"].get<Timestamp>() * kSecondsPerHour;
  }
  if (j.contains("synth")) {
    reject_unknown(j["synth"], ref["synth"], "synth.");
    c.synth = SynthSpec::from_json(j["synth"]);
  }
  if (j.contains("spy")) {
    const auto& s = j["spy"];
    reject_unknown(s, ref["spy"], "spy.");
    read(s, "fraction", c.spy.fraction);
    read(s, "max_depth", c.spy.max_depth);
    read(s, "min_samples_split", c.spy.min_samples_split);
  }
  if (j.contains("dtsa")) {
    const auto& s = j["dtsa"];
    reject_unknown(s, ref["dtsa"], "dtsa.");
    read(s, "theta", c.dtsa.theta);
    read(s, "sessions", c.dtsa.sessions);
    read(s, "max_rounds", c.dtsa.max_rounds);
    read(s, "sample_stride", c.dtsa.sample_stride);
    read(s, "max_depth", c.dtsa.max_depth);
    read(s, "min_samples_split", c.dtsa.min_samples_split);
  }
  if (j.contains("segment")) {
    const auto& s = j["segment"];
    reject_unknown(s, ref["segment"], "segment.");
    read(s, "theta", c.segment.theta);
    read(s, "min_len", c.segment.min_len);
    read(s, "max_segments", c.segment.max_segments);
    read(s, "eps", c.segment.eps);
    read(s, "min_pts", c.segment.min_pts);
    read(s, "status_depth", c.segment.status_depth);
  }
  if (j.contains("model")) {
    const auto& s = j["model"];
    reject_unknown(s, ref["model"], "model.");
    read(s, "heads", c.model.heads);
    read(s, "blocks", c.model.blocks);
    read(s, "positional", c.model.positional);
  }
  if (j.contains("train")) {
    const auto& s = j["train"];
    reject_unknown(s, ref["train"], "train.");
    read(s, "lr", c.train.lr);
    read(s, "epochs", c.train.epochs);
    read(s, "batch_size", c.train.batch_size);
    read(s, "gamma1", c.train.gamma1);
    read(s, "gamma2", c.train.gamma2);
  }
  if (j.contains("predict")) {
    const auto& s = j["predict"];
    reject_unknown(s, ref["predict"], "predict.");
    read(s, "s_min", c.predict.s_min);
    read(s, "all_addresses", c.predict.all_addresses);
  }

  if (c.horizon_hours < 2) throw UsageError("config: horizon_hours must be at least 2");
  if (c.hour_interval != 1) throw UsageError("config: only a 1-hour interval is supported");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw UsageError("config: test_fraction must lie in (0,1)");
  if (!(c.dtsa.theta > 0.0 && c.dtsa.theta < 1.0)) throw UsageError("config: dtsa.theta must lie in (0,1)");
  if (!(c.segment.theta > 0.0 && c.segment.theta < 1.0)) throw UsageError("config: segment.theta must lie in (0,1)");
  if (c.dtsa.sample_stride < 1 || c.dtsa.sessions < 1) throw UsageError("config: dtsa stride and sessions must be positive");
  if (c.segment.min_len < 1 || c.segment.max_segments < 1 || c.segment.min_pts < 1)
    throw UsageError("config: segment lengths and min_pts must be positive");
  if (c.model.heads < 1 || c.model.blocks < 1) throw UsageError("config: model heads and blocks must be positive");
  if (c.train.epochs < 0 || c.train.batch_size < 1 || c.train.lr < 0.0) throw UsageError("config: bad training settings");
  if (c.train.gamma1 < 0.0 || c.train.gamma2 < 0.0) throw UsageError("config: loss weights must be non-negative");
  if (!(c.predict.s_min > 0.0 && c.predict.s_min < 1.0)) throw UsageError("config: predict.s_min must lie in (0,1)");
  c.synth.seed = c.seed;
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
  return PipelineConfig::from_json(j);
}

// ---------------------------------------------------------------- stages

namespace {

constexpr std::pair<Stage, std::string_view> kStageNames[] = {
    {Stage::Synth, "synth"},     {Stage::Ingest, "ingest"}, {Stage::Paths, "paths"},
    {Stage::Features, "features"}, {Stage::Select, "select"}, {Stage::Segment, "segment"},
    {Stage::Train, "train"},     {Stage::Predict, "predict"}, {Stage::Eval, "eval"},
    {Stage::Report, "report"},
};

}  // namespace

std::string_view to_string(Stage s) {
  for (const auto& [st, name] : kStageNames)
    if (st == s) return name;
  return "unknown";
}

std::optional<Stage> parse_stage(std::string_view name) {
  for (const auto& [st, n] : kStageNames)
    if (n == name) return st;
  return std::nullopt;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError(line, "bad number '" + std::string(s) + "'");
  return v;
}

long long parse_int(std::string_view s, std::size_t line) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError(line, "bad integer '" + std::string(s) + "'");
  return v;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  return in;
}

void write_json(const fs::path& p, const json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& p) {
  auto in = open_in(p);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

/// Tracks what a stage read and wrote and records it in <stage>.manifest.json.
class StageRun {
 public:
  StageRun(Stage stage, const PipelineConfig& cfg, fs::path out) : stage_(stage), cfg_(cfg), out_(std::move(out)) {}

  /// Fails with "run <stage> first" when a prerequisite file is missing.
  void require(std::initializer_list<std::pair<const char*, Stage>> needs) {
    for (const auto& [file, producer] : needs)
      if (!fs::exists(out_ / file))
        throw StageError(std::string(file) + " is missing; run " + std::string(to_string(producer)) + " first");
    for (const auto& [file, producer] : needs) inputs_.insert(file);
  }
  fs::path in(const char* file) {
    inputs_.insert(file);
    return out_ / file;
  }
  fs::path out(const char* file) {
    outputs_.insert(file);
    return out_ / file;
  }

  void finish() {
    json ins = json::object(), outs = json::object();
    for (const auto& f : inputs_) ins[f] = sha256_file(out_ / f);
    for (const auto& f : outputs_) outs[f] = sha256_file(out_ / f);
    write_json(out_ / (std::string(to_string(stage_)) + ".manifest.json"),
               {{"stage", to_string(stage_)}, {"seed", cfg_.seed}, {"config", cfg_.to_json()}, {"inputs", ins},
                {"outputs", outs}});
  }

 private:
  Stage stage_;
  const PipelineConfig& cfg_;
  fs::path out_;
  std::set<std::string> inputs_, outputs_;
};

FeatureConfig feature_config(const PipelineConfig& cfg) { return {cfg.horizon_hours, cfg.paths}; }

std::vector<LabeledAddress> read_labels(const fs::path& p) {
  auto in = open_in(p);
  return load_labels(in);
}

TxGraph read_graph(const fs::path& p) {
  auto in = open_in(p);
  return load_transactions(in);
}

// ---- synth

void stage_synth(const PipelineConfig& cfg, const fs::path& out) {
  StageRun run(Stage::Synth, cfg, out);
  SynthSpec spec = cfg.synth;
  spec.seed = derive_seed(cfg.seed, "synth");
  const auto data = synthesize(spec);
  {
    auto f = open_out(run.out(files::kTransactions));
    write_transactions(f, data.transactions);
  }
  {
    auto f = open_out(run.out(files::kLabels));
    write_labels(f, data.labels);
  }
  {
    auto f = open_out(run.out(files::kEvents));
    write_events(f, data.events);
  }
  run.finish();
}

// ---- ingest

void stage_ingest(const PipelineConfig& cfg, const fs::path& out) {
  StageRun run(Stage::Ingest, cfg, out);
  run.require({{files::kTransactions, Stage::Synth}, {files::kLabels, Stage::Synth}});
  const auto graph = read_graph(run.in(files::kTransactions));
  const AddressIndex index(graph);
  auto labels = read_labels(run.in(files::kLabels));
  std::sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) { return a.address < b.address; });

  std::vector<AddressRow> rows;
  for (const auto& l : labels) {
    if (l.label == Label::Unlabeled) continue;
    const auto first = index.first_seen(l.address);
    if (!first) throw DataError("labeled address " + l.address + " never appears in the transactions");
    rows.push_back({l.address, l.label, false, *first});
  }
  // Stratified split: per class, a seeded shuffle sends ceil(fraction * n) to test.
  Rng rng(derive_seed(cfg.seed, "split"));
  for (const Label cls : {Label::Malicious, Label::Regular}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i].label == cls) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    const auto n_test = static_cast<std::size_t>(std::ceil(cfg.test_fraction * static_cast<double>(idx.size()) - 1e-9));
    for (std::size_t i = 0; i < n_test && i < idx.size(); ++i) rows[idx[i]].test = true;
  }
  auto f = open_out(run.out(files::kAddresses));
  f << "address,label,split,first_seen\n";
  for (const auto& r : rows)
    f << r.address << ',' << to_string(r.label) << ',' << (r.test ? "test" : "train") << ',' << r.first_seen << '\n';
  f.close();
  run.finish();
}

// ---- paths

void stage_paths(const PipelineConfig& cfg, const fs::path& out) {
  StageRun run(Stage::Paths, cfg, out);
  run.require({{files::kTransactions, Stage::Synth}, {files::kAddresses, Stage::Ingest}});
  const auto graph = read_graph(run.in(files::kTransactions));
  const AddressIndex index(graph);
  const auto rows = load_addresses(run.in(files::kAddresses));
  auto f = open_out(run.out(files::kPaths));
  write_paths_csv_header(f);
  for (const auto& r : rows) {
    const auto sets = extract_path_sets(graph, index, r.address, hour_cutoff(r.first_seen, cfg.horizon_hours - 1), cfg.paths);
    for (const auto& s : sets) write_paths_csv(f, graph, s);
  }
  f.close();
  run.finish();
}

// ---- features

void stage_features(const PipelineConfig& cfg, const fs::path& out) {
  StageRun run(Stage::Features, cfg, out);
  run.require({{files::kTransactions, Stage::Synth}, {files::kAddresses, Stage::Ingest}});
  const auto graph = read_graph(run.in(files::kTransactions));
  const AddressIndex index(graph);
  const auto rows = load_addresses(run.in(files::kAddresses));
  const auto raw = FeatureSchema::raw();
  auto f = open_out(run.out(files::kFeatures));
  write_feature_csv_header(f, raw);
  for (const auto& r : rows) {
    const auto seq = feature_sequence(graph, index, r.address, feature_config(cfg));
    write_feature_csv_rows(f, r.address, seq.matrix);
  }
  f.close();
  write_json(run.out(files::kRawSchema), raw.to_json());
  run.finish();
}

// ---- shared loaders

struct TrainingSet {
  std::vector<std::string> addresses;
  std::vector<int> labels;
};

TrainingSet load_training(const fs::path& p) {
  TrainingSet t;
  for (const auto& l : read_labels(p)) {
    t.addresses.push_back(l.address);
    t.labels.push_back(l.label == Label::Malicious ? 1 : 0);
  }
  return t;
}

FeatureSchema load_schema(const fs::path& p) { return FeatureSchema::from_json(read_json(p)); }

std::vector<double> inverse_frequency(const std::vector<int>& y) {
  double pos = 0;
  for (const int v : y) pos += v;
  const double n = static_cast<double>(y.size());
  const double neg = n - pos;
  return {neg > 0 ? n / (2 * neg) : 1.0, pos > 0 ? n / (2 * pos) : 1.0};
}

// ---- select

void stage_select(const PipelineConfig& cfg, const fs::path& out) {
  StageRun run(Stage::Select, cfg, out);
  run.require({{files::kAddresses, Stage::Ingest}, {files::kFeatures, Stage::Features}});
  const auto rows = load_addresses(run.in(files::kAddresses));
  std::set<std::string> train_set;
  for (const auto& r : rows)
    if (!r.test) train_set.insert(r.address);
  const auto feats = load_features(run.in(files::kFeatures), train_set, cfg.horizon_hours);

  // Known positives against everything else in the training split, which is treated as unlabeled.
  const auto start = cfg.address_only ? FeatureLists::address_only() : FeatureLists::initial();
  const auto seed_schema = apply_lists(FeatureSchema::seed(), start);
  std::vector<std::string> pos, unl;
  for (const auto& r : rows)
    if (!r.test) (r.label == Label::Malicious ? pos : unl).push_back(r.address);
  const auto last_rows = [&](const std::vector<std::string>& as) {
    Matrix m(static_cast<Eigen::Index>(as.size()), static_cast<Eigen::Index>(seed_schema.size()));
    for (std::size_t i = 0; i < as.size(); ++i)
      m.row(static_cast<Eigen::Index>(i)) = seed_schema.project(feats.at(as[i]).bottomRows(1));
    return m;
  };
  const auto spy = select_reliable_negatives(last_rows(pos), last_rows(unl), {cfg.spy.fraction, derive_seed(cfg.seed, "spy")},
                                             tree_factory(cfg.spy.max_depth, cfg.spy.min_samples_split));
  if (spy.reliable_negatives.empty()) throw DataError("spy selection found no reliable negatives");

  std::vector<LabeledAddress> training;
  for (const auto& a : pos) training.push_back({a, Label::Malicious});
  for (const auto i : spy.reliable_negatives) training.push_back({unl[i], Label::Regular});
  std::sort(training.begin(), training.end(), [](const auto& a, const auto& b) { return a.address < b.address; });
  {
    auto f = open_out(run.out(files::kTrainingLabels));
    write_labels(f, training);
  }
  json spy_json = spy.to_json();
  spy_json["positives"] = pos;
  spy_json["unlabeled"] = unl;
  write_json(run.out(files::kSpy), spy_json);

  // Single-hour samples at a fixed stride.
  std::vector<int> hours;
  for (int h = 0; h < cfg.horizon_hours; h += cfg.dtsa.sample_stride) hours.push_back(h);
  Matrix x(static_cast<Eigen::Index>(training.size() * hours.size()), static_cast<Eigen::Index>(kRawFeatureCount));
  std::vector<int> y;
  Eigen::Index r = 0;
  for (const auto& t : training)
    for (const int h : hours) {
      x.row(r++) = feats.at(t.address).row(h);
      y.push_back(t.label == Label::Malicious ? 1 : 0);
    }
  DtsaConfig dc;
  dc.theta = cfg.dtsa.theta;
  dc.sessions = cfg.dtsa.sessions;
  dc.max_rounds = cfg.dtsa.max_rounds;
  dc.tree.max_depth = cfg.dtsa.max_depth;
  dc.tree.min_samples_split = cfg.dtsa.min_samples_split;
  dc.seed = derive_seed(cfg.seed, "dtsa");
  dc.start = start;
  const auto result = run_dtsa(x, y, dc);
  if (result.schema.size() == 0) throw DataError("feature selection removed every feature");

  write_json(run.out(files::kDtsaReport), result.report.to_json());
  write_json(run.out(files::kFeatureLists), result.lists.to_json());
  write_json(run.out(files::kSchema), result.schema.to_json());
  run.finish();
}

// ---- segment

struct SpmData {
  std::vector<std::string> addresses;
  std::vector<int> labels;
  std::vector<Matrix> sequences;  // log features over the selected schema
};

SpmData spm_data(const std::map<std::string, Matrix>& feats, const FeatureSchema& schema,
                 const std::vector<std::string>& addresses, const std::vector<int>& labels) {
  SpmData d;
  for (std::size_t i = 0; i < addresses.size(); ++i) {
    const auto it = feats.find(addresses[i]);
    if (it == feats.end()) throw DataError("no features for " + addresses[i]);
    d.addresses.push_back(addresses[i]);
    d.labels.push_back(labels[i]);
    d.sequences.push_back(signed_log1p(schema.project(it->second)));
  }
  return d;
}

void stage_segment(const PipelineConfig& cfg, const fs::path& out) {
  StageRun run(Stage::Segment, cfg, out);
  run.require({{files::kFeatures, Stage::Features},
               {files::kSchema, Stage::Select},
               {files::kTrainingLabels, Stage::Select}});
  const auto schema = load_schema(run.in(files::kSchema));
  const auto training = load_training(run.in(files::kTrainingLabels));
  const std::set<std::string> want(training.addresses.begin(), training.addresses.end());
  const auto data = spm_data(load_features(run.in(files::kFeatures), want, cfg.horizon_hours), schema,
                             training.addresses, training.labels);

  const auto profile = change_profile(data.sequences);
  const auto splits = split_points(profile, {cfg.segment.theta, cfg.segment.min_len, cfg.segment.max_segments});
  const auto segments = segments_from(splits);
  TreeConfig tc;
  tc.max_depth = cfg.dtsa.max_depth;
  tc.min_samples_split = cfg.dtsa.min_samples_split;
  tc.class_weights = inverse_frequency(data.labels);
  const auto importance = segment_importances(data.sequences, data.labels, segments, tc);

  const auto w = static_cast<Eigen::Index>(schema.size());
  Matrix pool(static_cast<Eigen::Index>(data.sequences.size() * segments.size()), w);
  Eigen::Index r = 0;
  for (const auto& seq : data.sequences)
    for (std::size_t s = 0; s < segments.size(); ++s)
      pool.row(r++) = segment_vector(seq.middleRows(segments[s].begin, segments[s].length()), importance[s]);

  double eps = cfg.segment.eps;
  if (!(eps > 0.0)) eps = suggest_eps(ZScore::fit(pool).apply_rows(pool), cfg.segment.min_pts);
  TreeConfig status_cfg;
  status_cfg.max_depth = cfg.segment.status_depth;
  status_cfg.min_samples_split = 2;
  auto clustered = cluster_statuses(pool, eps, cfg.segment.min_pts, status_cfg);
  clustered.catalog.splits = splits;
  clustered.catalog.segment_importance = importance;
  write_json(run.out(files::kCatalog), clustered.catalog.to_json());

  auto f = open_out(run.out(files::kSegments));
  f << "address,segment,begin,end,cluster,status\n";
  r = 0;
  for (std::size_t a = 0; a < data.addresses.size(); ++a)
    for (std::size_t s = 0; s < segments.size(); ++s, ++r)
      f << data.addresses[a] << ',' << s << ',' << segments[s].begin << ',' << segments[s].end << ','
        << clustered.labels[static_cast<std::size_t>(r)] << ',' << assign_status(pool.row(r), clustered.catalog).status
        << '\n';
  f.close();
  run.finish();
}

// ---- train

void stage_train(const PipelineConfig& cfg, const fs::path& out) {
  StageRun run(Stage::Train, cfg, out);
  run.require({{files::kFeatures, Stage::Features},
               {files::kSchema, Stage::Select},
               {files::kTrainingLabels, Stage::Select},
               {files::kCatalog, Stage::Segment}});
  const auto schema = load_schema(run.in(files::kSchema));
  const auto training = load_training(run.in(files::kTrainingLabels));
  const auto catalog = StatusCatalog::from_json(read_json(run.in(files::kCatalog)));
  const std::set<std::string> want(training.addresses.begin(), training.addresses.end());
  const auto data = spm_data(load_features(run.in(files::kFeatures), want, cfg.horizon_hours), schema,
                             training.addresses, training.labels);

  Matrix pool(static_cast<Eigen::Index>(data.sequences.size()) * cfg.horizon_hours, static_cast<Eigen::Index>(schema.size()));
  for (std::size_t i = 0; i < data.sequences.size(); ++i)
    pool.middleRows(static_cast<Eigen::Index>(i) * cfg.horizon_hours, cfg.horizon_hours) = data.sequences[i];
  const int d = model_width(static_cast<int>(schema.size()), cfg.model.heads);
  const auto tf = InputTransform::fit(pool, d);

  std::vector<SequenceInput> inputs;
  for (const auto& seq : data.sequences) inputs.push_back(make_input(seq, catalog, tf, cfg.horizon_hours));

  const auto cw = inverse_frequency(data.labels);
  TrainConfig tc;
  tc.lr = cfg.train.lr;
  tc.epochs = cfg.train.epochs;
  tc.batch_size = cfg.train.batch_size;
  tc.loss = {cfg.train.gamma1, cfg.train.gamma2, cw[1], cw[0]};
  tc.seed = derive_seed(cfg.seed, "train");
  HstParams init({d, cfg.model.heads, cfg.model.blocks, cfg.model.positional}, catalog.status_count(),
                 derive_seed(cfg.seed, "init"));
  const auto result = train(std::move(init), inputs, data.labels, tc);

  write_json(run.out(files::kCheckpoint),
             {{"model", result.params.to_json()}, {"transform", tf.to_json()}, {"schema_id", schema.id()}});
  auto f = open_out(run.out(files::kHistory));
  write_history_csv(f, result.history);
  f.close();
  run.finish();
}

// ---- predict

void stage_predict(const PipelineConfig& cfg, const fs::path& out) {
  StageRun run(Stage::Predict, cfg, out);
  run.require({{files::kAddresses, Stage::Ingest},
               {files::kFeatures, Stage::Features},
               {files::kSchema, Stage::Select},
               {files::kCatalog, Stage::Segment},
               {files::kCheckpoint, Stage::Train}});
  const auto rows = load_addresses(run.in(files::kAddresses));
  const auto schema = load_schema(run.in(files::kSchema));
  const auto catalog = StatusCatalog::from_json(read_json(run.in(files::kCatalog)));
  const auto ckpt = read_json(run.in(files::kCheckpoint));
  if (ckpt.at("schema_id").get<std::string>() != schema.id())
    throw StageError("checkpoint was trained on another schema; run train first");
  const auto params = HstParams::from_json(ckpt.at("model"));
  const auto tf = InputTransform::from_json(ckpt.at("transform"));

  std::set<std::string> want;
  for (const auto& r : rows)
    if (r.test || cfg.predict.all_addresses) want.insert(r.address);
  const auto feats = load_features(run.in(files::kFeatures), want, cfg.horizon_hours);

  auto f = open_out(run.out(files::kPredictions));
  auto s = open_out(run.out(files::kSummary));
  f << "address,hour,y_hat,survival\n";
  s << "address,label,t_die,t_fc,final_y_hat,statuses\n";
  for (const auto& r : rows) {
    if (!want.contains(r.address)) continue;
    const Matrix spm = signed_log1p(schema.project(feats.at(r.address)));
    const auto res = predict_stream(params, spm, catalog, tf, cfg.predict.s_min);
    for (std::size_t h = 0; h < res.y_hat.size(); ++h)
      f << r.address << ',' << h << ',' << format_double(res.y_hat[h]) << ',' << format_double(res.survival[h]) << '\n';
    s << r.address << ',' << to_string(r.label) << ',' << (res.t_die ? std::to_string(*res.t_die) : "") << ','
      << (res.t_fc ? std::to_string(*res.t_fc) : "") << ',' << format_double(res.y_hat.back()) << ','
      << join_ids(res.status) << '\n';
  }
  f.close();
  s.close();
  run.finish();
}

// ---- eval

void stage_eval(const PipelineConfig& cfg, const fs::path& out) {
  StageRun run(Stage::Eval, cfg, out);
  run.require({{files::kAddresses, Stage::Ingest},
               {files::kFeatures, Stage::Features},
               {files::kSchema, Stage::Select},
               {files::kCatalog, Stage::Segment},
               {files::kCheckpoint, Stage::Train},
               {files::kPredictions, Stage::Predict}});
  std::map<std::string, int> truth;
  for (const auto& r : load_addresses(run.in(files::kAddresses))) truth[r.address] = r.label == Label::Malicious;

  std::map<std::string, std::vector<double>> series;
  auto in = open_in(run.in(files::kPredictions));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (++n == 1 || line.empty()) continue;
    const auto parts = split_csv(line);
    if (parts.size() != 4) throw ParseError(n, "expected address,hour,y_hat,survival");
    auto& v = series[parts[0]];
    if (static_cast<long long>(v.size()) != parse_int(parts[1], n)) throw ParseError(n, "hours out of order");
    v.push_back(parse_double(parts[2], n));
  }
  if (series.empty()) throw DataError("no predictions to evaluate");

  Matrix scores(cfg.horizon_hours, static_cast<Eigen::Index>(series.size()));
  std::vector<int> y;
  Eigen::Index c = 0;
  for (const auto& [addr, v] : series) {
    if (static_cast<int>(v.size()) != cfg.horizon_hours) throw DataError("prediction stream of " + addr + " has the wrong length");
    if (!truth.contains(addr)) throw DataError("prediction for unknown address " + addr);
    scores.col(c++) = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    y.push_back(truth.at(addr));
  }
  const auto e = evaluate(scores, y);
  auto f = open_out(run.out(files::kMetrics));
  write_metrics_csv(f, e);
  f.close();
  run.finish();
}

// ---- report

void stage_report(const PipelineConfig& cfg, const fs::path& out) {
  StageRun run(Stage::Report, cfg, out);
  run.require({{files::kPredictions, Stage::Predict}, {files::kSummary, Stage::Predict}});
  const auto summary = load_summary(run.in(files::kSummary));

  std::map<std::string, std::vector<double>> streams;
  {
    auto in = open_in(run.in(files::kPredictions));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      if (++n == 1 || line.empty()) continue;
      const auto parts = split_csv(line);
      if (parts.size() != 4) throw ParseError(n, "expected address,hour,y_hat,survival");
      streams[parts[0]].push_back(parse_double(parts[2], n));
    }
  }

  std::vector<std::vector<int>> mal, reg;
  auto f = open_out(run.out(files::kReport));
  f << "addresses: " << summary.size() << '\n';
  for (const auto& s : summary) {
    (s.label == 1 ? mal : reg).push_back(s.statuses);
    f << '\n' << s.address << " label=" << (s.label == 1 ? "malicious" : "regular")
      << " t_die=" << (s.t_die ? std::to_string(*s.t_die) : "none") << " t_fc=" << (s.t_fc ? std::to_string(*s.t_fc) : "none")
      << " final=" << std::fixed << std::setprecision(3) << s.final_y_hat << '\n';
    f << "  intention: " << (s.statuses.empty() ? "-" : join_ids(s.statuses)) << '\n';
    f << "  y_hat:";
    for (const double v : streams[s.address]) f << ' ' << std::setprecision(2) << v;
    f << '\n';
  }
  f.close();

  auto g = open_out(run.out(files::kNgrams));
  g << "n,ngram,malicious,regular,diff\n";
  for (int n = 1; n <= 3; ++n)
    for (const auto& d : ngram_diffs(mal, reg, n))
      g << n << ',' << join_ids(d.gram) << ',' << format_double(d.malicious) << ',' << format_double(d.regular) << ','
        << format_double(d.diff) << '\n';
  g.close();
  run.finish();
}

}  // namespace

void run_stage(Stage stage, const PipelineConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  switch (stage) {
    case Stage::Synth: return stage_synth(cfg, out);
    case Stage::Ingest: return stage_ingest(cfg, out);
    case Stage::Paths: return stage_paths(cfg, out);
    case Stage::Features: return stage_features(cfg, out);
    case Stage::Select: return stage_select(cfg, out);
    case Stage::Segment: return stage_segment(cfg, out);
    case Stage::Train: return stage_train(cfg, out);
    case Stage::Predict: return stage_predict(cfg, out);
    case Stage::Eval: return stage_eval(cfg, out);
    case Stage::Report: return stage_report(cfg, out);
  }
}

void run_all(const PipelineConfig& cfg, const fs::path& out) {
  if (!fs::exists(out / files::kTransactions)) run_stage(Stage::Synth, cfg, out);
  for (const auto s : {Stage::Ingest, Stage::Paths, Stage::Features, Stage::Select, Stage::Segment, Stage::Train,
                       Stage::Predict, Stage::Eval, Stage::Report})
    run_stage(s, cfg, out);
}

// ---------------------------------------------------------------- readers

std::vector<AddressRow> load_addresses(const fs::path& path) {
  auto in = open_in(path);
  std::vector<AddressRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (++n == 1 || line.empty()) continue;
    const auto p = split_csv(line);
    if (p.size() != 4 || (p[2] != "train" && p[2] != "test")) throw ParseError(n, "expected address,label,split,first_seen");
    try {
      rows.push_back({p[0], parse_label(p[1]), p[2] == "test", parse_int(p[3], n)});
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(n, e.what());
    }
  }
  return rows;
}

std::map<std::string, Matrix> load_features(const fs::path& path, const std::set<std::string>& only, int horizon) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  const auto header = split_csv(line);
  const auto& cols = raw_columns();
  if (header.size() != cols.size() + 2 || header[0] != "address" || header[1] != "hour")
    throw DataError(path.string() + ": unexpected header");
  for (std::size_t c = 0; c < cols.size(); ++c)
    if (header[c + 2] != cols[c].name) throw DataError(path.string() + ": unexpected column " + header[c + 2]);

  std::map<std::string, Matrix> out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(n, "missing fields");
    const std::string addr = line.substr(0, comma);
    if (!only.empty() && !only.contains(addr)) continue;
    const auto p = split_csv(line);
    if (p.size() != cols.size() + 2) throw ParseError(n, "wrong field count");
    const auto hour = parse_int(p[1], n);
    if (hour < 0 || hour >= horizon) throw ParseError(n, "hour outside the horizon");
    auto [it, fresh] = out.try_emplace(addr);
    if (fresh) it->second = Matrix::Constant(horizon, static_cast<Eigen::Index>(cols.size()), std::nan(""));
    for (std::size_t c = 0; c < cols.size(); ++c)
      it->second(static_cast<Eigen::Index>(hour), static_cast<Eigen::Index>(c)) = parse_double(p[c + 2], n);
  }
  for (const auto& [addr, m] : out)
    if (!m.allFinite()) throw DataError("features of " + addr + " are incomplete or non-finite");
  for (const auto& a : only)
    if (!out.contains(a)) throw DataError("no features for " + a);
  return out;
}

std::vector<PredictionSummary> load_summary(const fs::path& path) {
  auto in = open_in(path);
  std::vector<PredictionSummary> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (++n == 1 || line.empty()) continue;
    const auto p = split_csv(line);
    if (p.size() != 6) throw ParseError(n, "expected address,label,t_die,t_fc,final_y_hat,statuses");
    PredictionSummary s;
    s.address = p[0];
    s.label = parse_label(p[1]) == Label::Malicious ? 1 : 0;
    if (!p[2].empty()) s.t_die = static_cast<int>(parse_int(p[2], n));
    if (!p[3].empty()) s.t_fc = static_cast<int>(parse_int(p[3], n));
    s.final_y_hat = parse_double(p[4], n);
    s.statuses = split_ids(p[5]);
    rows.push_back(std::move(s));
  }
  return rows;
}

}  // namespace emad
