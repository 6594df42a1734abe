#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "emad/featureset.hpp"
#include "emad/synth.hpp"

namespace emad {

/// Bad configuration or command line (exit code 2 at the CLI).
class UsageError : public Error {
 public:
  using Error::Error;
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  int horizon_hours = kDefaultHorizonHours;
  int hour_interval = 1;
  PathConfig paths;
  SynthSpec synth;
  double test_fraction = 0.3;
  /// Ablation switch: drop every path feature before selection.
  bool address_only = false;

  struct Spy {
    double fraction = 0.15;
    int max_depth = 4;
    int min_samples_split = 20;
  } spy;

  struct Dtsa {
    double theta = 0.5;
    int sessions = 10;
    int max_rounds = 20;
    /// Hours sampled per training address: 0, stride, 2*stride, ...
    int sample_stride = 10;
    int max_depth = 8;
    int min_samples_split = 10;
  } dtsa;

  struct Segmenting {
    double theta = 0.3;
    int min_len = 2;
    int max_segments = 8;
    /// 0 picks eps from the k-distance elbow.
    double eps = 0.0;
    int min_pts = 5;
    int status_depth = 8;
  } segment;

  struct Model {
    int heads = 2;
    int blocks = 1;
    bool positional = true;
  } model;

  struct Training {
    double lr = 0.003;
    int epochs = 40;
    int batch_size = 16;
    double gamma1 = 1.0;
    double gamma2 = 0.3;
  } train;

  struct Predicting {
    double s_min = 1e-3;
    /// Predict every labeled address instead of the held-out split only.
    bool all_addresses = false;
  } predict;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& j);
  friend bool operator==(const PipelineConfig& a, const PipelineConfig& b) { return a.to_json() == b.to_json(); }
};

PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage { Synth, Ingest, Paths, Features, Select, Segment, Train, Predict, Eval, Report };

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view name);

namespace files {
inline constexpr const char* kTransactions = "transactions.jsonl";
inline constexpr const char* kLabels = "labels.csv";
inline constexpr const char* kEvents = "events.csv";
inline constexpr const char* kAddresses = "addresses.csv";
inline constexpr const char* kPaths = "paths.csv";
inline constexpr const char* kFeatures = "features.csv";
inline constexpr const char* kRawSchema = "features_schema.json";
inline constexpr const char* kTrainingLabels = "training_labels.csv";
inline constexpr const char* kSpy = "spy.json";
inline constexpr const char* kDtsaReport = "dtsa_report.json";
inline constexpr const char* kFeatureLists = "feature_lists.json";
inline constexpr const char* kSchema = "schema.json";
inline constexpr const char* kCatalog = "catalog.json";
inline constexpr const char* kSegments = "segments.csv";
inline constexpr const char* kCheckpoint = "checkpoint.json";
inline constexpr const char* kHistory = "history.csv";
inline constexpr const char* kPredictions = "predictions.csv";
inline constexpr const char* kSummary = "prediction_summary.csv";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kReport = "report.txt";
inline constexpr const char* kNgrams = "ngrams.csv";
}  // namespace files

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Runs one stage in `out`. Throws StageError naming the stage to run first
/// when an input artifact is missing.
void run_stage(Stage stage, const PipelineConfig& cfg, const std::filesystem::path& out);
/// ingest through report; synthesizes data first when no transaction file exists.
void run_all(const PipelineConfig& cfg, const std::filesystem::path& out);

// Artifact readers shared by the stages and the acceptance checks.
struct AddressRow {
  std::string address;
  Label label = Label::Regular;
  bool test = false;
  Timestamp first_seen = 0;
};
std::vector<AddressRow> load_addresses(const std::filesystem::path& path);

/// Reads the wide feature CSV. `only` limits addresses (empty: all); each
/// matrix is horizon x raw width.
std::map<std::string, Matrix> load_features(const std::filesystem::path& path, const std::set<std::string>& only,
                                            int horizon);

struct PredictionSummary {
  std::string address;
  int label = 0;
  std::optional<int> t_die;
  std::optional<int> t_fc;
  double final_y_hat = 0.5;
  std::vector<int> statuses;
};
std::vector<PredictionSummary> load_summary(const std::filesystem::path& path);

}  // namespace emad
