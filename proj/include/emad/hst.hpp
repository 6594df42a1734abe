#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emad/spm.hpp"
#include "emad/tape.hpp"

namespace emad {

struct ModelConfig {
  int d = 8;
  int heads = 2;
  int blocks = 1;
  /// Adds sinusoidal position codes to the feature-level sequence.
  bool positional = false;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Learnable tensors, stored by name. Projection matrices act on row vectors
/// as x * W^T for the d x 2d / d x d maps and x * W for the per-head d x d/h maps.
class HstParams {
 public:
  enum class Level { Feature = 0, Segment = 1, Status = 2 };

  HstParams() = default;
  /// Uniform(+-1/sqrt(fan_in)) init; embedding rows N(0,1) * 0.02.
  HstParams(const ModelConfig& cfg, int status_count, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  int status_count() const noexcept { return status_count_; }
  /// Table rows; the last row is reserved for noise segments.
  int embedding_rows() const noexcept { return status_count_ + 1; }

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& tensor(std::size_t i) { return tensors_[i]; }
  const Matrix& tensor(std::size_t i) const { return tensors_[i]; }
  std::size_t index_of(const std::string& name) const;
  Matrix& operator[](const std::string& name) { return tensors_[index_of(name)]; }
  const Matrix& operator[](const std::string& name) const { return tensors_[index_of(name)]; }

  static std::string head_name(Level level, int block, int head, char which);
  static std::string out_name(Level level, int block);

  bool all_finite() const;
  double norm() const;

  nlohmann::json to_json() const;
  static HstParams from_json(const nlohmann::json& j);

  /// Same config, names and bit-identical values.
  friend bool operator==(const HstParams& a, const HstParams& b);

 private:
  void add(std::string name, Matrix m);

  ModelConfig cfg_;
  int status_count_ = 0;
  std::vector<std::string> names_;
  std::vector<Matrix> tensors_;
};

/// One address, already in model space.
struct SequenceInput {
  Matrix features;                // hours x d
  std::vector<Segment> segments;  // consecutive, starting at hour 0
  Matrix segment_vectors;         // segments x d
  std::vector<int> status;        // per segment, < embedding_rows()
};

struct SplitOutput {
  double y = 0.5;
  double hazard = 0.0;
  RowVector u_hat;
};

struct SurvivalTrace {
  std::vector<double> y;
  std::vector<double> hazard;
  std::vector<double> survival;
  std::vector<double> y_hat;
  std::optional<int> t_die;
};

inline constexpr double kInitialPrediction = 0.5;

/// Hazard and survival update for one split.
struct SurvivalStep {
  double survival = 1.0;
  double y_hat = kInitialPrediction;
};
SurvivalStep survival_step(double y, double hazard, double prev_survival, double prev_y_hat);

/// Per-split outputs on prefixes 1..P and the survival recursion over them.
SurvivalTrace run_trace(const HstParams& params, const SequenceInput& input, double s_min = 1e-3);
/// Model output using only the first `p` segments.
SplitOutput forward(const HstParams& params, const SequenceInput& input, int p);

// Graph-building pieces, exposed for testing.
struct ParamVars {
  std::vector<Var> vars;
  const HstParams* params = nullptr;
  Var operator[](const std::string& name) const { return vars[params->index_of(name)]; }
};
ParamVars bind(Tape& tape, const HstParams& params, bool track);
Var embed_status(const ParamVars& p, int status);
/// Attention-pooled segment feature (1 x d) and the weights (1 x len).
std::pair<Var, Var> segment_attention(const ParamVars& p, Var steps, Var u);
Var multihead_self_attention(const ParamVars& p, HstParams::Level level, Var x);
/// W^out tanh(W^in [level_in, below]) row-wise.
Var bridge(Var below, Var level_in, Var w_in, Var w_out);
/// Encoder output y and hazard for a prefix of pooled segment features.
struct PrefixVars {
  Var y;
  Var hazard;
  Var u_hat;
};
PrefixVars encode_prefix(const ParamVars& p, const std::vector<Var>& pooled, const std::vector<Var>& seg_vectors,
                         const std::vector<Var>& status_rows);

struct LossWeights {
  double gamma1 = 1.0;
  double gamma2 = 0.1;
  double c_pos = 1.0;
  double c_neg = 1.0;
};

struct LossBreakdown {
  double prediction = 0.0;
  double consistency_soft = 0.0;
  double consistency_hard = 0.0;
  double earliness = 0.0;  // sum of -S; the total adds gamma2 * S
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
};

/// Losses of a finished trace (no gradients).
LossBreakdown trace_losses(const SurvivalTrace& trace, int label, const LossWeights& w);

/// Loss of one address; when `grads` is given, adds d(total)/d(param) into it.
LossBreakdown address_loss(const HstParams& params, const SequenceInput& input, int label, const LossWeights& w,
                           std::vector<Matrix>* grads = nullptr);

struct TrainConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 30;
  int batch_size = 16;
  LossWeights loss;
  std::uint64_t seed = 0;
};

struct TrainStep {
  int step = 0;
  int epoch = 0;
  LossBreakdown loss;
};

class Adam {
 public:
  Adam(const HstParams& params, double lr, double beta1, double beta2, double eps);
  void step(HstParams& params, const std::vector<Matrix>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct TrainResult {
  HstParams params;
  std::vector<TrainStep> history;
};

/// Mini-batch Adam on the summed weighted loss. Throws NumericError on a
/// non-finite loss or parameter.
TrainResult train(HstParams init, const std::vector<SequenceInput>& data, const std::vector<int>& labels,
                  const TrainConfig& cfg);

void write_history_csv(std::ostream& out, const std::vector<TrainStep>& history);

/// Per-step consistency terms between consecutive combined predictions.
double consistency_hard(double prev_y_hat, double y_hat);
double consistency_soft(double prev_y_hat, double y_hat);

/// sign(x) * log1p(|x|), elementwise.
Matrix signed_log1p(const Matrix& x);

/// Maps SPM-space rows (log features over the selected schema) into model
/// space: per-column z-score, then zero columns up to width d.
struct InputTransform {
  ZScore norm;
  int d = 0;

  static InputTransform fit(const Matrix& pool, int d);
  Matrix apply_rows(const Matrix& x) const;
  RowVector pad(const RowVector& v) const;
  nlohmann::json to_json() const;
  static InputTransform from_json(const nlohmann::json& j);
};

/// Smallest multiple of `heads` that is at least `width`.
int model_width(int width, int heads);

/// Model input for hours [0, hours) of an address; the last segment may be
/// partial. `spm_features` is horizon x schema width.
SequenceInput make_input(const Matrix& spm_features, const StatusCatalog& catalog, const InputTransform& tf,
                         int hours);

struct StreamResult {
  std::vector<double> y_hat;     // per hour
  std::vector<double> survival;  // per hour
  std::vector<int> status;       // per segment reached
  std::optional<int> t_die;      // hour
  std::optional<int> t_fc;       // first hour after which decisions never change
};

/// Hour-by-hour replay. A split's survival entry is final once its boundary
/// passes; hours inside a split use the partial segment. After t_die the
/// committed prediction is held.
StreamResult predict_stream(const HstParams& params, const Matrix& spm_features, const StatusCatalog& catalog,
                            const InputTransform& tf, double s_min = 1e-3);

}  // namespace emad
