#include "emad/hst.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "emad/json_eigen.hpp"

namespace emad {

namespace {

constexpr std::string_view kLevelNames[] = {"feature", "segment", "status"};

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double fan_in, Rng& rng) {
  const double a = 1.0 / std::sqrt(fan_in);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a * (2.0 * uniform01(rng) - 1.0);
  return m;
}

}  // namespace

std::string HstParams::head_name(Level level, int block, int head, char which) {
  return std::string(kLevelNames[static_cast<int>(level)]) + ".b" + std::to_string(block) + ".h" +
         std::to_string(head) + "." + which;
}

std::string HstParams::out_name(Level level, int block) {
  return std::string(kLevelNames[static_cast<int>(level)]) + ".b" + std::to_string(block) + ".O";
}

void HstParams::add(std::string name, Matrix m) {
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(m));
}

HstParams::HstParams(const ModelConfig& cfg, int status_count, std::uint64_t seed) : cfg_(cfg), status_count_(status_count) {
  if (cfg.d <= 0 || cfg.heads <= 0 || cfg.blocks <= 0) throw Error("model config: d, heads and blocks must be positive");
  if (cfg.d % cfg.heads != 0) throw Error("model config: d must be divisible by the head count");
  if (status_count < 1) throw Error("model config: need at least one status");
  const int d = cfg.d;
  const int dh = d / cfg.heads;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix emb(status_count + 1, d);
  for (Eigen::Index r = 0; r < emb.rows(); ++r)
    for (Eigen::Index c = 0; c < emb.cols(); ++c) emb(r, c) = 0.02 * normal(rng);
  add("embedding", std::move(emb));
  add("W_a", uniform_init(d, d, d, rng));
  add("w_r", uniform_init(1, d, d, rng));
  add("W_fu", uniform_init(d, 2 * d, 2 * d, rng));
  for (int level = 0; level < 3; ++level) {
    const auto lv = static_cast<Level>(level);
    for (int b = 0; b < cfg.blocks; ++b) {
      for (int h = 0; h < cfg.heads; ++h)
        for (const char w : {'Q', 'K', 'V'}) add(head_name(lv, b, h, w), uniform_init(d, dh, d, rng));
      add(out_name(lv, b), uniform_init(d, d, d, rng));
    }
  }
  add("W_fg", uniform_init(d, 2 * d, 2 * d, rng));
  add("W_g", uniform_init(d, d, d, rng));
  add("W_gu", uniform_init(d, 2 * d, 2 * d, rng));
  add("W_u", uniform_init(d, d, d, rng));
  add("W_l", uniform_init(d, 1, d, rng));
  add("W_hz", uniform_init(d, 1, d, rng));
}

std::size_t HstParams::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error("unknown parameter " + name);
  return static_cast<std::size_t>(it - names_.begin());
}

bool HstParams::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(), [](const Matrix& m) { return m.allFinite(); });
}

double HstParams::norm() const {
  double s = 0.0;
  for (const auto& m : tensors_) s += m.squaredNorm();
  return std::sqrt(s);
}

bool operator==(const HstParams& a, const HstParams& b) {
  if (!(a.cfg_ == b.cfg_) || a.status_count_ != b.status_count_ || a.names_ != b.names_) return false;
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    const auto& x = a.tensors_[i];
    const auto& y = b.tensors_[i];
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (!std::equal(x.data(), x.data() + x.size(), y.data())) return false;
  }
  return true;
}

nlohmann::json HstParams::to_json() const {
  nlohmann::json ts = nlohmann::json::array();
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    auto t = tensor_to_json(tensors_[i]);
    t["name"] = names_[i];
    ts.push_back(std::move(t));
  }
  return {{"config", {{"d", cfg_.d}, {"heads", cfg_.heads}, {"blocks", cfg_.blocks}, {"positional", cfg_.positional}}},
          {"status_count", status_count_},
          {"tensors", ts}};
}

HstParams HstParams::from_json(const nlohmann::json& j) {
  HstParams p;
  const auto& c = j.at("config");
  p.cfg_.d = c.at("d").get<int>();
  p.cfg_.heads = c.at("heads").get<int>();
  p.cfg_.blocks = c.at("blocks").get<int>();
  p.cfg_.positional = c.at("positional").get<bool>();
  p.status_count_ = j.at("status_count").get<int>();
  for (const auto& t : j.at("tensors")) p.add(t.at("name").get<std::string>(), tensor_from_json(t));
  const HstParams shape(p.cfg_, p.status_count_, 0);
  if (shape.names_ != p.names_) throw DataError("checkpoint: tensor list does not match the model config");
  for (std::size_t i = 0; i < p.size(); ++i)
    if (shape.tensors_[i].rows() != p.tensors_[i].rows() || shape.tensors_[i].cols() != p.tensors_[i].cols())
      throw DataError("checkpoint: wrong shape for " + p.names_[i]);
  if (!p.all_finite()) throw NumericError("checkpoint: non-finite parameter");
  return p;
}

SurvivalStep survival_step(double y, double hazard, double prev_survival, double prev_y_hat) {
  SurvivalStep s;
  s.survival = prev_survival * std::exp(-hazard);
  s.y_hat = s.survival * y + (1.0 - s.survival) * prev_y_hat;
  return s;
}

ParamVars bind(Tape& tape, const HstParams& params, bool track) {
  ParamVars p;
  p.params = &params;
  for (std::size_t i = 0; i < params.size(); ++i)
    p.vars.push_back(track ? tape.leaf(params.tensor(i)) : tape.constant(params.tensor(i)));
  return p;
}

Var embed_status(const ParamVars& p, int status) {
  if (status < 0 || status >= p.params->embedding_rows()) throw Error("embed_status: status id out of range");
  return rows(p["embedding"], status, 1);
}

std::pair<Var, Var> segment_attention(const ParamVars& p, Var steps, Var u) {
  const auto len = steps.tape->value(steps).rows();
  if (len == 0) throw Error("segment_attention: empty segment");
  const Var z = hcat(steps, repeat_rows(u, len));
  const Var a = matmul_t(matmul_t(tanh(matmul_t(z, p["W_fu"])), p["W_a"]), p["w_r"]);  // len x 1
  const Var alpha = softmax_rows(transpose(a));                                       // 1 x len
  return {matmul(alpha, steps), alpha};
}

Var multihead_self_attention(const ParamVars& p, HstParams::Level level, Var x) {
  const auto& cfg = p.params->config();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  for (int b = 0; b < cfg.blocks; ++b) {
    Var concat{};
    for (int h = 0; h < cfg.heads; ++h) {
      const Var q = matmul(x, p[HstParams::head_name(level, b, h, 'Q')]);
      const Var k = matmul(x, p[HstParams::head_name(level, b, h, 'K')]);
      const Var v = matmul(x, p[HstParams::head_name(level, b, h, 'V')]);
      const Var head = matmul(softmax_rows(scale(matmul_t(q, k), inv_sqrt_d)), v);
      concat = h == 0 ? head : hcat(concat, head);
    }
    x = matmul(concat, p[HstParams::out_name(level, b)]);
  }
  return x;
}

Var bridge(Var below, Var level_in, Var w_in, Var w_out) {
  return matmul_t(tanh(matmul_t(hcat(level_in, below), w_in)), w_out);
}

namespace {

Matrix positional_codes(Eigen::Index n, Eigen::Index d) {
  Matrix pe(n, d);
  for (Eigen::Index pos = 0; pos < n; ++pos)
    for (Eigen::Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe(pos, i) = i % 2 == 0 ? std::sin(static_cast<double>(pos) * rate) : std::cos(static_cast<double>(pos) * rate);
    }
  return pe;
}

}  // namespace

PrefixVars encode_prefix(const ParamVars& p, const std::vector<Var>& pooled, const std::vector<Var>& seg_vectors,
                         const std::vector<Var>& status_rows) {
  if (pooled.empty() || pooled.size() != seg_vectors.size() || pooled.size() != status_rows.size())
    throw Error("encode_prefix: misaligned inputs");
  using L = HstParams::Level;
  Tape& t = *pooled.front().tape;
  Var f = vcat(pooled);
  if (p.params->config().positional) f = add(f, t.constant(positional_codes(t.value(f).rows(), t.value(f).cols())));
  const Var f_hat = multihead_self_attention(p, L::Feature, f);
  const Var g_tilde = bridge(f_hat, vcat(seg_vectors), p["W_fg"], p["W_g"]);
  const Var g_hat = multihead_self_attention(p, L::Segment, g_tilde);
  const Var u_tilde = bridge(g_hat, vcat(status_rows), p["W_gu"], p["W_u"]);
  const Var u_out = multihead_self_attention(p, L::Status, u_tilde);
  const Var u_hat = mean_rows(u_out);
  return {sigmoid(matmul(u_hat, p["W_l"])), softplus(matmul(u_hat, p["W_hz"])), u_hat};
}

namespace {

struct Graph {
  std::vector<Var> pooled;
  std::vector<Var> seg_vectors;
  std::vector<Var> status_rows;
};

Graph build_segments(Tape& tape, const ParamVars& p, const SequenceInput& in, std::size_t count) {
  if (in.segments.size() < count || static_cast<std::size_t>(in.segment_vectors.rows()) < count ||
      in.status.size() < count)
    throw Error("model input: fewer segments than requested");
  const auto d = p.params->config().d;
  if (in.features.cols() != d || in.segment_vectors.cols() != d) throw Error("model input: width does not match the model");
  Graph g;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& seg = in.segments[i];
    if (seg.length() <= 0 || seg.end > in.features.rows()) throw Error("model input: segment outside the feature rows");
    const Var steps = tape.constant(in.features.middleRows(seg.begin, seg.length()));
    const Var u = embed_status(p, in.status[i]);
    g.pooled.push_back(segment_attention(p, steps, u).first);
    g.seg_vectors.push_back(tape.constant(in.segment_vectors.row(static_cast<Eigen::Index>(i))));
    g.status_rows.push_back(u);
  }
  return g;
}

template <typename T>
std::vector<T> prefix(const std::vector<T>& v, std::size_t n) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace

SplitOutput forward(const HstParams& params, const SequenceInput& input, int p) {
  if (p < 1) throw Error("forward: prefix length must be positive");
  Tape tape;
  const auto pv = bind(tape, params, false);
  const auto g = build_segments(tape, pv, input, static_cast<std::size_t>(p));
  const auto out = encode_prefix(pv, g.pooled, g.seg_vectors, g.status_rows);
  return {tape.value(out.y)(0, 0), tape.value(out.hazard)(0, 0), tape.value(out.u_hat)};
}

SurvivalTrace run_trace(const HstParams& params, const SequenceInput& input, double s_min) {
  Tape tape;
  const auto pv = bind(tape, params, false);
  const auto n = input.segments.size();
  const auto g = build_segments(tape, pv, input, n);
  SurvivalTrace tr;
  double s = 1.0, y_hat = kInitialPrediction;
  for (std::size_t p = 1; p <= n; ++p) {
    const auto out = encode_prefix(pv, prefix(g.pooled, p), prefix(g.seg_vectors, p), prefix(g.status_rows, p));
    const double y = tape.value(out.y)(0, 0);
    const double hz = tape.value(out.hazard)(0, 0);
    const auto step = survival_step(y, hz, s, y_hat);
    s = step.survival;
    y_hat = step.y_hat;
    tr.y.push_back(y);
    tr.hazard.push_back(hz);
    tr.survival.push_back(s);
    tr.y_hat.push_back(y_hat);
    if (!tr.t_die && s <= s_min) tr.t_die = static_cast<int>(p - 1);
  }
  return tr;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  prediction += o.prediction;
  consistency_soft += o.consistency_soft;
  consistency_hard += o.consistency_hard;
  earliness += o.earliness;
  total += o.total;
  return *this;
}

double consistency_hard(double prev_y_hat, double y_hat) {
  return (y_hat - 0.5) * (prev_y_hat - 0.5) < 0.0 ? 1.0 : 0.0;
}

double consistency_soft(double prev_y_hat, double y_hat) {
  return std::max(0.0, -(y_hat - 0.5) * (prev_y_hat - 0.5));
}

namespace {

double class_weight(int label, const LossWeights& w) { return label == 1 ? w.c_pos : w.c_neg; }

double prediction_loss(double y_hat, int label) {
  return label == 1 ? -std::log(std::max(y_hat, 1e-12)) : -std::log(std::max(1.0 - y_hat, 1e-12));
}

}  // namespace

LossBreakdown trace_losses(const SurvivalTrace& trace, int label, const LossWeights& w) {
  LossBreakdown b;
  const double c = class_weight(label, w);
  double prev = kInitialPrediction;
  for (std::size_t i = 0; i < trace.y_hat.size(); ++i) {
    const double wt = std::sqrt(static_cast<double>(i + 1)) * c;
    const double yh = trace.y_hat[i];
    b.prediction += wt * prediction_loss(yh, label);
    b.consistency_soft += wt * consistency_soft(prev, yh);
    b.consistency_hard += wt * consistency_hard(prev, yh);
    b.earliness += wt * -trace.survival[i];
    prev = yh;
  }
  // earliness is reported as -S; the total adds gamma2 * S.
  b.total = b.prediction + w.gamma1 * b.consistency_soft - w.gamma2 * b.earliness;
  return b;
}

LossBreakdown address_loss(const HstParams& params, const SequenceInput& input, int label, const LossWeights& w,
                           std::vector<Matrix>* grads) {
  if (label != 0 && label != 1) throw Error("address_loss: label must be 0 or 1");
  Tape tape;
  const auto pv = bind(tape, params, grads != nullptr);
  const auto n = input.segments.size();
  if (n == 0) throw Error("address_loss: no segments");
  const auto g = build_segments(tape, pv, input, n);
  const double c = class_weight(label, w);

  Matrix one(1, 1);
  one(0, 0) = 1.0;
  Var s = tape.constant(one);
  Var y_hat = tape.constant(Matrix::Constant(1, 1, kInitialPrediction));
  Var total = tape.constant(Matrix::Zero(1, 1));
  LossBreakdown b;
  for (std::size_t p = 1; p <= n; ++p) {
    const auto out = encode_prefix(pv, prefix(g.pooled, p), prefix(g.seg_vectors, p), prefix(g.status_rows, p));
    const Var s_next = hadamard(s, exp(scale(out.hazard, -1.0)));
    const Var y_next = add(hadamard(s_next, out.y), hadamard(affine(s_next, -1.0, 1.0), y_hat));
    const Var lp = scale(label == 1 ? log(y_next) : log(affine(y_next, -1.0, 1.0)), -1.0);
    const Var lc = relu(scale(hadamard(affine(y_next, 1.0, -0.5), affine(y_hat, 1.0, -0.5)), -1.0));
    const Var le = scale(s_next, -1.0);
    const double wt = std::sqrt(static_cast<double>(p)) * c;
    total = add(total, scale(add(add(lp, scale(lc, w.gamma1)), scale(s_next, w.gamma2)), wt));

    const double prev = tape.value(y_hat)(0, 0);
    const double cur = tape.value(y_next)(0, 0);
    b.prediction += wt * tape.value(lp)(0, 0);
    b.consistency_soft += wt * tape.value(lc)(0, 0);
    b.consistency_hard += wt * consistency_hard(prev, cur);
    b.earliness += wt * tape.value(le)(0, 0);
    s = s_next;
    y_hat = y_next;
  }
  b.total = tape.value(total)(0, 0);

  if (grads != nullptr) {
    if (grads->size() != params.size()) {
      grads->clear();
      for (std::size_t i = 0; i < params.size(); ++i) grads->push_back(Matrix::Zero(params.tensor(i).rows(), params.tensor(i).cols()));
    }
    tape.backward(total);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& gi = tape.grad(pv.vars[i]);
      if (gi.size() != 0) (*grads)[i] += gi;
    }
  }
  return b;
}

Adam::Adam(const HstParams& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(Matrix::Zero(params.tensor(i).rows(), params.tensor(i).cols()));
    v_.push_back(Matrix::Zero(params.tensor(i).rows(), params.tensor(i).cols()));
  }
}

void Adam::step(HstParams& params, const std::vector<Matrix>& grads) {
  if (grads.size() != params.size()) throw Error("Adam: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    params.tensor(i).array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

TrainResult train(HstParams init, const std::vector<SequenceInput>& data, const std::vector<int>& labels,
                  const TrainConfig& cfg) {
  if (data.size() != labels.size()) throw Error("train: label count mismatch");
  if (data.empty()) throw DataError("train: no training addresses");
  if (cfg.batch_size < 1) throw Error("train: batch size must be positive");
  TrainResult out{std::move(init), {}};
  Adam adam(out.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  Rng rng(derive_seed(cfg.seed, "train-order"));
  std::vector<std::size_t> order(data.size());
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Matrix> grads;
      LossBreakdown batch;
      for (std::size_t k = start; k < stop; ++k)
        batch += address_loss(out.params, data[order[k]], labels[order[k]], cfg.loss, &grads);
      const double n = static_cast<double>(stop - start);
      for (auto& g : grads) g /= n;
      batch.prediction /= n;
      batch.consistency_soft /= n;
      batch.consistency_hard /= n;
      batch.earliness /= n;
      batch.total /= n;
      if (!std::isfinite(batch.total)) {
        std::ostringstream msg;
        msg << "non-finite training loss in batch " << step << " (epoch " << epoch << "); parameter norm "
            << out.params.norm();
        throw NumericError(msg.str());
      }
      adam.step(out.params, grads);
      if (!out.params.all_finite())
        throw NumericError("non-finite parameter after batch " + std::to_string(step) + " (epoch " +
                           std::to_string(epoch) + ")");
      out.history.push_back({step, epoch, batch});
      ++step;
    }
  }
  return out;
}

void write_history_csv(std::ostream& out, const std::vector<TrainStep>& history) {
  out << "step,epoch,total,prediction,consistency_soft,consistency_hard,earliness\n";
  for (const auto& h : history)
    out << h.step << ',' << h.epoch << ',' << format_double(h.loss.total) << ',' << format_double(h.loss.prediction)
        << ',' << format_double(h.loss.consistency_soft) << ',' << format_double(h.loss.consistency_hard) << ','
        << format_double(h.loss.earliness) << '\n';
}

Matrix signed_log1p(const Matrix& x) {
  return x.unaryExpr([](double v) { return v < 0.0 ? -std::log1p(-v) : std::log1p(v); });
}

int model_width(int width, int heads) {
  if (heads <= 0) throw Error("model_width: heads must be positive");
  const int w = std::max(width, 1);
  return (w + heads - 1) / heads * heads;
}

InputTransform InputTransform::fit(const Matrix& pool, int d) {
  if (d < pool.cols()) throw Error("InputTransform: model width smaller than the schema");
  return {ZScore::fit(pool), d};
}

Matrix InputTransform::apply_rows(const Matrix& x) const {
  Matrix out = Matrix::Zero(x.rows(), d);
  out.leftCols(x.cols()) = norm.apply_rows(x);
  return out;
}

RowVector InputTransform::pad(const RowVector& v) const {
  RowVector out = RowVector::Zero(d);
  out.head(v.size()) = v;
  return out;
}

nlohmann::json InputTransform::to_json() const { return {{"normalization", norm.to_json()}, {"d", d}}; }

InputTransform InputTransform::from_json(const nlohmann::json& j) {
  return {ZScore::from_json(j.at("normalization")), j.at("d").get<int>()};
}

SequenceInput make_input(const Matrix& spm_features, const StatusCatalog& catalog, const InputTransform& tf,
                         int hours) {
  if (hours < 1 || hours > spm_features.rows()) throw Error("make_input: hour count outside the feature rows");
  const auto all = segments_from(catalog.splits);
  SequenceInput in;
  in.features = tf.apply_rows(spm_features.topRows(hours));
  std::vector<RowVector> vecs;
  for (std::size_t i = 0; i < all.size() && all[i].begin < hours; ++i) {
    Segment seg{all[i].begin, std::min(all[i].end, hours)};
    const RowVector g = segment_vector(spm_features.middleRows(seg.begin, seg.length()), catalog.segment_importance.at(i));
    in.status.push_back(assign_status(g, catalog).status);
    vecs.push_back(tf.pad(catalog.norm.apply(g)));
    in.segments.push_back(seg);
  }
  in.segment_vectors.resize(static_cast<Eigen::Index>(vecs.size()), tf.d);
  for (std::size_t i = 0; i < vecs.size(); ++i) in.segment_vectors.row(static_cast<Eigen::Index>(i)) = vecs[i];
  return in;
}

StreamResult predict_stream(const HstParams& params, const Matrix& spm_features, const StatusCatalog& catalog,
                            const InputTransform& tf, double s_min) {
  const int horizon = static_cast<int>(spm_features.rows());
  const auto full = segments_from(catalog.splits);
  StreamResult r;
  double s_prev = 1.0, y_prev = kInitialPrediction;
  double s_now = 1.0, y_now = kInitialPrediction;
  for (int t = 0; t < horizon; ++t) {
    if (!r.t_die) {
      const auto in = make_input(spm_features, catalog, tf, t + 1);
      const auto p = static_cast<int>(in.segments.size());
      const auto out = forward(params, in, p);
      const auto step = survival_step(out.y, out.hazard, s_prev, y_prev);
      s_now = step.survival;
      y_now = step.y_hat;
      r.status = in.status;
      if (full[static_cast<std::size_t>(p - 1)].end == t + 1) {
        s_prev = s_now;
        y_prev = y_now;
      }
      if (s_now <= s_min) r.t_die = t;
    }
    r.y_hat.push_back(y_now);
    r.survival.push_back(s_now);
  }
  if (horizon > 0) {
    const bool last = r.y_hat.back() >= 0.5;
    int t = horizon - 1;
    while (t > 0 && (r.y_hat[static_cast<std::size_t>(t - 1)] >= 0.5) == last) --t;
    r.t_fc = t;
  }
  return r;
}

}  // namespace emad
