#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatternet/error.hpp"
#include "chatternet/layers.hpp"
#include "chatternet/params.hpp"
#include "chatternet/stream.hpp"
#include "chatternet/text.hpp"

namespace chatternet {

/// Ablation variants. static_kernels replaces time-evolving convolution by
/// its static kernels; lstm_cc predicts from observed comment counts alone.
enum class Variant { full, news_only, submission_only, static_kernels, lstm_cc };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::news_only: return "news_only";
    case Variant::submission_only: return "submission_only";
    case Variant::static_kernels: return "static";
    case Variant::lstm_cc: return "lstm_cc";
  }
  return "?";
}

inline Variant parse_variant(const std::string& name) {
  for (auto v : {Variant::full, Variant::news_only, Variant::submission_only,
                 Variant::static_kernels, Variant::lstm_cc}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant `" + name +
                    "` (expected full, news_only, submission_only, static or lstm_cc)");
}

struct ModelConfig {
  int vocab_size = 4;
  int word_dim = 100;
  int subreddit_count = 43;
  int subreddit_dim = 32;
  std::vector<int> branch_kernels{1, 3, 5};
  std::vector<int> branch_filters{128, 64, 32};
  std::vector<int> tec_tail_filters{64, 32, 1};
  int gru_hidden = 128;
  int lstm_hidden = 8;
  double leaky_alpha = 0.2;
  int m = 0;
  Variant variant = Variant::full;
  int submission_len = 50;
  int news_len = 100;

  int feature_dim() const {
    return static_cast<int>(branch_kernels.size()) * branch_filters.back();
  }
  int submission_feature_dim() const { return feature_dim() + subreddit_dim; }
  int influence_dim() const { return 2 * gru_hidden; }

  bool uses_news() const { return variant == Variant::full || variant == Variant::news_only; }
  bool uses_submissions() const {
    return variant == Variant::full || variant == Variant::submission_only;
  }
  bool uses_influence() const { return uses_news() || uses_submissions(); }
  bool uses_base() const { return variant != Variant::lstm_cc; }

  void validate() const {
    auto positive = [](int v, const char* what) {
      if (v <= 0) throw ConfigError(std::string(what) + " must be positive");
    };
    positive(vocab_size, "vocab_size");
    positive(word_dim, "word_dim");
    positive(subreddit_count, "subreddit_count");
    positive(subreddit_dim, "subreddit_dim");
    positive(gru_hidden, "gru_hidden");
    positive(lstm_hidden, "lstm_hidden");
    if (vocab_size < 4) throw ConfigError("vocab_size must include the four special tokens");
    if (branch_kernels.empty() || branch_filters.empty() || tec_tail_filters.empty()) {
      throw ConfigError("convolution topology must be nonempty");
    }
    for (int k : branch_kernels) {
      if (k <= 0 || k % 2 == 0) throw ConfigError("branch kernel sizes must be odd and positive");
    }
    for (int f : branch_filters) positive(f, "branch filter count");
    for (int f : tec_tail_filters) positive(f, "tail filter count");
    if (tec_tail_filters.back() != 1) throw ConfigError("the last tail convolution must have one filter");
    if (!(leaky_alpha >= 0.0)) throw ConfigError("leaky_alpha must be nonnegative");
    if (m < 0) throw ConfigError("m must be nonnegative");
    if (variant == Variant::lstm_cc && m == 0) {
      throw ConfigError("variant lstm_cc needs m >= 1: zero-shot is not supported");
    }
    const int min_len = 1 << branch_filters.size();
    if (submission_len < min_len || news_len < min_len) {
      throw ConfigError("text lengths must be at least " + std::to_string(min_len) +
                        " to survive the pooling stages");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},
                     {"word_dim", c.word_dim},
                     {"subreddit_count", c.subreddit_count},
                     {"subreddit_dim", c.subreddit_dim},
                     {"branch_kernels", c.branch_kernels},
                     {"branch_filters", c.branch_filters},
                     {"tec_tail_filters", c.tec_tail_filters},
                     {"gru_hidden", c.gru_hidden},
                     {"lstm_hidden", c.lstm_hidden},
                     {"leaky_alpha", c.leaky_alpha},
                     {"m", c.m},
                     {"variant", to_string(c.variant)},
                     {"submission_len", c.submission_len},
                     {"news_len", c.news_len}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.word_dim = j.value("word_dim", c.word_dim);
  c.subreddit_count = j.value("subreddit_count", c.subreddit_count);
  c.subreddit_dim = j.value("subreddit_dim", c.subreddit_dim);
  c.branch_kernels = j.value("branch_kernels", c.branch_kernels);
  c.branch_filters = j.value("branch_filters", c.branch_filters);
  c.tec_tail_filters = j.value("tec_tail_filters", c.tec_tail_filters);
  c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
  c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
  c.leaky_alpha = j.value("leaky_alpha", c.leaky_alpha);
  c.m = j.value("m", c.m);
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  c.submission_len = j.value("submission_len", c.submission_len);
  c.news_len = j.value("news_len", c.news_len);
}

enum class TextRole { news, submission };

/// Carried influence: G = [G^n ; G^s] plus the two GRU hiddens.
struct InfluenceState {
  Vector g;
  Vector h_news;
  Vector h_sub;
  std::int64_t interval = 0;

  static InfluenceState zeros(const ModelConfig& c) {
    return {Vector::Zero(c.influence_dim()), Vector::Zero(c.gru_hidden),
            Vector::Zero(c.gru_hidden), 0};
  }
};

/// Texts that arrived within one influence interval, in timestamp order.
struct IntervalItems {
  std::vector<std::span<const TokenId>> news;
  std::vector<std::span<const TokenId>> submissions;
  std::vector<int> submission_subreddits;
};

struct SubmissionInput {
  std::span<const TokenId> tokens;
  int subreddit = 0;
  double rate = 0.0;  // ln(1 + subreddit comments in the previous interval)
  ObservationBins bins;
};

struct Prediction {
  double b_tilde = 0.0;  // potential chatter intensity
  double r = 0.5;        // activity scaling factor
  double base = 0.0;     // B = r * b_tilde
  double y_hat = 0.0;
  bool has_base = true;  // false for lstm_cc, which skips the base path
};

class ChatterNet {
 public:
  struct ConvLayer {
    int kernel = 1;
    Index in_channels = 0;
    Index out_channels = 0;
    ParamId weight = 0;  // (kernel * in_channels) x out_channels
    ParamId bias = 0;    // 1 x out_channels
  };

  struct ConvBlock {
    std::vector<std::vector<ConvLayer>> branches;
    std::vector<ConvLayer> tail;  // kernel-1 convolutions, TEC block only
  };

  struct GainProjection {
    ParamId from_influence = 0;  // F x influence_dim
    ParamId from_subreddit = 0;  // F x subreddit_dim
    ParamId bias = 0;            // F x 1
  };

  struct ConvLayerTape {
    Matrix cols;
    Matrix weight;         // effective kernel used in the forward pass
    Matrix static_weight;  // only kept for calibrated layers
    Vector gain;
    Matrix pre;
    nn::PoolTape pool;
  };

  struct ConvBlockTape {
    std::vector<TokenId> ids;
    std::vector<std::vector<ConvLayerTape>> branches;
    Matrix concat;
    std::vector<Index> argmax;  // static block: per-channel global max
    std::vector<ConvLayerTape> tail;
    double tail_max = 0.0;  // TEC block: max of the last one-filter map
    Index tail_argmax = 0;
  };

  struct SubmissionTape {
    ConvBlockTape block;
    int subreddit = 0;
    Vector influence;  // after variant masking
    Vector subreddit_vector;
    std::vector<Vector> gain_pre;
    std::vector<Vector> gains;
    double rate = 0.0;
    Prediction prediction;
    std::vector<nn::LstmStepTape> lstm;
    Vector lstm_out;
    double head_pre = 0.0;
  };

  struct AggregationTape {
    std::vector<ConvBlockTape> news_blocks;
    std::vector<Vector> news_features;
    std::vector<nn::GruStepTape> news_steps;
    std::vector<ConvBlockTape> sub_blocks;
    std::vector<int> sub_subreddits;
    std::vector<nn::GruStepTape> sub_steps;
  };

  explicit ChatterNet(ModelConfig config, std::uint64_t seed = 1) : cfg_(std::move(config)) {
    cfg_.validate();
    build();
    initialize(seed);
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// Range and finiteness assertions on every forward pass (test mode).
  void set_checked(bool on) { checked_ = on; }

  void set_word_embeddings(const Matrix& embeddings) {
    Matrix& e = params_[word_embedding_];
    if (embeddings.rows() != e.rows() || embeddings.cols() != e.cols()) {
      throw ConfigError("pretrained embedding shape does not match the model");
    }
    e = embeddings;
    e.row(Vocabulary::kPad).setZero();
  }

  /// Xavier-uniform weights, zero biases, zero PAD row.
  void initialize(std::uint64_t seed) {
    CounterRng rng(seed, 0x1a17);
    auto conv_init = [&](const ConvLayer& l) {
      params_.xavier(l.weight, static_cast<double>(l.kernel * l.in_channels),
                     static_cast<double>(l.kernel * l.out_channels), rng);
      params_[l.bias].setZero();
    };
    for (const auto& branch : static_block_.branches) {
      for (const auto& l : branch) conv_init(l);
    }
    for (const auto& branch : tec_block_.branches) {
      for (const auto& l : branch) conv_init(l);
    }
    for (const auto& l : tec_block_.tail) conv_init(l);
    for (const auto& g : gains_) {
      const auto f = static_cast<double>(params_[g.bias].rows());
      params_.xavier(g.from_influence, cfg_.influence_dim(), f, rng);
      params_.xavier(g.from_subreddit, cfg_.subreddit_dim, f, rng);
      params_[g.bias].setZero();
    }
    params_.xavier(word_embedding_, cfg_.vocab_size, cfg_.word_dim, rng);
    params_[word_embedding_].row(Vocabulary::kPad).setZero();
    params_.xavier(subreddit_embedding_, cfg_.subreddit_count, cfg_.subreddit_dim, rng);
    for (const auto* gru : {&gru_news_, &gru_sub_}) {
      const auto in = static_cast<double>(params_[gru->w].cols());
      const auto h3 = static_cast<double>(params_[gru->w].rows());
      params_.xavier(gru->w, in, h3, rng);
      params_.xavier(gru->u, cfg_.gru_hidden, h3, rng);
      params_[gru->b].setZero();
    }
    params_.xavier(lstm_.w, 1, 4.0 * cfg_.lstm_hidden, rng);
    params_.xavier(lstm_.u, cfg_.lstm_hidden, 4.0 * cfg_.lstm_hidden, rng);
    params_[lstm_.b].setZero();
    params_.xavier(activity_w_, 1, 1, rng);
    params_[activity_b_].setZero();
    params_.xavier(head_w_, cfg_.lstm_hidden + 1, 1, rng);
    // The head starts as the zero-shot prediction plus an LSTM correction;
    // a negative draw here would leave ReLU(w_B * B) dead for every input.
    if (cfg_.uses_base()) params_[head_w_](0, cfg_.lstm_hidden) = 1.0;
    params_[head_b_].setZero();
  }

  // --- parameter handles (tests and gradient checks) ------------------------
  ParamId word_embedding_id() const { return word_embedding_; }
  ParamId subreddit_embedding_id() const { return subreddit_embedding_; }
  const ConvBlock& static_block() const { return static_block_; }
  const ConvBlock& tec_block() const { return tec_block_; }
  const std::vector<GainProjection>& gain_projections() const { return gains_; }
  ParamId activity_weight_id() const { return activity_w_; }
  ParamId activity_bias_id() const { return activity_b_; }
  ParamId head_weight_id() const { return head_w_; }
  ParamId head_bias_id() const { return head_b_; }
  const nn::GruIds& news_gru() const { return gru_news_; }
  const nn::GruIds& submission_gru() const { return gru_sub_; }
  const nn::LstmIds& observation_lstm() const { return lstm_; }

  /// TEC conv layers in calibration order: branches (stage-major within a
  /// branch), then the tail.
  std::vector<const ConvLayer*> tec_layers() const {
    std::vector<const ConvLayer*> out;
    for (const auto& branch : tec_block_.branches) {
      for (const auto& l : branch) out.push_back(&l);
    }
    for (const auto& l : tec_block_.tail) out.push_back(&l);
    return out;
  }

  // --- component operations -------------------------------------------------

  Matrix embed(std::span<const TokenId> ids) const {
    const Matrix& e = params_[word_embedding_];
    Matrix x(static_cast<Index>(ids.size()), e.cols());
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const auto id = ids[p];
      if (id < 0 || id >= e.rows()) throw DataError("token id out of vocabulary range");
      x.row(static_cast<Index>(p)) = e.row(id);
    }
    return x;
  }

  void check_length(std::span<const TokenId> ids, TextRole role) const {
    const auto expected = static_cast<std::size_t>(role == TextRole::news ? cfg_.news_len
                                                                          : cfg_.submission_len);
    if (ids.size() != expected) {
      throw DataError("text length " + std::to_string(ids.size()) + " does not match configured " +
                      std::to_string(expected));
    }
  }

  /// Static convolution block: branch-wise conv/ReLU/maxpool stages,
  /// channel concatenation and a global max over positions.
  Vector static_features(std::span<const TokenId> ids, TextRole role,
                         ConvBlockTape* tape = nullptr) const {
    check_length(ids, role);
    ConvBlockTape local;
    ConvBlockTape& t = tape != nullptr ? *tape : local;
    t.ids.assign(ids.begin(), ids.end());
    t.concat = run_branches(static_block_, embed(ids), nullptr, t);
    return nn::global_max(t.concat, t.argmax);
  }

  /// f_sv = [f_s ; U_j].
  Vector submission_feature(const Vector& fs, int subreddit) const {
    Vector out(fs.size() + cfg_.subreddit_dim);
    out << fs, subreddit_vector(subreddit);
    return out;
  }

  Vector subreddit_vector(int subreddit) const {
    if (subreddit < 0 || subreddit >= cfg_.subreddit_count) {
      throw DataError("subreddit index out of range");
    }
    return params_[subreddit_embedding_].row(subreddit).transpose();
  }

  /// Influence aggregation over one interval: each GRU consumes its stream
  /// from the carried hidden; an empty stream leaves its hidden unchanged.
  /// Halves unused by the variant stay zero and are not computed.
  InfluenceState aggregate(const IntervalItems& items, const InfluenceState& prior,
                           AggregationTape* tape = nullptr) const {
    if (items.submissions.size() != items.submission_subreddits.size()) {
      throw DataError("submission/subreddit list length mismatch");
    }
    InfluenceState next = prior;
    next.interval = prior.interval + 1;
    if (cfg_.uses_news()) {
      for (auto ids : items.news) {
        ConvBlockTape block;
        Vector f = static_features(ids, TextRole::news, tape != nullptr ? &block : nullptr);
        nn::GruStepTape step;
        next.h_news = nn::gru_step(params_, gru_news_, f, next.h_news,
                                   tape != nullptr ? &step : nullptr);
        if (tape != nullptr) {
          tape->news_blocks.push_back(std::move(block));
          tape->news_steps.push_back(std::move(step));
        }
      }
    }
    if (cfg_.uses_submissions()) {
      for (std::size_t i = 0; i < items.submissions.size(); ++i) {
        ConvBlockTape block;
        const Vector fs = static_features(items.submissions[i], TextRole::submission,
                                          tape != nullptr ? &block : nullptr);
        const Vector fsv = submission_feature(fs, items.submission_subreddits[i]);
        nn::GruStepTape step;
        next.h_sub = nn::gru_step(params_, gru_sub_, fsv, next.h_sub,
                                  tape != nullptr ? &step : nullptr);
        if (tape != nullptr) {
          tape->sub_blocks.push_back(std::move(block));
          tape->sub_subreddits.push_back(items.submission_subreddits[i]);
          tape->sub_steps.push_back(std::move(step));
        }
      }
    }
    next.g.resize(cfg_.influence_dim());
    next.g << next.h_news, next.h_sub;
    if (checked_ && !next.g.allFinite()) throw NumericalError("non-finite influence state");
    return next;
  }

  /// G with the half unused by the variant zeroed.
  Vector mask_influence(const Vector& g) const {
    if (g.size() != cfg_.influence_dim()) throw DataError("influence vector has wrong size");
    Vector out = g;
    const Index h = cfg_.gru_hidden;
    if (!cfg_.uses_news()) out.head(h).setZero();
    if (!cfg_.uses_submissions()) out.tail(h).setZero();
    return out;
  }

  /// Calibration gain of one TEC layer: LeakyReLU(W_G G + W_V U + q).
  Vector gain(std::size_t layer, const Vector& g, const Vector& u, Vector* pre_out = nullptr) const {
    const auto& proj = gains_.at(layer);
    Vector pre = params_[proj.from_influence] * g + params_[proj.from_subreddit] * u +
                 params_[proj.bias].col(0);
    Vector out = pre.unaryExpr([a = cfg_.leaky_alpha](double v) { return nn::leaky_relu(v, a); });
    if (pre_out != nullptr) *pre_out = std::move(pre);
    return out;
  }

  /// W_TEC = W_S with output filter f scaled by gain_f.
  Matrix tec_kernel(std::size_t layer, const Vector& g, const Vector& u) const {
    const Vector gn = gain(layer, g, u);
    return params_[tec_layers().at(layer)->weight] * gn.asDiagonal();
  }

  /// Potential chatter intensity from the time-evolving block. With
  /// calibrate = false the static kernels W_S are used directly.
  double tec_potential(std::span<const TokenId> ids, const Vector& g, const Vector& u,
                       bool calibrate = true, SubmissionTape* tape = nullptr) const {
    check_length(ids, TextRole::submission);
    SubmissionTape local;
    SubmissionTape& t = tape != nullptr ? *tape : local;
    t.gains.clear();
    t.gain_pre.clear();
    if (calibrate) {
      const std::size_t layers = gains_.size();
      t.gains.resize(layers);
      t.gain_pre.resize(layers);
      for (std::size_t l = 0; l < layers; ++l) t.gains[l] = gain(l, g, u, &t.gain_pre[l]);
    }
    const std::vector<Vector>* gains = calibrate ? &t.gains : nullptr;
    t.block.ids.assign(ids.begin(), ids.end());
    t.block.concat = run_branches(tec_block_, embed(ids), gains, t.block);
    Matrix h = t.block.concat;
    const std::size_t offset = tec_block_.branches.size() * tec_block_.branches.front().size();
    t.block.tail.resize(tec_block_.tail.size());
    for (std::size_t i = 0; i < tec_block_.tail.size(); ++i) {
      const bool last = i + 1 == tec_block_.tail.size();
      h = conv_forward(tec_block_.tail[i], h, gains != nullptr ? &(*gains)[offset + i] : nullptr,
                       !last, false, t.block.tail[i]);
    }
    t.block.tail_max = h.col(0).maxCoeff(&t.block.tail_argmax);
    return std::max(0.0, t.block.tail_max);
  }

  double activity_scale(double rate) const {
    return nn::sigmoid(params_[activity_w_](0, 0) * rate + params_[activity_b_](0, 0));
  }

  static double base_intensity(double b_tilde, double r) { return r * b_tilde; }

  /// Zero-shot (m = 0) returns B untouched; otherwise log1p bin counts run
  /// through the LSTM and [h_m ; B] feeds a linear + ReLU head.
  double observe_and_predict(double base, const ObservationBins& bins,
                             SubmissionTape* tape = nullptr) const {
    if (bins.m() != static_cast<std::size_t>(cfg_.m)) {
      throw DataError("observation bins have length " + std::to_string(bins.m()) + ", expected " +
                      std::to_string(cfg_.m));
    }
    if (cfg_.m == 0) return base;
    Vector h = Vector::Zero(cfg_.lstm_hidden);
    Vector c = Vector::Zero(cfg_.lstm_hidden);
    if (tape != nullptr) tape->lstm.resize(bins.m());
    for (std::size_t l = 0; l < bins.m(); ++l) {
      Vector x(1);
      x(0) = std::log1p(static_cast<double>(bins.counts[l]));
      auto [hn, cn] = nn::lstm_step(params_, lstm_, x, h, c, tape != nullptr ? &tape->lstm[l] : nullptr);
      h = std::move(hn);
      c = std::move(cn);
    }
    const Matrix& w = params_[head_w_];
    double pre = w.leftCols(cfg_.lstm_hidden).row(0).dot(h) + params_[head_b_](0, 0);
    if (cfg_.uses_base()) pre += w(0, cfg_.lstm_hidden) * base;
    if (tape != nullptr) {
      tape->lstm_out = h;
      tape->head_pre = pre;
    }
    return std::max(0.0, pre);
  }

  /// Full per-submission prediction under influence g from the previous
  /// interval.
  Prediction forward(const SubmissionInput& in, const Vector& g, SubmissionTape* tape = nullptr) const {
    SubmissionTape local;
    SubmissionTape& t = tape != nullptr ? *tape : local;
    Prediction p;
    t.subreddit = in.subreddit;
    t.rate = in.rate;
    if (cfg_.uses_base()) {
      t.influence = mask_influence(g);
      t.subreddit_vector = subreddit_vector(in.subreddit);
      p.b_tilde = tec_potential(in.tokens, t.influence, t.subreddit_vector,
                                cfg_.variant != Variant::static_kernels, &t);
      p.r = activity_scale(in.rate);
      p.base = base_intensity(p.b_tilde, p.r);
    } else {
      p.has_base = false;
      p.r = activity_scale(in.rate);
    }
    p.y_hat = observe_and_predict(p.base, in.bins, &t);
    t.prediction = p;
    if (checked_) check_prediction(p);
    return p;
  }

  /// Backpropagates dL/dy_hat through one submission; returns dL/dG (zero in
  /// the halves the variant masks).
  Vector backward(const SubmissionTape& t, double dy, Gradients& grads) const {
    Vector dg = Vector::Zero(cfg_.influence_dim());
    double dbase = dy;
    if (cfg_.m > 0) {
      const double dpre = t.head_pre > 0.0 ? dy : 0.0;
      const Index H = cfg_.lstm_hidden;
      Matrix& dw = grads[head_w_];
      dw.leftCols(H).row(0) += dpre * t.lstm_out.transpose();
      grads[head_b_](0, 0) += dpre;
      const Matrix& w = params_[head_w_];
      dbase = 0.0;
      if (cfg_.uses_base()) {
        dw(0, H) += dpre * t.prediction.base;
        dbase = dpre * w(0, H);
      }
      Vector dh = dpre * w.leftCols(H).row(0).transpose();
      Vector dc = Vector::Zero(H);
      for (std::size_t l = t.lstm.size(); l-- > 0;) {
        auto [dhp, dcp] = nn::lstm_step_backward(params_, lstm_, t.lstm[l], dh, dc, grads);
        dh = std::move(dhp);
        dc = std::move(dcp);
      }
    }
    if (!cfg_.uses_base()) return dg;

    const Prediction& p = t.prediction;
    const double dr = dbase * p.b_tilde;
    const double dact = dr * p.r * (1.0 - p.r);
    grads[activity_w_](0, 0) += dact * t.rate;
    grads[activity_b_](0, 0) += dact;

    const double db_tilde = dbase * p.r;
    const double dz = t.block.tail_max > 0.0 ? db_tilde : 0.0;
    const bool calibrated = !t.gains.empty();
    std::vector<Vector> dgains;
    if (calibrated) {
      dgains.resize(t.gains.size());
      for (std::size_t l = 0; l < t.gains.size(); ++l) dgains[l] = Vector::Zero(t.gains[l].size());
    }
    const std::size_t offset = tec_block_.branches.size() * tec_block_.branches.front().size();
    Matrix dh = Matrix::Zero(t.block.tail.back().pre.rows(), 1);
    dh(t.block.tail_argmax, 0) = dz;
    for (std::size_t i = tec_block_.tail.size(); i-- > 0;) {
      const bool last = i + 1 == tec_block_.tail.size();
      dh = conv_backward(tec_block_.tail[i], t.block.tail[i], dh, !last,
                         calibrated ? &dgains[offset + i] : nullptr, grads);
    }
    const Matrix dx = branches_backward(tec_block_, t.block, dh, calibrated ? &dgains : nullptr, grads);
    accumulate_embedding(t.block.ids, dx, grads);

    Vector du = Vector::Zero(cfg_.subreddit_dim);
    if (calibrated) {
      for (std::size_t l = 0; l < gains_.size(); ++l) {
        const Vector dpre = dgains[l].cwiseProduct(t.gain_pre[l].unaryExpr(
            [a = cfg_.leaky_alpha](double v) { return v >= 0.0 ? 1.0 : a; }));
        grads[gains_[l].from_influence].noalias() += dpre * t.influence.transpose();
        grads[gains_[l].from_subreddit].noalias() += dpre * t.subreddit_vector.transpose();
        grads[gains_[l].bias].col(0) += dpre;
        dg.noalias() += params_[gains_[l].from_influence].transpose() * dpre;
        du.noalias() += params_[gains_[l].from_subreddit].transpose() * dpre;
      }
    }
    grads[subreddit_embedding_].row(t.subreddit) += du.transpose();
    return mask_influence(dg);
  }

  /// Backpropagates dL/dG through the interval that produced G. The carried
  /// hidden entering the interval is a constant (truncation at interval
  /// boundaries).
  void backward(const AggregationTape& t, const Vector& dg, Gradients& grads) const {
    const Index H = cfg_.gru_hidden;
    if (!t.news_steps.empty()) {
      Vector dh = dg.head(H);
      for (std::size_t i = t.news_steps.size(); i-- > 0;) {
        auto [dx, dhp] = nn::gru_step_backward(params_, gru_news_, t.news_steps[i], dh, grads);
        dh = std::move(dhp);
        static_backward(t.news_blocks[i], dx, grads);
      }
    }
    if (!t.sub_steps.empty()) {
      Vector dh = dg.tail(H);
      const Index fdim = cfg_.feature_dim();
      for (std::size_t i = t.sub_steps.size(); i-- > 0;) {
        auto [dx, dhp] = nn::gru_step_backward(params_, gru_sub_, t.sub_steps[i], dh, grads);
        dh = std::move(dhp);
        grads[subreddit_embedding_].row(t.sub_subreddits[i]) += dx.tail(cfg_.subreddit_dim).transpose();
        static_backward(t.sub_blocks[i], dx.head(fdim), grads);
      }
    }
  }

  void static_backward(const ConvBlockTape& t, const Vector& dfeature, Gradients& grads) const {
    const Matrix dconcat = nn::global_max_backward(dfeature, t.argmax, t.concat.rows());
    const Matrix dx = branches_backward(static_block_, t, dconcat, nullptr, grads);
    accumulate_embedding(t.ids, dx, grads);
  }

 private:
  void build() {
    auto make_block = [&](const std::string& prefix, ConvBlock& block) {
      for (int k : cfg_.branch_kernels) {
        std::vector<ConvLayer> branch;
        Index in = cfg_.word_dim;
        for (std::size_t s = 0; s < cfg_.branch_filters.size(); ++s) {
          ConvLayer l;
          l.kernel = k;
          l.in_channels = in;
          l.out_channels = cfg_.branch_filters[s];
          const std::string name = prefix + "/k" + std::to_string(k) + "/stage" + std::to_string(s);
          l.weight = params_.add(name + "/W", k * in, l.out_channels);
          l.bias = params_.add(name + "/b", 1, l.out_channels);
          branch.push_back(l);
          in = l.out_channels;
        }
        block.branches.push_back(std::move(branch));
      }
    };
    word_embedding_ = params_.add("word_embedding", cfg_.vocab_size, cfg_.word_dim);
    subreddit_embedding_ = params_.add("subreddit_embedding", cfg_.subreddit_count, cfg_.subreddit_dim);
    make_block("static", static_block_);
    make_block("tec", tec_block_);
    Index in = cfg_.feature_dim();
    for (std::size_t i = 0; i < cfg_.tec_tail_filters.size(); ++i) {
      ConvLayer l;
      l.kernel = 1;
      l.in_channels = in;
      l.out_channels = cfg_.tec_tail_filters[i];
      const std::string name = "tec/tail" + std::to_string(i);
      l.weight = params_.add(name + "/W", in, l.out_channels);
      l.bias = params_.add(name + "/b", 1, l.out_channels);
      tec_block_.tail.push_back(l);
      in = l.out_channels;
    }
    std::size_t layer = 0;
    for (const auto* l : tec_layers()) {
      const std::string name = "tec/gain" + std::to_string(layer++);
      GainProjection g;
      g.from_influence = params_.add(name + "/W_G", l->out_channels, cfg_.influence_dim());
      g.from_subreddit = params_.add(name + "/W_V", l->out_channels, cfg_.subreddit_dim);
      g.bias = params_.add(name + "/b", l->out_channels, 1);
      gains_.push_back(g);
    }
    auto make_gru = [&](const std::string& name, Index input) {
      const Index h = cfg_.gru_hidden;
      return nn::GruIds{params_.add(name + "/W", 3 * h, input), params_.add(name + "/U", 3 * h, h),
                        params_.add(name + "/b", 3 * h, 1)};
    };
    gru_news_ = make_gru("gru_news", cfg_.feature_dim());
    gru_sub_ = make_gru("gru_submissions", cfg_.submission_feature_dim());
    const Index h = cfg_.lstm_hidden;
    lstm_ = nn::LstmIds{params_.add("lstm/W", 4 * h, 1), params_.add("lstm/U", 4 * h, h),
                        params_.add("lstm/b", 4 * h, 1)};
    activity_w_ = params_.add("activity/W_R", 1, 1);
    activity_b_ = params_.add("activity/Q_R", 1, 1);
    head_w_ = params_.add("head/W", 1, h + 1);
    head_b_ = params_.add("head/b", 1, 1);
  }

  /// conv (+ optional per-filter gain) -> optional ReLU -> optional maxpool.
  Matrix conv_forward(const ConvLayer& l, const Matrix& x, const Vector* gain, bool relu, bool pool,
                      ConvLayerTape& t) const {
    t.cols = nn::im2col(x, l.kernel);
    if (gain != nullptr) {
      t.static_weight = params_[l.weight];
      t.gain = *gain;
      t.weight = t.static_weight * gain->asDiagonal();
    } else {
      t.weight = params_[l.weight];
      t.static_weight.resize(0, 0);
      t.gain.resize(0);
    }
    t.pre.noalias() = t.cols * t.weight;
    t.pre.rowwise() += params_[l.bias].row(0);
    Matrix act = relu ? Matrix(t.pre.cwiseMax(0.0)) : t.pre;
    if (!pool) return act;
    return nn::max_pool2(act, t.pool);
  }

  Matrix conv_backward(const ConvLayer& l, const ConvLayerTape& t, const Matrix& dout, bool relu,
                       Vector* dgain, Gradients& grads, bool pooled = false) const {
    Matrix dpre = pooled ? nn::max_pool2_backward(dout, t.pool) : dout;
    if (relu) dpre.array() *= (t.pre.array() > 0.0).cast<double>();
    const Matrix dweight = t.cols.transpose() * dpre;
    if (dgain != nullptr) {
      grads[l.weight].noalias() += dweight * t.gain.asDiagonal();
      for (Index f = 0; f < dweight.cols(); ++f) (*dgain)(f) += dweight.col(f).dot(t.static_weight.col(f));
    } else {
      grads[l.weight] += dweight;
    }
    grads[l.bias] += dpre.colwise().sum();
    const Matrix dcols = dpre * t.weight.transpose();
    return nn::col2im(dcols, l.in_channels, l.kernel);
  }

  Matrix run_branches(const ConvBlock& block, const Matrix& x, const std::vector<Vector>* gains,
                      ConvBlockTape& t) const {
    t.branches.assign(block.branches.size(), {});
    std::vector<Matrix> outs;
    std::size_t layer = 0;
    Index cols = 0;
    for (std::size_t b = 0; b < block.branches.size(); ++b) {
      Matrix h = x;
      t.branches[b].resize(block.branches[b].size());
      for (std::size_t s = 0; s < block.branches[b].size(); ++s, ++layer) {
        h = conv_forward(block.branches[b][s], h, gains != nullptr ? &(*gains)[layer] : nullptr,
                         true, true, t.branches[b][s]);
      }
      cols += h.cols();
      outs.push_back(std::move(h));
    }
    Matrix concat(outs.front().rows(), cols);
    Index c = 0;
    for (auto& o : outs) {
      concat.middleCols(c, o.cols()) = o;
      c += o.cols();
    }
    return concat;
  }

  Matrix branches_backward(const ConvBlock& block, const ConvBlockTape& t, const Matrix& dconcat,
                           std::vector<Vector>* dgains, Gradients& grads) const {
    Matrix dx = Matrix::Zero(static_cast<Index>(t.ids.size()), cfg_.word_dim);
    Index c = 0;
    std::size_t layer = 0;
    for (std::size_t b = 0; b < block.branches.size(); ++b) {
      const auto& branch = block.branches[b];
      const Index width = branch.back().out_channels;
      Matrix dh = dconcat.middleCols(c, width);
      c += width;
      const std::size_t first = layer;
      layer += branch.size();
      for (std::size_t s = branch.size(); s-- > 0;) {
        dh = conv_backward(branch[s], t.branches[b][s], dh, true,
                           dgains != nullptr ? &(*dgains)[first + s] : nullptr, grads, true);
      }
      dx += dh;
    }
    return dx;
  }

  void accumulate_embedding(const std::vector<TokenId>& ids, const Matrix& dx, Gradients& grads) const {
    Matrix& de = grads[word_embedding_];
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (ids[p] == Vocabulary::kPad) continue;
      de.row(ids[p]) += dx.row(static_cast<Index>(p));
    }
  }

  void check_prediction(const Prediction& p) const {
    const bool ok = std::isfinite(p.y_hat) && std::isfinite(p.base) && std::isfinite(p.b_tilde) &&
                    p.y_hat >= 0.0 && p.b_tilde >= 0.0 && p.r > 0.0 && p.r < 1.0 &&
                    p.base <= p.b_tilde;
    if (!ok) throw NumericalError("prediction violates output invariants");
  }

  ModelConfig cfg_;
  ParameterSet params_;
  bool checked_ = false;
  ParamId word_embedding_ = 0;
  ParamId subreddit_embedding_ = 0;
  ConvBlock static_block_;
  ConvBlock tec_block_;
  std::vector<GainProjection> gains_;
  nn::GruIds gru_news_{};
  nn::GruIds gru_sub_{};
  nn::LstmIds lstm_{};
  ParamId activity_w_ = 0;
  ParamId activity_b_ = 0;
  ParamId head_w_ = 0;
  ParamId head_b_ = 0;
};

}  // namespace chatternet
