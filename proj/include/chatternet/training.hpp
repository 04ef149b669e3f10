#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatternet/dataset.hpp"
#include "chatternet/embedding.hpp"
#include "chatternet/error.hpp"
#include "chatternet/model.hpp"
#include "chatternet/params.hpp"

namespace chatternet {

struct TrainConfig {
  double learning_rate = 1e-5;
  int epochs = 25;
  int batch_size = 1;
  double epsilon = 1e-7;
  int checkpoint_top_k = 5;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size != 1) throw ConfigError("training is online: batch_size must be 1");
    if (checkpoint_top_k <= 0) throw ConfigError("checkpoint_top_k must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
                     {"batch_size", c.batch_size},       {"epsilon", c.epsilon},
                     {"checkpoint_top_k", c.checkpoint_top_k}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.checkpoint_top_k = j.value("checkpoint_top_k", c.checkpoint_top_k);
  c.seed = j.value("seed", c.seed);
}

/// Mean absolute relative error: mean_j |y_j - yhat_j| / (y_j + eps).
inline double relative_error_loss(std::span<const double> y_true, std::span<const double> y_pred,
                                  double epsilon) {
  if (y_true.size() != y_pred.size()) throw DataError("loss: length mismatch");
  if (y_true.empty()) throw DataError("loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    s += std::abs(y_true[i] - y_pred[i]) / (y_true[i] + epsilon);
  }
  return s / static_cast<double>(y_true.size());
}

/// d/dyhat of one term |y - yhat| / (y + eps).
inline double relative_error_grad(double y_true, double y_pred, double epsilon) {
  const double d = y_pred - y_true;
  const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  return sign / (y_true + epsilon);
}

/// One labelled submission inside a micro-batch.
struct LabelledInput {
  SubmissionInput input;
  double y = 0.0;
};

/// Loss of several submissions that share the influence produced by one
/// interval; with grads it also accumulates the full analytic gradient,
/// including the path back through the interval's aggregation.
inline double microbatch_loss(const ChatterNet& model, const IntervalItems& interval,
                              const InfluenceState& prior, const std::vector<LabelledInput>& batch,
                              double epsilon, Gradients* grads = nullptr) {
  ChatterNet::AggregationTape agg_tape;
  const InfluenceState state = model.aggregate(interval, prior, grads != nullptr ? &agg_tape : nullptr);
  std::vector<double> y;
  std::vector<double> y_hat;
  std::vector<ChatterNet::SubmissionTape> tapes(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    y.push_back(batch[i].y);
    y_hat.push_back(model.forward(batch[i].input, state.g, grads != nullptr ? &tapes[i] : nullptr).y_hat);
  }
  const double loss = relative_error_loss(y, y_hat, epsilon);
  if (grads != nullptr) {
    Vector dg = Vector::Zero(model.config().influence_dim());
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      dg += model.backward(tapes[i], scale * relative_error_grad(y[i], y_hat[i], epsilon), *grads);
    }
    model.backward(agg_tape, dg, *grads);
  }
  return loss;
}

struct ScoredPrediction {
  std::size_t example = 0;
  std::string subreddit;
  double y_true = 0.0;
  std::int64_t count = 0;  // raw comment count C
  double y_hat = 0.0;
  double base = 0.0;
};

/// Forward-only pass over the split's period with hidden states starting
/// from zero at its first interval; submissions in the first warmup
/// intervals of the pass are not scored.
inline std::vector<ScoredPrediction> predict_split(const ChatterNet& model, const Dataset& data,
                                                   Split split, int warmup_intervals) {
  std::vector<ScoredPrediction> out;
  const std::int64_t start = data.first_interval(split);
  InfluenceState state = InfluenceState::zeros(model.config());
  for (const auto& entry : data.timeline()) {
    if (entry.interval < start) continue;
    for (auto i : entry.submissions) {
      const Example& ex = data.examples()[i];
      if (ex.split != split || ex.interval < start + warmup_intervals) continue;
      const Prediction p = model.forward(data.input(ex), state.g);
      out.push_back({i, data.subreddits()[static_cast<std::size_t>(ex.subreddit)], ex.target.y,
                     ex.target.count, p.y_hat, p.base});
    }
    if (model.config().uses_influence()) state = model.aggregate(data.items(entry), state);
  }
  return out;
}

inline double mean_loss(const std::vector<ScoredPrediction>& preds, double epsilon) {
  if (preds.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> y;
  std::vector<double> yh;
  for (const auto& p : preds) {
    y.push_back(p.y_true);
    yh.push_back(p.y_hat);
  }
  return relative_error_loss(y, yh, epsilon);
}

struct EpochSummary {
  int epoch = 0;
  double train_loss = 0.0;  // mean pre-update loss over training submissions
  double val_loss = 0.0;
  std::size_t updates = 0;
  double initial_state_norm = 0.0;  // carried hidden norm when the epoch began
  double seconds = 0.0;
};

/// Online streaming trainer: intervals in order, one forward and one Adam
/// step per training submission, stateful influence within an epoch, reset
/// after validation.
class Trainer {
 public:
  Trainer(ChatterNet& model, const Dataset& data, TrainConfig config)
      : model_(model), data_(data), cfg_(config), grads_(model.params()),
        adam_(model.params(), config.learning_rate) {
    cfg_.validate();
    if (model.config().m != data.config().m) {
      throw ConfigError("model m and data m disagree");
    }
    reset_state();
  }

  const InfluenceState& state() const { return state_; }
  std::int64_t optimizer_steps() const { return adam_.steps(); }
  int epochs_completed() const { return epoch_; }

  void reset_state() { state_ = InfluenceState::zeros(model_.config()); }

  EpochSummary train_epoch() {
    const auto t0 = std::chrono::steady_clock::now();
    EpochSummary summary;
    summary.epoch = ++epoch_;
    summary.initial_state_norm = state_.h_news.norm() + state_.h_sub.norm() + state_.g.norm();

    ChatterNet::AggregationTape tape;
    std::optional<std::int64_t> tape_interval;
    double loss_sum = 0.0;
    const bool influence = model_.config().uses_influence();
    for (const auto& entry : data_.timeline()) {
      const bool has_training = std::any_of(
          entry.submissions.begin(), entry.submissions.end(),
          [&](std::size_t i) { return data_.examples()[i].split == Split::train; });
      if (!has_training && entry.interval > data_.clock().index_of(data_.train_end())) break;
      const bool tape_live = tape_interval && *tape_interval == entry.interval - 1;
      for (auto i : entry.submissions) {
        const Example& ex = data_.examples()[i];
        if (ex.split != Split::train) continue;
        grads_.zero();
        ChatterNet::SubmissionTape st;
        const Prediction p = model_.forward(data_.input(ex), state_.g, &st);
        const double loss = std::abs(ex.target.y - p.y_hat) / (ex.target.y + cfg_.epsilon);
        if (!std::isfinite(loss)) fail_nan(entry.interval, ex);
        loss_sum += loss;
        const Vector dg = model_.backward(st, relative_error_grad(ex.target.y, p.y_hat, cfg_.epsilon), grads_);
        if (tape_live) model_.backward(tape, dg, grads_);
        adam_.step(model_.params(), grads_);
        ++summary.updates;
      }
      if (influence) {
        tape = ChatterNet::AggregationTape{};
        state_ = model_.aggregate(data_.items(entry), state_, &tape);
        tape_interval = entry.interval;
      }
    }
    if (!model_.params().all_finite()) {
      throw NumericalError("non-finite parameters after epoch " + std::to_string(epoch_));
    }
    summary.train_loss = summary.updates > 0 ? loss_sum / static_cast<double>(summary.updates) : 0.0;
    summary.val_loss = mean_loss(predict_split(model_, data_, Split::validation,
                                               data_.config().warmup_intervals),
                                 cfg_.epsilon);
    last_state_ = state_;
    reset_state();
    summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return summary;
  }

  /// Hidden states carried at the end of the last epoch, before the reset.
  const InfluenceState& final_state() const { return last_state_; }

 private:
  [[noreturn]] void fail_nan(std::int64_t interval, const Example& ex) const {
    std::ostringstream msg;
    msg << "non-finite loss at epoch " << epoch_ << ", interval " << interval << ", submission "
        << data_.corpus().submissions[ex.submission].id << "; |h_news|=" << state_.h_news.norm()
        << " |h_sub|=" << state_.h_sub.norm() << " params finite=" << model_.params().all_finite();
    throw NumericalError(msg.str());
  }

  ChatterNet& model_;
  const Dataset& data_;
  TrainConfig cfg_;
  Gradients grads_;
  Adam adam_;
  InfluenceState state_;
  InfluenceState last_state_;
  int epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints

namespace fs = std::filesystem;

/// Writes via a temporary sibling and rename.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + ": " + ec.message());
}

struct CheckpointEntry {
  double val_loss = 0.0;
  std::string path;
  int epoch = 0;
};

/// Top-k checkpoints by validation loss, ascending.
class CheckpointLedger {
 public:
  explicit CheckpointLedger(std::size_t capacity = 5) : capacity_(capacity) {}

  const std::vector<CheckpointEntry>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }

  bool qualifies(double val_loss) const {
    return entries_.size() < capacity_ || val_loss < entries_.back().val_loss;
  }

  /// Inserts when among the best; returns the evicted entry, if any. Ties
  /// keep the earlier checkpoint ahead.
  std::optional<CheckpointEntry> insert(CheckpointEntry entry) {
    if (!std::isfinite(entry.val_loss)) throw NumericalError("checkpoint with non-finite validation loss");
    if (!qualifies(entry.val_loss)) return std::nullopt;
    auto pos = std::upper_bound(entries_.begin(), entries_.end(), entry.val_loss,
                                [](double v, const CheckpointEntry& e) { return v < e.val_loss; });
    entries_.insert(pos, std::move(entry));
    if (entries_.size() > capacity_) {
      CheckpointEntry evicted = entries_.back();
      entries_.pop_back();
      return evicted;
    }
    return std::nullopt;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"capacity", capacity_}, {"entries", nlohmann::json::array()}};
    for (const auto& e : entries_) {
      j["entries"].push_back({{"val_loss", e.val_loss}, {"path", e.path}, {"epoch", e.epoch}});
    }
    return j;
  }

  static CheckpointLedger from_json(const nlohmann::json& j) {
    CheckpointLedger l(j.at("capacity").get<std::size_t>());
    for (const auto& e : j.at("entries")) {
      l.entries_.push_back({e.at("val_loss").get<double>(), e.at("path").get<std::string>(),
                            e.value("epoch", 0)});
    }
    return l;
  }

  void save(const fs::path& path) const { write_file_atomic(path, to_json().dump(2) + "\n"); }

  static CheckpointLedger load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read checkpoint ledger " + path.string());
    return from_json(nlohmann::json::parse(in));
  }

 private:
  std::size_t capacity_;
  std::vector<CheckpointEntry> entries_;
};

/// Checkpoint directory: config.json (model config), params.bin (see
/// ParameterSet::save), hidden.bin (2 x gru_hidden matrix: news, submission
/// hidden) and record.json (epoch, train/validation loss).
inline void save_checkpoint(const fs::path& dir, const ChatterNet& model, const InfluenceState& hidden,
                            const EpochSummary& summary) {
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  {
    std::ofstream cfg(tmp / "config.json");
    cfg << nlohmann::json(model.config()).dump(2) << '\n';
  }
  model.params().save((tmp / "params.bin").string());
  Matrix h(2, model.config().gru_hidden);
  h.row(0) = hidden.h_news.transpose();
  h.row(1) = hidden.h_sub.transpose();
  save_matrix((tmp / "hidden.bin").string(), h);
  {
    std::ofstream rec(tmp / "record.json");
    rec << nlohmann::json{{"epoch", summary.epoch},
                          {"train_loss", summary.train_loss},
                          {"val_loss", summary.val_loss}}
               .dump(2)
        << '\n';
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

inline ChatterNet load_checkpoint(const fs::path& dir) {
  std::ifstream cfg_in(dir / "config.json");
  if (!cfg_in) throw DataError("missing checkpoint config in " + dir.string());
  const ModelConfig cfg = nlohmann::json::parse(cfg_in).get<ModelConfig>();
  ChatterNet model(cfg);
  model.params().load((dir / "params.bin").string());
  return model;
}

/// Adds the model to the ledger when it is among the best, persisting the
/// checkpoint and ledger and deleting any evicted checkpoint.
inline bool checkpoint(CheckpointLedger& ledger, const fs::path& run_dir, const ChatterNet& model,
                       const InfluenceState& hidden, const EpochSummary& summary) {
  if (!ledger.qualifies(summary.val_loss)) return false;
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%03d", summary.epoch);
  const fs::path dir = run_dir / "checkpoints" / name;
  fs::create_directories(dir.parent_path());
  save_checkpoint(dir, model, hidden, summary);
  auto evicted = ledger.insert({summary.val_loss, (fs::path("checkpoints") / name).string(), summary.epoch});
  if (evicted) fs::remove_all(run_dir / evicted->path);
  ledger.save(run_dir / "ledger.json");
  return true;
}

/// Mean of per-model predictions for the split.
inline std::vector<ScoredPrediction> ensemble_predict(const std::vector<const ChatterNet*>& models,
                                                      const Dataset& data, Split split,
                                                      int warmup_intervals) {
  if (models.empty()) throw DataError("ensemble needs at least one checkpoint");
  std::vector<ScoredPrediction> mean = predict_split(*models.front(), data, split, warmup_intervals);
  for (std::size_t m = 1; m < models.size(); ++m) {
    const auto preds = predict_split(*models[m], data, split, warmup_intervals);
    for (std::size_t i = 0; i < mean.size(); ++i) {
      mean[i].y_hat += preds[i].y_hat;
      mean[i].base += preds[i].base;
    }
  }
  const auto n = static_cast<double>(models.size());
  for (auto& p : mean) {
    p.y_hat /= n;
    p.base /= n;
  }
  return mean;
}

inline std::vector<ChatterNet> load_ensemble(const fs::path& run_dir) {
  const auto ledger = CheckpointLedger::load(run_dir / "ledger.json");
  if (ledger.empty()) throw DataError("no checkpoints recorded in " + run_dir.string());
  std::vector<ChatterNet> models;
  for (const auto& e : ledger.entries()) models.push_back(load_checkpoint(run_dir / e.path));
  return models;
}

/// Runs the full protocol, checkpointing the top-k epochs and appending
/// "epoch,train_loss,val_loss,seconds" rows to epoch_log.csv.
inline CheckpointLedger train_run(ChatterNet& model, const Dataset& data, const TrainConfig& config,
                                  const fs::path& run_dir,
                                  const std::function<void(const EpochSummary&)>& on_epoch = {}) {
  fs::create_directories(run_dir);
  Trainer trainer(model, data, config);
  CheckpointLedger ledger(static_cast<std::size_t>(config.checkpoint_top_k));
  std::ofstream log(run_dir / "epoch_log.csv");
  log << "epoch,train_loss,val_loss,seconds\n";
  for (int e = 0; e < config.epochs; ++e) {
    const EpochSummary s = trainer.train_epoch();
    log << s.epoch << ',' << s.train_loss << ',' << s.val_loss << ',' << s.seconds << '\n';
    log.flush();
    if (std::isfinite(s.val_loss)) {
      checkpoint(ledger, run_dir, model, trainer.final_state(), s);
    }
    if (on_epoch) on_epoch(s);
  }
  if (ledger.empty()) throw DataError("no finite validation loss: validation split is empty");
  return ledger;
}

}  // namespace chatternet
